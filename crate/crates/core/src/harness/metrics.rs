use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{greedy_matching, SimCache};
use crate::kg::{Dataset, ElementKind};
use crate::par::Exec;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KindMetrics {
    /// Evaluated gold pairs.
    pub count: usize,
    pub hits1: f64,
    pub hits10: f64,
    pub mrr: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub entity: KindMetrics,
    pub relation: KindMetrics,
    pub class: KindMetrics,
}

impl MetricsReport {
    pub fn of_kind(&self, kind: ElementKind) -> &KindMetrics {
        match kind {
            ElementKind::Entity => &self.entity,
            ElementKind::Relation => &self.relation,
            ElementKind::Class => &self.class,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("the entity test split is empty")]
    EmptyTestSplit,
}

/// Pairs to evaluate per kind, plus the candidate sets to rank against.
#[derive(Debug, Clone, Default)]
pub struct EvalSplit {
    pub entity: Vec<(usize, usize)>,
    pub relation: Vec<(usize, usize)>,
    pub class: Vec<(usize, usize)>,
}

impl EvalSplit {
    pub fn of_kind(&self, kind: ElementKind) -> &[(usize, usize)] {
        match kind {
            ElementKind::Entity => &self.entity,
            ElementKind::Relation => &self.relation,
            ElementKind::Class => &self.class,
        }
    }
}

/// `(H@1, H@10, MRR)` of gold `pairs`, each ranked against `right`. The rank
/// counts candidates scoring strictly higher than the gold one.
pub fn ranking_metrics(sim: impl Fn(usize, usize) -> f64 + Sync, pairs: &[(usize, usize)], right: &[usize], exec: Exec) -> (f64, f64, f64) {
    if pairs.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let ranks = exec.map_slice(pairs, |&(l, r)| {
        let s = sim(l, r);
        1 + right.iter().filter(|&&c| c != r && sim(l, c) > s).count()
    });
    let n = pairs.len() as f64;
    let h1 = ranks.iter().filter(|&&k| k <= 1).count() as f64 / n;
    let h10 = ranks.iter().filter(|&&k| k <= 10).count() as f64 / n;
    let mrr = ranks.iter().map(|&k| 1.0 / k as f64).sum::<f64>() / n;
    (h1, h10, mrr)
}

/// Precision, recall and F1 of a greedy one-to-one matching between the left
/// elements of `pairs` and `right`, keeping scores strictly above `floor`.
pub fn greedy_prf(
    sim: impl Fn(usize, usize) -> f64 + Sync,
    pairs: &[(usize, usize)],
    right: &[usize],
    floor: f64,
    exec: Exec,
) -> (f64, f64, f64) {
    if pairs.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let mut left: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    left.sort_unstable();
    left.dedup();
    let rows = exec.map_slice(&left, |&l| right.iter().map(|&r| (l, r, sim(l, r))).collect::<Vec<_>>());
    let cands: Vec<(usize, usize, f64)> = rows.into_iter().flatten().collect();
    let matched = greedy_matching(cands, floor, &HashSet::new(), &HashSet::new());
    let gold: HashSet<(usize, usize)> = pairs.iter().copied().collect();
    let correct = matched.iter().filter(|m| gold.contains(&(m.0, m.1))).count() as f64;
    let p = if matched.is_empty() { 0.0 } else { correct / matched.len() as f64 };
    let r = correct / gold.len() as f64;
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

pub fn evaluate_kind(cache: &SimCache, ds: &Dataset, kind: ElementKind, pairs: &[(usize, usize)], floor: f64, exec: Exec) -> KindMetrics {
    let right = ds.kg2.candidates(kind);
    let sim = |l: usize, r: usize| cache.sim(kind, l, r);
    let (hits1, hits10, mrr) = ranking_metrics(sim, pairs, &right, exec);
    let (precision, recall, f1) = greedy_prf(sim, pairs, &right, floor, exec);
    KindMetrics {
        count: pairs.len(),
        hits1,
        hits10,
        mrr,
        precision,
        recall,
        f1,
    }
}

pub fn evaluate(cache: &SimCache, ds: &Dataset, split: &EvalSplit, floor: f64, exec: Exec) -> Result<MetricsReport, EvalError> {
    if split.entity.is_empty() {
        return Err(EvalError::EmptyTestSplit);
    }
    Ok(MetricsReport {
        entity: evaluate_kind(cache, ds, ElementKind::Entity, &split.entity, floor, exec),
        relation: evaluate_kind(cache, ds, ElementKind::Relation, &split.relation, floor, exec),
        class: evaluate_kind(cache, ds, ElementKind::Class, &split.class, floor, exec),
    })
}
