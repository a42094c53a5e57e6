//! Candidate pool generation and batch selection.

mod gain;
mod partition;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::align::{DerivedFeatures, JointModel};
use crate::kg::{Dataset, ElementKind, ElementPair, KnowledgeGraph, Side};
use crate::linalg;
use crate::par::Exec;

pub use gain::{batch_probability, greedy_select, GainState, GreedyMode, Selected};
pub use partition::{cross_partition_mask, partition_pool, Partition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectConfig {
    /// Batch budget.
    pub budget: usize,
    /// Partition threshold.
    pub rho: f64,
    /// Nearest neighbors per entity when building the pool.
    pub neighbors: usize,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig {
            budget: 100,
            rho: 0.9,
            neighbors: 20,
        }
    }
}

impl SelectConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(format!("rho must lie in (0, 1], got {}", self.rho));
        }
        if self.neighbors == 0 {
            return Err("neighbors must be at least 1".into());
        }
        Ok(())
    }
}

fn weighted_mean<'a>(dim: usize, items: impl Iterator<Item = (f64, &'a [f64])>) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    let mut total = 0.0;
    for (w, v) in items {
        let w = w.max(0.0);
        if w > 0.0 {
            linalg::axpy(w, v, &mut acc);
            total += w;
        }
    }
    if total > 0.0 {
        linalg::scale(&mut acc, 1.0 / total);
    }
    acc
}

/// Weighted mean of the mean embeddings of the entity's distinct outgoing
/// relations (inverses included), then the weighted mean of the mean
/// embeddings of its classes. Negative weights count as zero; a half with no
/// positive weight is the zero vector.
pub fn schema_signature(kg: &KnowledgeGraph, f: &DerivedFeatures, side: Side, ent: usize) -> Vec<f64> {
    let (rbar, cbar, wr, wc) = match side {
        Side::Left => (&f.rbar_left, &f.cbar_left, &f.wr_left, &f.wc_left),
        Side::Right => (&f.rbar_right, &f.cbar_right, &f.wr_right, &f.wc_right),
    };
    let dim = rbar.cols();
    let mut rels: Vec<usize> = kg.out_edges(ent).iter().map(|&(r, _)| r).collect();
    rels.sort_unstable();
    rels.dedup();
    let mut sig = weighted_mean(dim, rels.iter().map(|&r| (wr[r], rbar.row(r))));
    sig.extend(weighted_mean(dim, kg.classes_of(ent).iter().map(|&c| (wc[c], cbar.row(c)))));
    sig
}

/// Signatures of all entities of one side; left signatures are mapped into
/// the right space half by half with the entity mapping matrix.
pub fn signatures(jm: &JointModel, ds: &Dataset, f: &DerivedFeatures, side: Side, exec: Exec) -> Vec<Vec<f64>> {
    let kg = ds.kg(side);
    exec.map_range(kg.num_entities(), |e| {
        let s = schema_signature(kg, f, side, e);
        match side {
            Side::Right => s,
            Side::Left => {
                let d = s.len() / 2;
                let mut m = jm.align.a_ent.matvec(&s[..d]);
                m.extend(jm.align.a_ent.matvec(&s[d..]));
                m
            }
        }
    })
}

fn top_n(scores: impl Iterator<Item = (usize, f64)>, n: usize) -> Vec<usize> {
    let mut v: Vec<(usize, f64)> = scores.collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v.truncate(n);
    v.into_iter().map(|x| x.0).collect()
}

/// Entity pairs that are mutual top-`n` neighbors by signature cosine, plus
/// every base relation pair and every class pair. Entities in the exclusion
/// sets and entities whose signature is all zeros take no part.
pub fn generate_pool(
    jm: &JointModel,
    ds: &Dataset,
    f: &DerivedFeatures,
    n: usize,
    exclude_left: &HashSet<usize>,
    exclude_right: &HashSet<usize>,
    exec: Exec,
) -> Vec<ElementPair> {
    let sl = signatures(jm, ds, f, Side::Left, exec);
    let sr = signatures(jm, ds, f, Side::Right, exec);
    let defined = |s: &Vec<f64>| s.iter().any(|&x| x != 0.0);
    let left: Vec<usize> = (0..sl.len()).filter(|e| !exclude_left.contains(e) && defined(&sl[*e])).collect();
    let right: Vec<usize> = (0..sr.len()).filter(|e| !exclude_right.contains(e) && defined(&sr[*e])).collect();
    let sims: Vec<Vec<f64>> = exec.map_slice(&left, |&i| right.iter().map(|&j| linalg::cosine(&sl[i], &sr[j])).collect());
    let from_left: Vec<Vec<usize>> = exec.map_range(left.len(), |a| top_n(sims[a].iter().copied().enumerate(), n));
    let from_right: Vec<HashSet<usize>> = exec.map_range(right.len(), |b| {
        top_n((0..left.len()).map(|a| (a, sims[a][b])), n).into_iter().collect()
    });
    let mut pool = Vec::new();
    for (a, tops) in from_left.iter().enumerate() {
        for &b in tops {
            if from_right[b].contains(&a) {
                pool.push(ElementPair::entity(left[a], right[b]));
            }
        }
    }
    for r in ds.kg1.candidates(ElementKind::Relation) {
        for r2 in ds.kg2.candidates(ElementKind::Relation) {
            pool.push(ElementPair::relation(r, r2));
        }
    }
    for c in ds.kg1.candidates(ElementKind::Class) {
        for c2 in ds.kg2.candidates(ElementKind::Class) {
            pool.push(ElementPair::class(c, c2));
        }
    }
    pool.sort_unstable();
    pool
}
