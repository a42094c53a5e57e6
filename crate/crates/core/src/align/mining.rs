use std::collections::HashSet;

use super::{LabeledSets, SimCache};
use crate::kg::{ElementKind, ElementPair};

/// One-to-one matching by descending score: sweep the candidates strictly
/// above `floor`, keeping a pair when neither endpoint is used yet. Ties are
/// broken by `(left, right)`.
pub fn greedy_matching(
    mut cands: Vec<(usize, usize, f64)>,
    floor: f64,
    used_left: &HashSet<usize>,
    used_right: &HashSet<usize>,
) -> Vec<(usize, usize, f64)> {
    cands.retain(|c| c.2 > floor);
    cands.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut ul = used_left.clone();
    let mut ur = used_right.clone();
    let mut out = Vec::new();
    for (l, r, s) in cands {
        if ul.contains(&l) || ur.contains(&r) {
            continue;
        }
        ul.insert(l);
        ur.insert(r);
        out.push((l, r, s));
    }
    out
}

/// Conflict-free set of unlabeled pool pairs whose similarity exceeds `tau`,
/// each carrying its similarity at mining time as soft label. Elements
/// already in a labeled match are not mined again.
pub fn semi_supervised_mine(cache: &SimCache, pool: &[ElementPair], labels: &LabeledSets, tau: f64) -> Vec<(ElementPair, f64)> {
    let mut out = Vec::new();
    for kind in ElementKind::ALL {
        let cands: Vec<(usize, usize, f64)> = pool
            .iter()
            .filter(|p| p.kind == kind && !labels.contains(p))
            .map(|p| (p.left, p.right, cache.sim_pair(p)))
            .collect();
        let used_left: HashSet<usize> = labels.matches_of(kind).map(|p| p.left).collect();
        let used_right: HashSet<usize> = labels.matches_of(kind).map(|p| p.right).collect();
        out.extend(
            greedy_matching(cands, tau, &used_left, &used_right)
                .into_iter()
                .map(|(l, r, s)| (ElementPair { kind, left: l, right: r }, s)),
        );
    }
    out
}
