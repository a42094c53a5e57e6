use std::collections::HashMap;

use super::{AlignConfig, SimCache};
use crate::kg::{ElementKind, ElementPair};
use crate::linalg;
use crate::par::Exec;

/// `softmax(S / Z)` over one element's candidates.
pub fn directional_softmax(sims: &[f64], z: f64) -> Vec<f64> {
    let logits: Vec<f64> = sims.iter().map(|s| s / z).collect();
    linalg::softmax(&logits)
}

/// Pool-restricted candidate lists per element, per side.
#[derive(Debug, Clone, Default)]
pub struct CandidateSets {
    /// `(kind, left) -> right candidates`
    pub of_left: HashMap<(ElementKind, usize), Vec<usize>>,
    /// `(kind, right) -> left candidates`
    pub of_right: HashMap<(ElementKind, usize), Vec<usize>>,
}

impl CandidateSets {
    pub fn from_pool(pool: &[ElementPair]) -> Self {
        let mut c = CandidateSets::default();
        for p in pool {
            c.of_left.entry((p.kind, p.left)).or_default().push(p.right);
            c.of_right.entry((p.kind, p.right)).or_default().push(p.left);
        }
        for v in c.of_left.values_mut().chain(c.of_right.values_mut()) {
            v.sort_unstable();
            v.dedup();
        }
        c
    }
}

fn log_sum_exp(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `min(Pr[right | left], Pr[left | right])`, each a temperature softmax over
/// the pool candidates of that element (the pair itself always included).
pub fn match_probability(
    sim: impl Fn(usize, usize) -> f64,
    pair: &ElementPair,
    right_cands: &[usize],
    left_cands: &[usize],
    z: f64,
) -> f64 {
    let s = sim(pair.left, pair.right) / z;
    let with = |c: &[usize], me: usize| {
        let mut v = c.to_vec();
        if !v.contains(&me) {
            v.push(me);
        }
        v
    };
    let lse1 = log_sum_exp(with(right_cands, pair.right).into_iter().map(|r| sim(pair.left, r) / z));
    let lse2 = log_sum_exp(with(left_cands, pair.left).into_iter().map(|l| sim(l, pair.right) / z));
    (s - lse1).exp().min((s - lse2).exp()).clamp(0.0, 1.0)
}

/// Match probability of every pool pair.
pub fn pool_probabilities(cache: &SimCache, cfg: &AlignConfig, pool: &[ElementPair], exec: Exec) -> Vec<f64> {
    let cands = CandidateSets::from_pool(pool);
    let lse_of = |kind: ElementKind, left: bool, id: usize| {
        let z = cfg.temperature(kind);
        if left {
            let c = &cands.of_left[&(kind, id)];
            log_sum_exp(c.iter().map(|&r| cache.sim(kind, id, r) / z))
        } else {
            let c = &cands.of_right[&(kind, id)];
            log_sum_exp(c.iter().map(|&l| cache.sim(kind, l, id) / z))
        }
    };
    let mut lkeys: Vec<(ElementKind, usize)> = cands.of_left.keys().copied().collect();
    lkeys.sort_unstable();
    let mut rkeys: Vec<(ElementKind, usize)> = cands.of_right.keys().copied().collect();
    rkeys.sort_unstable();
    let lv = exec.map_slice(&lkeys, |&(k, i)| lse_of(k, true, i));
    let rv = exec.map_slice(&rkeys, |&(k, i)| lse_of(k, false, i));
    let lmap: HashMap<_, _> = lkeys.into_iter().zip(lv).collect();
    let rmap: HashMap<_, _> = rkeys.into_iter().zip(rv).collect();
    exec.map_slice(pool, |p| {
        let s = cache.sim_pair(p) / cfg.temperature(p.kind);
        let a = (s - lmap[&(p.kind, p.left)]).exp();
        let b = (s - rmap[&(p.kind, p.right)]).exp();
        a.min(b).clamp(0.0, 1.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_and_uniform() {
        let p = ElementPair::entity(0, 0);
        assert!((match_probability(|_, _| 0.3, &p, &[0], &[0], 0.05) - 1.0).abs() < 1e-12);
        let u = match_probability(|_, _| 0.3, &p, &[0, 1, 2, 3], &[0, 1, 2, 3], 0.05);
        assert!((u - 0.25).abs() < 1e-12);
        let s: f64 = directional_softmax(&[0.1, 0.9, -0.4], 0.1).iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}
