use rand::seq::SliceRandom;

use crate::graph::AlignmentGraph;
use crate::rng::Rng;

fn top_by(cands: &[usize], budget: usize, score: impl Fn(usize) -> f64) -> Vec<usize> {
    let mut v: Vec<(usize, f64)> = cands.iter().map(|&q| (q, score(q))).collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v.truncate(budget);
    v.into_iter().map(|x| x.0).collect()
}

pub fn random_select(cands: &[usize], budget: usize, rng: &mut Rng) -> Vec<usize> {
    let mut v = cands.to_vec();
    v.sort_unstable();
    v.shuffle(rng);
    v.truncate(budget);
    v
}

pub fn degree_select(graph: &AlignmentGraph, cands: &[usize], budget: usize) -> Vec<usize> {
    top_by(cands, budget, |q| graph.degree(q) as f64)
}

/// Power iteration over the alignment graph; nodes without out-edges spread
/// their mass uniformly.
pub fn pagerank(graph: &AlignmentGraph, damping: f64, iterations: usize) -> Vec<f64> {
    let n = graph.num_nodes();
    if n == 0 {
        return Vec::new();
    }
    let mut pr = vec![1.0 / n as f64; n];
    for _ in 0..iterations {
        let mut next = vec![(1.0 - damping) / n as f64; n];
        let mut dangling = 0.0;
        for (q, &mass) in pr.iter().enumerate() {
            let out = graph.out(q);
            if out.is_empty() {
                dangling += mass;
            } else {
                let share = damping * mass / out.len() as f64;
                for e in out {
                    next[e.dst] += share;
                }
            }
        }
        let spread = damping * dangling / n as f64;
        for x in &mut next {
            *x += spread;
        }
        pr = next;
    }
    pr
}

pub fn pagerank_select(graph: &AlignmentGraph, cands: &[usize], budget: usize) -> Vec<usize> {
    let pr = pagerank(graph, 0.85, 50);
    top_by(cands, budget, |q| pr[q])
}

pub fn binary_entropy(p: f64) -> f64 {
    let h = |x: f64| if x > 0.0 { -x * x.ln() } else { 0.0 };
    h(p) + h(1.0 - p)
}

/// `probs` is indexed by graph node.
pub fn uncertainty_select(probs: &[f64], cands: &[usize], budget: usize) -> Vec<usize> {
    top_by(cands, budget, |q| binary_entropy(probs[q]))
}
