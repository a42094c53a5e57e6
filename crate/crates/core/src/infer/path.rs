use std::collections::HashMap;

use super::{edge_bound, path_matrix, BoundMode, EdgeBound, InferConfig};
use crate::align::JointModel;
use crate::embed::EmbeddingSpace;
use crate::graph::{AlignmentGraph, RelPair};
use crate::linalg::{self, Matrix};
use crate::par::Exec;
use crate::rng;

/// `||M sum r_tilde - sum r_tilde'|| + sum (d + d')` over the hops of a path,
/// hop `k` given as its left and right bounds.
pub fn path_difference(m: &Matrix, hops: &[(EdgeBound, EdgeBound)]) -> f64 {
    let dim = m.rows();
    let mut left = vec![0.0; m.cols()];
    let mut right = vec![0.0; dim];
    let mut radius = 0.0;
    for (l, r) in hops {
        linalg::axpy(1.0, &l.r_tilde, &mut left);
        linalg::axpy(1.0, &r.r_tilde, &mut right);
        radius += l.d + r.d;
    }
    linalg::distance(&m.matvec(&left), &right) + radius
}

/// Per alignment-graph edge, the mapped difference `M r_tilde - r_tilde'` and
/// the summed radius. Only relation edges take part in path search.
#[derive(Debug, Clone, Default)]
pub struct EdgeDiffs {
    delta: Vec<Vec<f64>>,
    radius: Vec<f64>,
    usable: Vec<bool>,
    /// Generic bounds whose minimization did not converge.
    pub unconverged: usize,
}

fn bounds_for(
    space: &EmbeddingSpace,
    keys: &[(usize, usize)],
    mode: BoundMode,
    m: usize,
    seed: u64,
    tag: &str,
    exec: Exec,
) -> HashMap<(usize, usize), EdgeBound> {
    let nr = space.num_relations() as u64;
    let vals = exec.map_slice(keys, |&(h, r)| {
        let mut rng = rng::stream(seed, tag, h as u64 * nr + r as u64);
        edge_bound(space, h, r, mode, m, &mut rng)
    });
    keys.iter().copied().zip(vals).collect()
}

impl EdgeDiffs {
    pub fn compute(graph: &AlignmentGraph, jm: &JointModel, cfg: &InferConfig, seed: u64, exec: Exec) -> Self {
        let mut lk = Vec::new();
        let mut rk = Vec::new();
        for e in graph.edges() {
            if let RelPair::Rel(r, r2) = e.rel {
                let p = graph.node(e.src);
                lk.push((p.left, r));
                rk.push((p.right, r2));
            }
        }
        for k in [&mut lk, &mut rk] {
            k.sort_unstable();
            k.dedup();
        }
        let lb = bounds_for(&jm.left, &lk, cfg.bounds, cfg.samples, seed, "bound-left", exec);
        let rb = bounds_for(&jm.right, &rk, cfg.bounds, cfg.samples, seed, "bound-right", exec);
        let unconverged = lb.values().chain(rb.values()).filter(|b| !b.converged).count();
        let m = path_matrix(&jm.align, cfg.path_map);
        let rows = exec.map_slice(graph.edges(), |e| match e.rel {
            RelPair::Rel(r, r2) => {
                let p = graph.node(e.src);
                let (l, rr) = (&lb[&(p.left, r)], &rb[&(p.right, r2)]);
                (linalg::sub(&m.matvec(&l.r_tilde), &rr.r_tilde), l.d + rr.d, true)
            }
            _ => (Vec::new(), 0.0, false),
        });
        let mut d = EdgeDiffs {
            unconverged,
            ..EdgeDiffs::default()
        };
        for (v, r, u) in rows {
            d.delta.push(v);
            d.radius.push(r);
            d.usable.push(u);
        }
        d
    }

    /// Diffs given directly, one entry per graph edge; `None` marks an edge
    /// that paths may not use.
    pub fn from_parts(parts: Vec<Option<(Vec<f64>, f64)>>) -> Self {
        let mut d = EdgeDiffs::default();
        for p in parts {
            match p {
                Some((v, r)) => {
                    d.delta.push(v);
                    d.radius.push(r);
                    d.usable.push(true);
                }
                None => {
                    d.delta.push(Vec::new());
                    d.radius.push(0.0);
                    d.usable.push(false);
                }
            }
        }
        d
    }

    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }

    pub fn delta(&self, i: usize) -> &[f64] {
        &self.delta[i]
    }

    pub fn radius(&self, i: usize) -> f64 {
        self.radius[i]
    }

    pub fn is_usable(&self, i: usize) -> bool {
        self.usable[i]
    }

    /// One-hop power `1 / (1 + D)` of edge `i`; 0 for edges paths skip.
    pub fn edge_power(&self, i: usize) -> f64 {
        if !self.usable[i] {
            return 0.0;
        }
        1.0 / (1.0 + linalg::norm(&self.delta[i]) + self.radius[i])
    }
}

struct State {
    node: usize,
    path: Vec<usize>,
    sum: Vec<f64>,
    radius: f64,
}

/// Bounded-hop search for the path with the smallest total difference.
#[derive(Clone, Copy)]
pub struct PathSearch<'a> {
    pub graph: &'a AlignmentGraph,
    pub diffs: &'a EdgeDiffs,
    pub mu: usize,
    pub beam: Option<usize>,
}

impl<'a> PathSearch<'a> {
    pub fn new(graph: &'a AlignmentGraph, diffs: &'a EdgeDiffs, cfg: &InferConfig) -> Self {
        PathSearch {
            graph,
            diffs,
            mu: cfg.mu,
            beam: cfg.beam,
        }
    }

    /// Best power from `src` to every node reachable within the hop limit,
    /// sorted by node. `allowed`, when given, masks edges by index.
    pub fn from_source(&self, src: usize, allowed: Option<&[bool]>) -> Vec<(usize, f64)> {
        let mut best: HashMap<usize, f64> = HashMap::new();
        let dim = (0..self.diffs.len())
            .find(|&i| self.diffs.is_usable(i))
            .map_or(0, |i| self.diffs.delta(i).len());
        let mut states = vec![State {
            node: src,
            path: vec![src],
            sum: vec![0.0; dim],
            radius: 0.0,
        }];
        for _ in 0..self.mu {
            let mut next: Vec<(f64, State)> = Vec::new();
            for s in &states {
                for ei in self.graph.out_range(s.node) {
                    if !self.diffs.is_usable(ei) || allowed.is_some_and(|a| !a[ei]) {
                        continue;
                    }
                    let dst = self.graph.edges()[ei].dst;
                    if s.path.contains(&dst) {
                        continue;
                    }
                    let mut sum = s.sum.clone();
                    linalg::axpy(1.0, self.diffs.delta(ei), &mut sum);
                    let radius = s.radius + self.diffs.radius(ei);
                    let d = linalg::norm(&sum) + radius;
                    let p = 1.0 / (1.0 + d);
                    let b = best.entry(dst).or_insert(0.0);
                    if p > *b {
                        *b = p;
                    }
                    let mut path = s.path.clone();
                    path.push(dst);
                    next.push((d, State { node: dst, path, sum, radius }));
                }
            }
            if next.is_empty() {
                break;
            }
            if let Some(w) = self.beam {
                if next.len() > w {
                    next.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.node.cmp(&b.1.node)));
                    next.truncate(w);
                }
            }
            states = next.into_iter().map(|(_, s)| s).collect();
        }
        let mut out: Vec<(usize, f64)> = best.into_iter().collect();
        out.sort_unstable_by_key(|x| x.0);
        out
    }

    /// Power from `src` to `dst`; 0 when no path within the hop limit.
    pub fn pair_to_pair(&self, src: usize, dst: usize) -> f64 {
        self.from_source(src, None)
            .into_iter()
            .find(|x| x.0 == dst)
            .map_or(0.0, |x| x.1)
    }
}
