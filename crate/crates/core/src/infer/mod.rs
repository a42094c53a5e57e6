//! Inference powers: how strongly labeling one pair as a match lets the
//! model conclude that another pair matches too.
//!
//! Entity-to-entity powers come from embedding-difference bounds summed along
//! alignment-graph paths; class and relation targets use gradient norms of
//! their similarity.

mod path;
mod table;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::embed::{EmbeddingSpace, ModelKind};
use crate::linalg::{self, Matrix};
use crate::rng::Rng;

pub use path::{path_difference, EdgeDiffs, PathSearch};
pub use table::{
    overall_power, pair_to_class_gradient, pair_to_relation_gradient, squash, write_power_table, InferContext,
    PowerTable,
};

/// Which mapping matrix carries left-side differences into the right space
/// when summing along a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathMap {
    #[default]
    Relation,
    Entity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundMode {
    /// Closed forms for TransE and RotatE.
    #[default]
    Closed,
    /// Sampled minimization of the scoring function over the tail.
    Generic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferConfig {
    /// Hop limit.
    pub mu: usize,
    /// States kept per hop; `None` searches exhaustively.
    pub beam: Option<usize>,
    pub kappa: f64,
    /// Samples per bound in generic mode.
    pub samples: usize,
    pub bounds: BoundMode,
    pub path_map: PathMap,
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig {
            mu: 5,
            beam: Some(64),
            kappa: 0.8,
            samples: 8,
            bounds: BoundMode::Closed,
            path_map: PathMap::Relation,
        }
    }
}

impl InferConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.mu == 0 {
            return Err("mu must be at least 1".into());
        }
        if self.beam == Some(0) {
            return Err("beam must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.kappa) {
            return Err(format!("kappa must lie in [0, 1), got {}", self.kappa));
        }
        if self.samples == 0 {
            return Err("samples must be at least 1".into());
        }
        Ok(())
    }
}

/// `tail ~ head + r_tilde` up to radius `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeBound {
    pub r_tilde: Vec<f64>,
    pub d: f64,
    /// False when a generic minimization hit its iteration cap.
    pub converged: bool,
}

const MIN_ITERS: usize = 500;

/// Minimizes `f_er(head, rel, x)` over `x` starting at `x0` by descent on
/// `f^2 / 2`, whose gradient is `x - target` for both scoring functions.
fn minimize_tail(space: &EmbeddingSpace, head: usize, rel: usize, x0: &[f64]) -> (Vec<f64>, bool) {
    let target = space.project(head, rel);
    let mut x = x0.to_vec();
    for _ in 0..MIN_ITERS {
        let g = linalg::sub(&x, &target);
        if linalg::norm(&g) < 1e-12 {
            return (x, true);
        }
        linalg::axpy(-0.5, &g, &mut x);
    }
    let ok = space.score_er_at(head, rel, &x) < 1e-9;
    (x, ok)
}

pub fn edge_bound(space: &EmbeddingSpace, head: usize, rel: usize, mode: BoundMode, m: usize, rng: &mut Rng) -> EdgeBound {
    let e = space.entity(head);
    match (mode, space.kind()) {
        (BoundMode::Closed, ModelKind::TransE) => EdgeBound {
            r_tilde: space.relation_vector(rel),
            d: 0.0,
            converged: true,
        },
        (BoundMode::Closed, ModelKind::RotatE) => EdgeBound {
            r_tilde: linalg::sub(&space.project(head, rel), e),
            d: 0.0,
            converged: true,
        },
        (BoundMode::Generic, _) => {
            let m = m.max(1);
            let n = space.num_entities();
            let mut tails = Vec::with_capacity(m);
            let mut converged = true;
            for _ in 0..m {
                let start = space.entity(rng.gen_range(0..n)).to_vec();
                let (x, ok) = minimize_tail(space, head, rel, &start);
                converged &= ok;
                tails.push(x);
            }
            let mut mean = vec![0.0; e.len()];
            for t in &tails {
                linalg::axpy(1.0 / m as f64, t, &mut mean);
            }
            let d = tails.iter().map(|t| linalg::distance(t, &mean)).fold(0.0, f64::max);
            EdgeBound {
                r_tilde: linalg::sub(&mean, e),
                d,
                converged,
            }
        }
    }
}

/// The matrix `path_map` selects.
pub fn path_matrix(align: &crate::align::AlignmentModel, map: PathMap) -> &Matrix {
    match map {
        PathMap::Relation => &align.a_rel,
        PathMap::Entity => &align.a_ent,
    }
}
