use serde::{Deserialize, Serialize};

use super::{JointModel, SimCache};
use crate::embed::{EmbeddingSpace, ModelKind};
use crate::kg::{base_relation, Dataset, ElementKind, KnowledgeGraph};
use crate::linalg::{self, Matrix};
use crate::par::Exec;

/// Quantities derived from the current model and held fixed while training
/// within a round: entity weights (best cross-graph cosine), mean relation
/// and class embeddings, and relation/class weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedFeatures {
    pub w_left: Vec<f64>,
    pub w_right: Vec<f64>,
    /// One row per relation id, inverses included.
    pub rbar_left: Matrix,
    pub rbar_right: Matrix,
    pub cbar_left: Matrix,
    pub cbar_right: Matrix,
    /// Per relation id; an inverse shares its base relation's weight.
    pub wr_left: Vec<f64>,
    pub wr_right: Vec<f64>,
    pub wc_left: Vec<f64>,
    pub wc_right: Vec<f64>,
    /// Relations (left, right) whose mean came out as the zero vector.
    pub zero_relation_means: (usize, usize),
    /// Classes (left, right) whose mean came out as the zero vector.
    pub zero_class_means: (usize, usize),
}

/// The relation vector that best explains `head -> tail` on its own: the
/// difference for TransE, the unit rotation taking head to tail for RotatE.
pub fn relation_argmin(kind: ModelKind, head: &[f64], tail: &[f64]) -> Vec<f64> {
    match kind {
        ModelKind::TransE => linalg::sub(tail, head),
        ModelKind::RotatE => {
            let mut out = vec![0.0; head.len()];
            for k in 0..head.len() / 2 {
                let (a, b) = (head[2 * k], head[2 * k + 1]);
                let (c, d) = (tail[2 * k], tail[2 * k + 1]);
                // phase of tail * conj(head)
                let phi = (d * a - c * b).atan2(c * a + d * b);
                out[2 * k] = phi.cos();
                out[2 * k + 1] = phi.sin();
            }
            out
        }
    }
}

/// Weighted mean of per-triple argmin vectors of `rel`, each triple weighted
/// by `min(w_head, w_tail)` with negative weights clamped to zero. Returns the
/// zero vector and `false` when there is nothing to average.
pub fn mean_relation_embedding(
    space: &EmbeddingSpace,
    kg: &KnowledgeGraph,
    rel: usize,
    weights: &[f64],
) -> (Vec<f64>, bool) {
    let mut acc = vec![0.0; space.dim_e()];
    let mut total = 0.0;
    for &i in kg.triples_of(rel) {
        let t = kg.triples()[i];
        let w = weights[t.head].min(weights[t.tail]).max(0.0);
        if w == 0.0 {
            continue;
        }
        let v = relation_argmin(space.kind(), space.entity(t.head), space.entity(t.tail));
        linalg::axpy(w, &v, &mut acc);
        total += w;
    }
    if total == 0.0 {
        return (acc, false);
    }
    linalg::scale(&mut acc, 1.0 / total);
    (acc, true)
}

/// `sum w_e e / sum w_e` over members of `cls`, negative weights clamped.
pub fn mean_class_embedding(space: &EmbeddingSpace, kg: &KnowledgeGraph, cls: usize, weights: &[f64]) -> (Vec<f64>, bool) {
    let mut acc = vec![0.0; space.dim_e()];
    let mut total = 0.0;
    for &e in kg.members_of(cls) {
        let w = weights[e].max(0.0);
        if w == 0.0 {
            continue;
        }
        linalg::axpy(w, space.entity(e), &mut acc);
        total += w;
    }
    if total == 0.0 {
        return (acc, false);
    }
    linalg::scale(&mut acc, 1.0 / total);
    (acc, true)
}

fn row_col_max(exec: Exec, rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64 + Sync + Send) -> (Vec<f64>, Vec<f64>) {
    let per_row: Vec<Vec<f64>> = exec.map_range(rows, |i| (0..cols).map(|j| f(i, j)).collect());
    let row_max = per_row
        .iter()
        .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .map(|m| if m.is_finite() { m } else { 0.0 })
        .collect();
    let mut col_max = vec![f64::NEG_INFINITY; cols];
    for r in &per_row {
        for (c, &v) in col_max.iter_mut().zip(r) {
            *c = c.max(v);
        }
    }
    for c in &mut col_max {
        if !c.is_finite() {
            *c = 0.0;
        }
    }
    (row_max, col_max)
}

impl DerivedFeatures {
    pub fn compute(jm: &JointModel, ds: &Dataset) -> Self {
        Self::compute_with(jm, ds, Exec::default())
    }

    pub fn compute_with(jm: &JointModel, ds: &Dataset, exec: Exec) -> Self {
        let de = jm.dim_e();
        let (n1, n2) = (ds.kg1.num_entities(), ds.kg2.num_entities());
        // entity weights need only the entity cache, which does not depend on
        // the means
        let ent_only = SimCache::new(jm, &Self::empty(jm));
        let (w_left, w_right) = row_col_max(exec, n1, n2, |i, j| ent_only.sim(ElementKind::Entity, i, j));

        let means = |space: &EmbeddingSpace, kg: &KnowledgeGraph, w: &[f64], rel: bool| {
            let n = if rel { kg.num_relations() } else { kg.num_classes() };
            let rows = exec.map_range(n, |i| {
                if rel {
                    mean_relation_embedding(space, kg, i, w)
                } else {
                    mean_class_embedding(space, kg, i, w)
                }
            });
            let zero = rows.iter().filter(|r| !r.1).count();
            let mut m = Matrix::zeros(n, de);
            for (i, (v, _)) in rows.into_iter().enumerate() {
                m.row_mut(i).copy_from_slice(&v);
            }
            (m, zero)
        };
        let (rbar_left, zr1) = means(&jm.left, &ds.kg1, &w_left, true);
        let (rbar_right, zr2) = means(&jm.right, &ds.kg2, &w_right, true);
        let (cbar_left, zc1) = means(&jm.left, &ds.kg1, &w_left, false);
        let (cbar_right, zc2) = means(&jm.right, &ds.kg2, &w_right, false);
        let mut f = DerivedFeatures {
            w_left,
            w_right,
            rbar_left,
            rbar_right,
            cbar_left,
            cbar_right,
            wr_left: Vec::new(),
            wr_right: Vec::new(),
            wc_left: Vec::new(),
            wc_right: Vec::new(),
            zero_relation_means: (zr1, zr2),
            zero_class_means: (zc1, zc2),
        };
        let cache = SimCache::new(jm, &f);
        let (b1, b2) = (ds.kg1.num_base_relations(), ds.kg2.num_base_relations());
        let (wr1, wr2) = row_col_max(exec, b1, b2, |i, j| cache.sim(ElementKind::Relation, 2 * i, 2 * j));
        f.wr_left = (0..ds.kg1.num_relations()).map(|r| wr1[base_relation(r) / 2]).collect();
        f.wr_right = (0..ds.kg2.num_relations()).map(|r| wr2[base_relation(r) / 2]).collect();
        let (wc1, wc2) = row_col_max(exec, ds.kg1.num_classes(), ds.kg2.num_classes(), |i, j| {
            cache.sim(ElementKind::Class, i, j)
        });
        f.wc_left = wc1;
        f.wc_right = wc2;
        f
    }

    /// Placeholder with zero means and weights, sized for `jm`.
    pub fn empty(jm: &JointModel) -> Self {
        let de = jm.dim_e();
        DerivedFeatures {
            w_left: vec![0.0; jm.left.num_entities()],
            w_right: vec![0.0; jm.right.num_entities()],
            rbar_left: Matrix::zeros(jm.left.num_relations(), de),
            rbar_right: Matrix::zeros(jm.right.num_relations(), de),
            cbar_left: Matrix::zeros(jm.left.num_classes(), de),
            cbar_right: Matrix::zeros(jm.right.num_classes(), de),
            wr_left: vec![0.0; jm.left.num_relations()],
            wr_right: vec![0.0; jm.right.num_relations()],
            wc_left: vec![0.0; jm.left.num_classes()],
            wc_right: vec![0.0; jm.right.num_classes()],
            zero_relation_means: (0, 0),
            zero_class_means: (0, 0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::EmbedConfig;
    use crate::kg::KgBuilder;

    fn space_for(kg: &KnowledgeGraph) -> EmbeddingSpace {
        let cfg = EmbedConfig {
            dim_e: 2,
            dim_c: 2,
            ..EmbedConfig::default()
        };
        EmbeddingSpace::new(cfg, kg, 0)
    }

    #[test]
    fn class_mean_arithmetic() {
        let mut b = KgBuilder::new();
        b.triple("a", "r", "b");
        b.type_of("a", "C");
        b.type_of("b", "C");
        let kg = b.build();
        let mut s = space_for(&kg);
        s.entities = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let (m, ok) = mean_class_embedding(&s, &kg, 0, &[0.9, 0.1]);
        assert!(ok);
        assert!((m[0] - 0.9).abs() < 1e-12 && (m[1] - 0.1).abs() < 1e-12);
        let (m, _) = mean_class_embedding(&s, &kg, 0, &[0.5, 0.5]);
        assert_eq!(m, vec![0.5, 0.5]);
        let (m, ok) = mean_class_embedding(&s, &kg, 0, &[0.0, -0.3]);
        assert!(!ok);
        assert_eq!(m, vec![0.0, 0.0]);
    }

    #[test]
    fn single_triple_relation_mean_is_the_difference() {
        let mut b = KgBuilder::new();
        b.triple("a", "r", "b");
        let kg = b.build();
        let mut s = space_for(&kg);
        s.entities = Matrix::from_vec(2, 2, vec![1.0, 2.0, 4.0, -1.0]);
        let (m, ok) = mean_relation_embedding(&s, &kg, 0, &[0.3, 0.7]);
        assert!(ok);
        assert_eq!(m, vec![3.0, -3.0]);
        let (inv, _) = mean_relation_embedding(&s, &kg, 1, &[0.3, 0.7]);
        assert_eq!(inv, vec![-3.0, 3.0]);
    }
}
