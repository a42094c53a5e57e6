//! Joint alignment of the two embedding spaces: mapping matrices,
//! similarities, derived weights and mean embeddings, alignment losses,
//! semi-supervised mining and calibrated match probabilities.

mod export;
mod features;
mod loss;
mod mining;
mod prob;
mod train;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::embed::{EmbedConfig, EmbeddingSpace, Grads, ModelKind, ParamRef};
use crate::kg::{Dataset, ElementKind, ElementPair};
use crate::linalg::{self, Matrix};
use crate::rng;

pub use export::{write_predictions, PredictionRow};
pub use features::{mean_class_embedding, mean_relation_embedding, relation_argmin, DerivedFeatures};
pub use loss::{
    alignment_example_loss, alignment_loss, sample_alignment_examples, semi_loss, AlignExample, LabeledSets,
};
pub use mining::{greedy_matching, semi_supervised_mine};
pub use prob::{directional_softmax, match_probability, pool_probabilities, CandidateSets};
pub use train::{fine_tune, merge_soft_pairs, pretrain, train_joint, AlignError, JointOptions, JointReport, PretrainOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignConfig {
    pub z_ent: f64,
    pub z_rel: f64,
    pub z_cls: f64,
    pub tau: f64,
    pub gamma: f64,
    /// Half-width of the uniform noise added to the identity at init.
    pub init_noise: f64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            z_ent: 0.05,
            z_rel: 0.1,
            z_cls: 0.1,
            tau: 0.9,
            gamma: 2.0,
            init_noise: 0.01,
        }
    }
}

impl AlignConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.z_ent > 0.0 && self.z_rel > 0.0 && self.z_cls > 0.0) {
            return Err("temperatures must be positive".into());
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(format!("semi threshold must lie in (0, 1), got {}", self.tau));
        }
        if !(self.gamma >= 0.0) {
            return Err("focal gamma must be non-negative".into());
        }
        Ok(())
    }

    pub fn temperature(&self, kind: ElementKind) -> f64 {
        match kind {
            ElementKind::Entity => self.z_ent,
            ElementKind::Relation => self.z_rel,
            ElementKind::Class => self.z_cls,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentModel {
    pub config: AlignConfig,
    /// `d_e x d_e`, maps first-graph entity space into the second.
    pub a_ent: Matrix,
    /// `d_e x d_e`, acts on relation vectors in entity space.
    pub a_rel: Matrix,
    /// `d_c x d_c`, acts on class vectors.
    pub a_cls: Matrix,
}

impl AlignmentModel {
    pub fn new(config: AlignConfig, dim_e: usize, dim_c: usize, seed: u64) -> Self {
        let mut rng = rng::stream(seed, "align-init", 0);
        let eps = config.init_noise;
        let mut near_identity = |n: usize| {
            Matrix::from_fn(n, n, |i, j| {
                let noise = if eps > 0.0 { rng.gen_range(-eps..eps) } else { 0.0 };
                if i == j {
                    1.0 + noise
                } else {
                    noise
                }
            })
        };
        AlignmentModel {
            config,
            a_ent: near_identity(dim_e),
            a_rel: near_identity(dim_e),
            a_cls: near_identity(dim_c),
        }
    }
}

/// Both embedding spaces plus the mapping between them; the unit that is
/// trained, checkpointed and evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointModel {
    pub left: EmbeddingSpace,
    pub right: EmbeddingSpace,
    pub align: AlignmentModel,
}

/// Address of one scalar parameter of a [`JointModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum JointParam {
    Left(ParamRef),
    Right(ParamRef),
    AEnt(usize, usize),
    ARel(usize, usize),
    ACls(usize, usize),
}

/// Gradient of a [`JointModel`] loss.
#[derive(Debug, Clone, PartialEq)]
pub struct JointGrads {
    pub left: Grads,
    pub right: Grads,
    pub a_ent: Matrix,
    pub a_rel: Matrix,
    pub a_cls: Matrix,
}

impl JointGrads {
    pub fn zeros(dim_e: usize, dim_c: usize) -> Self {
        JointGrads {
            left: Grads::default(),
            right: Grads::default(),
            a_ent: Matrix::zeros(dim_e, dim_e),
            a_rel: Matrix::zeros(dim_e, dim_e),
            a_cls: Matrix::zeros(dim_c, dim_c),
        }
    }

    pub fn add_scaled(&mut self, o: &JointGrads, alpha: f64) {
        self.left.add_scaled(&o.left, alpha);
        self.right.add_scaled(&o.right, alpha);
        linalg::axpy(alpha, o.a_ent.as_slice(), self.a_ent.as_mut_slice());
        linalg::axpy(alpha, o.a_rel.as_slice(), self.a_rel.as_mut_slice());
        linalg::axpy(alpha, o.a_cls.as_slice(), self.a_cls.as_mut_slice());
    }

    pub fn scale(&mut self, s: f64) {
        self.left.scale(s);
        self.right.scale(s);
        linalg::scale(self.a_ent.as_mut_slice(), s);
        linalg::scale(self.a_rel.as_mut_slice(), s);
        linalg::scale(self.a_cls.as_mut_slice(), s);
    }

    pub fn norm(&self) -> f64 {
        let m = |x: &Matrix| linalg::dot(x.as_slice(), x.as_slice());
        (self.left.norm_sq() + self.right.norm_sq() + m(&self.a_ent) + m(&self.a_rel) + m(&self.a_cls)).sqrt()
    }

    pub fn clip(&mut self, max_norm: f64) {
        let n = self.norm();
        if n > max_norm && n > 0.0 {
            self.scale(max_norm / n);
        }
    }

    pub fn get(&self, p: JointParam) -> f64 {
        match p {
            JointParam::Left(q) => self.left.get(q),
            JointParam::Right(q) => self.right.get(q),
            JointParam::AEnt(i, j) => self.a_ent.get(i, j),
            JointParam::ARel(i, j) => self.a_rel.get(i, j),
            JointParam::ACls(i, j) => self.a_cls.get(i, j),
        }
    }

    /// Coordinates with a nonzero gradient, in a fixed order.
    pub fn nonzero_coordinates(&self) -> Vec<JointParam> {
        let mut out: Vec<JointParam> = Vec::new();
        out.extend(self.left.coordinates().into_iter().map(JointParam::Left));
        out.extend(self.right.coordinates().into_iter().map(JointParam::Right));
        for (m, f) in [
            (&self.a_ent, JointParam::AEnt as fn(usize, usize) -> JointParam),
            (&self.a_rel, JointParam::ARel),
            (&self.a_cls, JointParam::ACls),
        ] {
            for i in 0..m.rows() {
                out.extend((0..m.cols()).map(|j| f(i, j)));
            }
        }
        out.retain(|&p| self.get(p) != 0.0);
        out
    }
}

impl JointModel {
    pub fn new(ds: &Dataset, embed: EmbedConfig, align: AlignConfig, seed: u64) -> Self {
        JointModel {
            left: EmbeddingSpace::new(embed, &ds.kg1, rng::derive_seed(seed, "left", 0)),
            right: EmbeddingSpace::new(embed, &ds.kg2, rng::derive_seed(seed, "right", 0)),
            align: AlignmentModel::new(align, embed.dim_e, embed.dim_c, seed),
        }
    }

    pub fn dim_e(&self) -> usize {
        self.left.dim_e()
    }

    pub fn dim_c(&self) -> usize {
        self.left.dim_c()
    }

    pub fn kind(&self) -> ModelKind {
        self.left.kind()
    }

    pub fn zero_grads(&self) -> JointGrads {
        JointGrads::zeros(self.dim_e(), self.dim_c())
    }

    pub fn get(&self, p: JointParam) -> f64 {
        match p {
            JointParam::Left(q) => self.left.get(q),
            JointParam::Right(q) => self.right.get(q),
            JointParam::AEnt(i, j) => self.align.a_ent.get(i, j),
            JointParam::ARel(i, j) => self.align.a_rel.get(i, j),
            JointParam::ACls(i, j) => self.align.a_cls.get(i, j),
        }
    }

    pub fn set(&mut self, p: JointParam, v: f64) {
        match p {
            JointParam::Left(q) => self.left.set(q, v),
            JointParam::Right(q) => self.right.set(q, v),
            JointParam::AEnt(i, j) => self.align.a_ent.set(i, j, v),
            JointParam::ARel(i, j) => self.align.a_rel.set(i, j, v),
            JointParam::ACls(i, j) => self.align.a_cls.set(i, j, v),
        }
    }

    pub fn apply(&mut self, g: &JointGrads, lr: f64) {
        self.left.apply(&g.left, lr);
        self.right.apply(&g.right, lr);
        linalg::axpy(-lr, g.a_ent.as_slice(), self.align.a_ent.as_mut_slice());
        linalg::axpy(-lr, g.a_rel.as_slice(), self.align.a_rel.as_mut_slice());
        linalg::axpy(-lr, g.a_cls.as_slice(), self.align.a_cls.as_mut_slice());
    }

    pub fn is_finite(&self) -> bool {
        self.left.is_finite()
            && self.right.is_finite()
            && self.align.a_ent.is_finite()
            && self.align.a_rel.is_finite()
            && self.align.a_cls.is_finite()
    }

    pub fn sim_entity(&self, e: usize, e2: usize) -> f64 {
        linalg::cosine(&self.align.a_ent.matvec(self.left.entity(e)), self.right.entity(e2))
    }

    /// Both branches of the relation similarity: mapped relation vectors and
    /// mapped mean vectors.
    pub fn sim_relation_parts(&self, f: &DerivedFeatures, r: usize, r2: usize) -> (f64, f64) {
        let orig = linalg::cosine(
            &self.align.a_rel.matvec(&self.left.relation_vector(r)),
            &self.right.relation_vector(r2),
        );
        let mean = linalg::cosine(&self.align.a_ent.matvec(f.rbar_left.row(r)), f.rbar_right.row(r2));
        (orig, mean)
    }

    pub fn sim_class_parts(&self, f: &DerivedFeatures, c: usize, c2: usize) -> (f64, f64) {
        let orig = linalg::cosine(
            &self.align.a_cls.matvec(self.left.class_vector(c)),
            self.right.class_vector(c2),
        );
        let mean = linalg::cosine(&self.align.a_ent.matvec(f.cbar_left.row(c)), f.cbar_right.row(c2));
        (orig, mean)
    }

    pub fn sim(&self, f: &DerivedFeatures, p: &ElementPair) -> f64 {
        match p.kind {
            ElementKind::Entity => self.sim_entity(p.left, p.right),
            ElementKind::Relation => {
                let (a, b) = self.sim_relation_parts(f, p.left, p.right);
                a.max(b)
            }
            ElementKind::Class => {
                let (a, b) = self.sim_class_parts(f, p.left, p.right);
                a.max(b)
            }
        }
    }

    /// Similarity of `p` and `coeff * dS/dparams` added into `g`. Mean
    /// embeddings are treated as constants.
    pub fn sim_backward(&self, f: &DerivedFeatures, p: &ElementPair, coeff: f64, g: &mut JointGrads) -> f64 {
        let de = self.dim_e();
        let dc = self.dim_c();
        match p.kind {
            ElementKind::Entity => {
                let x = self.left.entity(p.left);
                let u = self.align.a_ent.matvec(x);
                let (s, gu, gv) = linalg::cosine_with_grad(&u, self.right.entity(p.right));
                if coeff != 0.0 {
                    g.a_ent.add_outer(coeff, &gu, x);
                    linalg::axpy(coeff, &self.align.a_ent.matvec_t(&gu), g.left.entity_mut(p.left, de));
                    linalg::axpy(coeff, &gv, g.right.entity_mut(p.right, de));
                }
                s
            }
            ElementKind::Relation => {
                let (orig, mean) = self.sim_relation_parts(f, p.left, p.right);
                if coeff == 0.0 {
                    return orig.max(mean);
                }
                if orig >= mean {
                    let rv = self.left.relation_vector(p.left);
                    let u = self.align.a_rel.matvec(&rv);
                    let (s, gu, gv) = linalg::cosine_with_grad(&u, &self.right.relation_vector(p.right));
                    g.a_rel.add_outer(coeff, &gu, &rv);
                    let grv = self.align.a_rel.matvec_t(&gu);
                    relation_param_grad(&self.left, p.left, &grv, coeff, &mut g.left);
                    relation_param_grad(&self.right, p.right, &gv, coeff, &mut g.right);
                    s
                } else {
                    let rb = f.rbar_left.row(p.left);
                    let u = self.align.a_ent.matvec(rb);
                    let (s, gu, _) = linalg::cosine_with_grad(&u, f.rbar_right.row(p.right));
                    g.a_ent.add_outer(coeff, &gu, rb);
                    s
                }
            }
            ElementKind::Class => {
                let (orig, mean) = self.sim_class_parts(f, p.left, p.right);
                if coeff == 0.0 {
                    return orig.max(mean);
                }
                if orig >= mean {
                    let b = self.left.class_vector(p.left);
                    let u = self.align.a_cls.matvec(b);
                    let (s, gu, gv) = linalg::cosine_with_grad(&u, self.right.class_vector(p.right));
                    g.a_cls.add_outer(coeff, &gu, b);
                    linalg::axpy(coeff, &self.align.a_cls.matvec_t(&gu), g.left.class_b_mut(p.left, dc));
                    linalg::axpy(coeff, &gv, g.right.class_b_mut(p.right, dc));
                    s
                } else {
                    let cb = f.cbar_left.row(p.left);
                    let u = self.align.a_ent.matvec(cb);
                    let (s, gu, _) = linalg::cosine_with_grad(&u, f.cbar_right.row(p.right));
                    g.a_ent.add_outer(coeff, &gu, cb);
                    s
                }
            }
        }
    }
}

/// Chains a gradient with respect to the relation vector back to the
/// relation parameters.
fn relation_param_grad(space: &EmbeddingSpace, r: usize, grv: &[f64], coeff: f64, g: &mut Grads) {
    let de = space.dim_e();
    match space.kind() {
        ModelKind::TransE => linalg::axpy(coeff, grv, g.relation_mut(r, de)),
        ModelKind::RotatE => {
            let phases = space.relations.row(r);
            let row = g.relation_mut(r, de / 2);
            for (k, &t) in phases.iter().enumerate() {
                let (s, c) = t.sin_cos();
                row[k] += coeff * (-s * grv[2 * k] + c * grv[2 * k + 1]);
            }
        }
    }
}

/// Precomputed unit vectors for fast bulk similarity evaluation.
pub struct SimCache {
    pub ent_left: Matrix,
    pub ent_right: Matrix,
    rel_orig_left: Matrix,
    rel_orig_right: Matrix,
    rel_mean_left: Matrix,
    rel_mean_right: Matrix,
    cls_orig_left: Matrix,
    cls_orig_right: Matrix,
    cls_mean_left: Matrix,
    cls_mean_right: Matrix,
}

fn unit_rows(rows: usize, cols: usize, f: impl Fn(usize) -> Vec<f64>) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for i in 0..rows {
        let v = f(i);
        let n = linalg::norm(&v);
        if n > 0.0 {
            for (d, x) in m.row_mut(i).iter_mut().zip(&v) {
                *d = x / n;
            }
        }
    }
    m
}

fn unit_dot(a: &[f64], b: &[f64]) -> f64 {
    linalg::dot(a, b).clamp(-1.0, 1.0)
}

impl SimCache {
    pub fn new(jm: &JointModel, f: &DerivedFeatures) -> Self {
        let de = jm.dim_e();
        let dc = jm.dim_c();
        let a = &jm.align;
        let (l, r) = (&jm.left, &jm.right);
        SimCache {
            ent_left: unit_rows(l.num_entities(), de, |i| a.a_ent.matvec(l.entity(i))),
            ent_right: unit_rows(r.num_entities(), de, |i| r.entity(i).to_vec()),
            rel_orig_left: unit_rows(l.num_relations(), de, |i| a.a_rel.matvec(&l.relation_vector(i))),
            rel_orig_right: unit_rows(r.num_relations(), de, |i| r.relation_vector(i)),
            rel_mean_left: unit_rows(f.rbar_left.rows(), de, |i| a.a_ent.matvec(f.rbar_left.row(i))),
            rel_mean_right: unit_rows(f.rbar_right.rows(), de, |i| f.rbar_right.row(i).to_vec()),
            cls_orig_left: unit_rows(l.num_classes(), dc, |i| a.a_cls.matvec(l.class_vector(i))),
            cls_orig_right: unit_rows(r.num_classes(), dc, |i| r.class_vector(i).to_vec()),
            cls_mean_left: unit_rows(f.cbar_left.rows(), de, |i| a.a_ent.matvec(f.cbar_left.row(i))),
            cls_mean_right: unit_rows(f.cbar_right.rows(), de, |i| f.cbar_right.row(i).to_vec()),
        }
    }

    pub fn sim(&self, kind: ElementKind, l: usize, r: usize) -> f64 {
        match kind {
            ElementKind::Entity => unit_dot(self.ent_left.row(l), self.ent_right.row(r)),
            ElementKind::Relation => unit_dot(self.rel_orig_left.row(l), self.rel_orig_right.row(r))
                .max(unit_dot(self.rel_mean_left.row(l), self.rel_mean_right.row(r))),
            ElementKind::Class => unit_dot(self.cls_orig_left.row(l), self.cls_orig_right.row(r))
                .max(unit_dot(self.cls_mean_left.row(l), self.cls_mean_right.row(r))),
        }
    }

    pub fn sim_pair(&self, p: &ElementPair) -> f64 {
        self.sim(p.kind, p.left, p.right)
    }
}
