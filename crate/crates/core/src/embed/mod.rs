//! Per-graph embeddings: entity-relation scoring (TransE or RotatE) and the
//! entity-class subspace score `||W_c FFNN(e) - b_c||`.

mod grad;
mod loss;
mod train;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::kg::KnowledgeGraph;
use crate::linalg::{self, Matrix};
use crate::rng;

pub use grad::{Grads, ParamRef};
pub use loss::{ec_pair_loss, er_pair_loss, loss_ec, loss_er, sample_ec_negatives, sample_er_negatives, EcNegatives};
pub use train::{mean_pos_score, train, EmbedError, TrainOptions, TrainReport};
pub(crate) use train::{chunked as chunked_grads, project_entities};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    TransE,
    RotatE,
}

impl std::str::FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "transe" => Ok(ModelKind::TransE),
            "rotate" => Ok(ModelKind::RotatE),
            other => Err(format!("unknown model `{other}` (expected transe or rotate)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbedConfig {
    pub kind: ModelKind,
    pub dim_e: usize,
    pub dim_c: usize,
    pub margin_er: f64,
    pub margin_ec: f64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            kind: ModelKind::TransE,
            dim_e: 100,
            dim_c: 50,
            margin_er: 1.0,
            margin_ec: 1.0,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.dim_e == 0 || self.dim_c == 0 {
            return Err("embedding dimensions must be positive".into());
        }
        if self.kind == ModelKind::RotatE && self.dim_e % 2 != 0 {
            return Err(format!("RotatE needs an even entity dimension, got {}", self.dim_e));
        }
        if !(self.margin_er > 0.0 && self.margin_ec > 0.0) {
            return Err("margins must be positive".into());
        }
        Ok(())
    }
}

/// All trainable parameters of one graph.
///
/// Relation rows cover inverse relations too (row `r ^ 1` is the inverse of
/// row `r`). TransE relation rows have `dim_e` entries; RotatE rows hold
/// `dim_e / 2` phases, one per complex coordinate. Complex vectors are stored
/// interleaved as `[re0, im0, re1, im1, ...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSpace {
    pub config: EmbedConfig,
    pub entities: Matrix,
    pub relations: Matrix,
    pub class_w: Vec<Matrix>,
    pub class_b: Matrix,
    pub ffn_w1: Matrix,
    pub ffn_b1: Vec<f64>,
    pub ffn_w2: Matrix,
    pub ffn_b2: Vec<f64>,
}

/// Intermediate values of the class-space map, kept for backpropagation.
pub struct FfnTrace {
    pub hidden: Vec<f64>,
    pub out: Vec<f64>,
}

impl EmbeddingSpace {
    pub fn new(config: EmbedConfig, kg: &KnowledgeGraph, seed: u64) -> Self {
        Self::with_sizes(config, kg.num_entities(), kg.num_relations(), kg.num_classes(), seed)
    }

    pub fn with_sizes(config: EmbedConfig, n_ent: usize, n_rel: usize, n_cls: usize, seed: u64) -> Self {
        let mut rng = rng::stream(seed, "embed-init", 0);
        let de = config.dim_e;
        let dc = config.dim_c;
        let bound = 6.0 / (de as f64).sqrt();
        let mut entities = Matrix::from_fn(n_ent, de, |_, _| rng.gen_range(-bound..bound));
        for i in 0..n_ent {
            let row = entities.row_mut(i);
            let n = linalg::norm(row);
            if n > 0.0 {
                linalg::scale(row, 1.0 / n);
            }
        }
        let relations = match config.kind {
            ModelKind::TransE => {
                let mut m = Matrix::from_fn(n_rel, de, |_, _| rng.gen_range(-bound..bound));
                for i in 0..n_rel {
                    let row = m.row_mut(i);
                    let n = linalg::norm(row);
                    if n > 0.0 {
                        linalg::scale(row, 1.0 / n);
                    }
                }
                m
            }
            ModelKind::RotatE => {
                Matrix::from_fn(n_rel, de / 2, |_, _| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
            }
        };
        let xavier = |rows: usize, cols: usize, rng: &mut rng::Rng| {
            let b = (6.0 / (rows + cols) as f64).sqrt();
            Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-b..b))
        };
        let ffn_w1 = xavier(dc, de, &mut rng);
        let ffn_w2 = xavier(dc, dc, &mut rng);
        let class_w = (0..n_cls)
            .map(|_| Matrix::from_fn(dc, dc, |i, j| if i == j { 1.0 } else { 0.0 } + rng.gen_range(-0.05..0.05)))
            .collect();
        let class_b = Matrix::from_fn(n_cls, dc, |_, _| rng.gen_range(-0.5..0.5));
        EmbeddingSpace {
            config,
            entities,
            relations,
            class_w,
            class_b,
            ffn_w1,
            ffn_b1: vec![0.0; dc],
            ffn_w2,
            ffn_b2: vec![0.0; dc],
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn dim_e(&self) -> usize {
        self.config.dim_e
    }

    pub fn dim_c(&self) -> usize {
        self.config.dim_c
    }

    pub fn num_entities(&self) -> usize {
        self.entities.rows()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.class_b.rows()
    }

    pub fn entity(&self, e: usize) -> &[f64] {
        self.entities.row(e)
    }

    /// The relation as a vector in entity space: the translation for TransE,
    /// the unit-modulus rotation `(cos t, sin t)` pairs for RotatE.
    pub fn relation_vector(&self, r: usize) -> Vec<f64> {
        match self.kind() {
            ModelKind::TransE => self.relations.row(r).to_vec(),
            ModelKind::RotatE => {
                let mut v = Vec::with_capacity(self.dim_e());
                for &t in self.relations.row(r) {
                    v.push(t.cos());
                    v.push(t.sin());
                }
                v
            }
        }
    }

    /// The class embedding used for schema similarity (the subspace offset).
    pub fn class_vector(&self, c: usize) -> &[f64] {
        self.class_b.row(c)
    }

    /// Predicted tail `e (+|∘) r`.
    pub fn project(&self, head: usize, rel: usize) -> Vec<f64> {
        let e = self.entity(head);
        match self.kind() {
            ModelKind::TransE => e.iter().zip(self.relations.row(rel)).map(|(a, b)| a + b).collect(),
            ModelKind::RotatE => rotate(e, self.relations.row(rel)),
        }
    }

    /// `f_er` with an arbitrary tail vector.
    pub fn score_er_at(&self, head: usize, rel: usize, tail: &[f64]) -> f64 {
        linalg::distance(&self.project(head, rel), tail)
    }

    pub fn score_er(&self, head: usize, rel: usize, tail: usize) -> f64 {
        linalg::distance(&self.project(head, rel), self.entity(tail))
    }

    pub fn ffn(&self, x: &[f64]) -> FfnTrace {
        let mut hidden = self.ffn_w1.matvec(x);
        for (h, b) in hidden.iter_mut().zip(&self.ffn_b1) {
            *h = (*h + b).tanh();
        }
        let mut out = self.ffn_w2.matvec(&hidden);
        for (o, b) in out.iter_mut().zip(&self.ffn_b2) {
            *o += b;
        }
        FfnTrace { hidden, out }
    }

    pub fn score_ec(&self, ent: usize, cls: usize) -> f64 {
        let y = self.ffn(self.entity(ent)).out;
        let z = self.class_w[cls].matvec(&y);
        linalg::distance(&z, self.class_b.row(cls))
    }

    pub fn is_finite(&self) -> bool {
        self.entities.is_finite()
            && self.relations.is_finite()
            && self.class_w.iter().all(Matrix::is_finite)
            && self.class_b.is_finite()
            && self.ffn_w1.is_finite()
            && self.ffn_w2.is_finite()
            && self.ffn_b1.iter().chain(&self.ffn_b2).all(|v| v.is_finite())
    }

    pub fn get(&self, p: ParamRef) -> f64 {
        match p {
            ParamRef::Entity(i, j) => self.entities.get(i, j),
            ParamRef::Relation(i, j) => self.relations.get(i, j),
            ParamRef::ClassW(c, i, j) => self.class_w[c].get(i, j),
            ParamRef::ClassB(c, j) => self.class_b.get(c, j),
            ParamRef::FfnW1(i, j) => self.ffn_w1.get(i, j),
            ParamRef::FfnB1(i) => self.ffn_b1[i],
            ParamRef::FfnW2(i, j) => self.ffn_w2.get(i, j),
            ParamRef::FfnB2(i) => self.ffn_b2[i],
        }
    }

    pub fn set(&mut self, p: ParamRef, v: f64) {
        match p {
            ParamRef::Entity(i, j) => self.entities.set(i, j, v),
            ParamRef::Relation(i, j) => self.relations.set(i, j, v),
            ParamRef::ClassW(c, i, j) => self.class_w[c].set(i, j, v),
            ParamRef::ClassB(c, j) => self.class_b.set(c, j, v),
            ParamRef::FfnW1(i, j) => self.ffn_w1.set(i, j, v),
            ParamRef::FfnB1(i) => self.ffn_b1[i] = v,
            ParamRef::FfnW2(i, j) => self.ffn_w2.set(i, j, v),
            ParamRef::FfnB2(i) => self.ffn_b2[i] = v,
        }
    }

    /// Applies `params -= lr * grads`.
    pub fn apply(&mut self, grads: &Grads, lr: f64) {
        for (&i, g) in &grads.entities {
            linalg::axpy(-lr, g, self.entities.row_mut(i));
        }
        for (&i, g) in &grads.relations {
            linalg::axpy(-lr, g, self.relations.row_mut(i));
        }
        for (&c, g) in &grads.class_w {
            linalg::axpy(-lr, g.as_slice(), self.class_w[c].as_mut_slice());
        }
        for (&c, g) in &grads.class_b {
            linalg::axpy(-lr, g, self.class_b.row_mut(c));
        }
        if let Some(f) = &grads.ffn {
            linalg::axpy(-lr, f.w1.as_slice(), self.ffn_w1.as_mut_slice());
            linalg::axpy(-lr, &f.b1, &mut self.ffn_b1);
            linalg::axpy(-lr, f.w2.as_slice(), self.ffn_w2.as_mut_slice());
            linalg::axpy(-lr, &f.b2, &mut self.ffn_b2);
        }
    }
}

/// Elementwise complex product of `e` (interleaved) with unit rotations by
/// `phases`.
pub fn rotate(e: &[f64], phases: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; e.len()];
    for (k, &t) in phases.iter().enumerate() {
        let (s, c) = t.sin_cos();
        let (a, b) = (e[2 * k], e[2 * k + 1]);
        out[2 * k] = a * c - b * s;
        out[2 * k + 1] = a * s + b * c;
    }
    out
}
