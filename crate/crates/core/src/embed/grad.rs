use std::collections::BTreeMap;

use crate::linalg::{self, Matrix};

/// Address of one scalar parameter of an [`super::EmbeddingSpace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamRef {
    Entity(usize, usize),
    Relation(usize, usize),
    ClassW(usize, usize, usize),
    ClassB(usize, usize),
    FfnW1(usize, usize),
    FfnB1(usize),
    FfnW2(usize, usize),
    FfnB2(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FfnGrads {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

/// Sparse gradient: only touched rows are stored. Ordered maps keep merging
/// and iteration deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Grads {
    pub entities: BTreeMap<usize, Vec<f64>>,
    pub relations: BTreeMap<usize, Vec<f64>>,
    pub class_w: BTreeMap<usize, Matrix>,
    pub class_b: BTreeMap<usize, Vec<f64>>,
    pub ffn: Option<FfnGrads>,
}

fn row<'a>(map: &'a mut BTreeMap<usize, Vec<f64>>, i: usize, len: usize) -> &'a mut [f64] {
    map.entry(i).or_insert_with(|| vec![0.0; len])
}

impl Grads {
    pub fn entity_mut(&mut self, i: usize, len: usize) -> &mut [f64] {
        row(&mut self.entities, i, len)
    }

    pub fn relation_mut(&mut self, i: usize, len: usize) -> &mut [f64] {
        row(&mut self.relations, i, len)
    }

    pub fn class_b_mut(&mut self, c: usize, len: usize) -> &mut [f64] {
        row(&mut self.class_b, c, len)
    }

    pub fn class_w_mut(&mut self, c: usize, n: usize) -> &mut Matrix {
        self.class_w.entry(c).or_insert_with(|| Matrix::zeros(n, n))
    }

    pub fn ffn_mut(&mut self, dim_c: usize, dim_e: usize) -> &mut FfnGrads {
        self.ffn.get_or_insert_with(|| FfnGrads {
            w1: Matrix::zeros(dim_c, dim_e),
            b1: vec![0.0; dim_c],
            w2: Matrix::zeros(dim_c, dim_c),
            b2: vec![0.0; dim_c],
        })
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
            && self.relations.is_empty()
            && self.class_w.is_empty()
            && self.class_b.is_empty()
            && self.ffn.is_none()
    }

    /// Adds `other * alpha` into `self`.
    pub fn add_scaled(&mut self, other: &Grads, alpha: f64) {
        for (&i, g) in &other.entities {
            linalg::axpy(alpha, g, self.entity_mut(i, g.len()));
        }
        for (&i, g) in &other.relations {
            linalg::axpy(alpha, g, self.relation_mut(i, g.len()));
        }
        for (&c, g) in &other.class_w {
            linalg::axpy(alpha, g.as_slice(), self.class_w_mut(c, g.rows()).as_mut_slice());
        }
        for (&c, g) in &other.class_b {
            linalg::axpy(alpha, g, self.class_b_mut(c, g.len()));
        }
        if let Some(f) = &other.ffn {
            let mine = self.ffn_mut(f.w1.rows(), f.w1.cols());
            linalg::axpy(alpha, f.w1.as_slice(), mine.w1.as_mut_slice());
            linalg::axpy(alpha, &f.b1, &mut mine.b1);
            linalg::axpy(alpha, f.w2.as_slice(), mine.w2.as_mut_slice());
            linalg::axpy(alpha, &f.b2, &mut mine.b2);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.for_each_slice(|v| linalg::scale(v, s));
    }

    fn for_each_slice(&mut self, mut f: impl FnMut(&mut [f64])) {
        self.entities.values_mut().for_each(|v| f(v));
        self.relations.values_mut().for_each(|v| f(v));
        self.class_w.values_mut().for_each(|m| f(m.as_mut_slice()));
        self.class_b.values_mut().for_each(|v| f(v));
        if let Some(g) = &mut self.ffn {
            f(g.w1.as_mut_slice());
            f(&mut g.b1);
            f(g.w2.as_mut_slice());
            f(&mut g.b2);
        }
    }

    pub fn norm_sq(&self) -> f64 {
        let mut s = 0.0;
        let mut acc = |v: &[f64]| s += linalg::dot(v, v);
        self.entities.values().for_each(|v| acc(v));
        self.relations.values().for_each(|v| acc(v));
        self.class_w.values().for_each(|m| acc(m.as_slice()));
        self.class_b.values().for_each(|v| acc(v));
        if let Some(g) = &self.ffn {
            acc(g.w1.as_slice());
            acc(&g.b1);
            acc(g.w2.as_slice());
            acc(&g.b2);
        }
        s
    }

    /// Rescales so the global norm is at most `max_norm`. Returns the norm
    /// before clipping.
    pub fn clip(&mut self, max_norm: f64) -> f64 {
        let n = self.norm_sq().sqrt();
        if n > max_norm && n > 0.0 {
            self.scale(max_norm / n);
        }
        n
    }

    pub fn get(&self, p: ParamRef) -> f64 {
        let at = |m: &BTreeMap<usize, Vec<f64>>, i: usize, j: usize| m.get(&i).map_or(0.0, |v| v[j]);
        match p {
            ParamRef::Entity(i, j) => at(&self.entities, i, j),
            ParamRef::Relation(i, j) => at(&self.relations, i, j),
            ParamRef::ClassW(c, i, j) => self.class_w.get(&c).map_or(0.0, |m| m.get(i, j)),
            ParamRef::ClassB(c, j) => at(&self.class_b, c, j),
            ParamRef::FfnW1(i, j) => self.ffn.as_ref().map_or(0.0, |f| f.w1.get(i, j)),
            ParamRef::FfnB1(i) => self.ffn.as_ref().map_or(0.0, |f| f.b1[i]),
            ParamRef::FfnW2(i, j) => self.ffn.as_ref().map_or(0.0, |f| f.w2.get(i, j)),
            ParamRef::FfnB2(i) => self.ffn.as_ref().map_or(0.0, |f| f.b2[i]),
        }
    }

    /// Every coordinate held by this gradient, in a fixed order.
    pub fn coordinates(&self) -> Vec<ParamRef> {
        let mut out = Vec::new();
        for (&i, v) in &self.entities {
            out.extend((0..v.len()).map(|j| ParamRef::Entity(i, j)));
        }
        for (&i, v) in &self.relations {
            out.extend((0..v.len()).map(|j| ParamRef::Relation(i, j)));
        }
        for (&c, m) in &self.class_w {
            for i in 0..m.rows() {
                out.extend((0..m.cols()).map(|j| ParamRef::ClassW(c, i, j)));
            }
        }
        for (&c, v) in &self.class_b {
            out.extend((0..v.len()).map(|j| ParamRef::ClassB(c, j)));
        }
        if let Some(f) = &self.ffn {
            for i in 0..f.w1.rows() {
                out.extend((0..f.w1.cols()).map(|j| ParamRef::FfnW1(i, j)));
            }
            out.extend((0..f.b1.len()).map(ParamRef::FfnB1));
            for i in 0..f.w2.rows() {
                out.extend((0..f.w2.cols()).map(|j| ParamRef::FfnW2(i, j)));
            }
            out.extend((0..f.b2.len()).map(ParamRef::FfnB2));
        }
        out
    }
}
