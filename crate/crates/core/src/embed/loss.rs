//! Margin losses. Negative sampling is kept apart from loss evaluation so the
//! same pairs can be re-scored during gradient checks.

use rand::Rng as _;

use super::{EmbeddingSpace, Grads, ModelKind};
use crate::kg::{KnowledgeGraph, Triple};
use crate::linalg;
use crate::rng::Rng;

const MAX_ATTEMPTS: usize = 20;

/// Tail-substitution negatives. Candidates that happen to be stored triples
/// are rejected; a positive gets fewer negatives if rejection keeps failing.
pub fn sample_er_negatives(kg: &KnowledgeGraph, batch: &[Triple], per_pos: usize, rng: &mut Rng) -> Vec<(Triple, Triple)> {
    let n = kg.num_entities();
    let mut out = Vec::with_capacity(batch.len() * per_pos);
    if n < 2 {
        return out;
    }
    for &pos in batch {
        for _ in 0..per_pos {
            for _ in 0..MAX_ATTEMPTS {
                let tail = rng.gen_range(0..n);
                let neg = Triple { tail, ..pos };
                if tail != pos.tail && !kg.has_triple(&neg) {
                    out.push((pos, neg));
                    break;
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EcNegatives {
    /// `((member, class), (non_member, class))`
    pub pairs: Vec<((usize, usize), (usize, usize))>,
    /// Positives without any non-member to substitute.
    pub skipped: usize,
}

/// Entity-substitution negatives restricted to non-members of the class.
pub fn sample_ec_negatives(kg: &KnowledgeGraph, batch: &[(usize, usize)], per_pos: usize, rng: &mut Rng) -> EcNegatives {
    let n = kg.num_entities();
    let mut out = EcNegatives::default();
    for &(e, c) in batch {
        if kg.members_of(c).len() >= n {
            out.skipped += 1;
            continue;
        }
        for _ in 0..per_pos {
            // non-members exist, so rejection terminates quickly unless the
            // class is nearly full; fall back to a scan then
            let mut found = None;
            for _ in 0..MAX_ATTEMPTS {
                let cand = rng.gen_range(0..n);
                if !kg.is_member(cand, c) {
                    found = Some(cand);
                    break;
                }
            }
            let neg = found.unwrap_or_else(|| {
                let free: Vec<usize> = (0..n).filter(|&x| !kg.is_member(x, c)).collect();
                free[rng.gen_range(0..free.len())]
            });
            out.pairs.push(((e, c), (neg, c)));
        }
    }
    out
}

/// Adds `coeff * d f_er(t) / d params` to `g`.
pub(crate) fn er_score_grad(space: &EmbeddingSpace, t: &Triple, coeff: f64, g: &mut Grads) -> f64 {
    let de = space.dim_e();
    let pred = space.project(t.head, t.rel);
    let diff = linalg::sub(&pred, space.entity(t.tail));
    let f = linalg::norm(&diff);
    if f == 0.0 || coeff == 0.0 {
        return f;
    }
    let u: Vec<f64> = diff.iter().map(|x| x * coeff / f).collect();
    match space.kind() {
        ModelKind::TransE => {
            linalg::axpy(1.0, &u, g.entity_mut(t.head, de));
            linalg::axpy(1.0, &u, g.relation_mut(t.rel, de));
        }
        ModelKind::RotatE => {
            let e = space.entity(t.head);
            let phases = space.relations.row(t.rel);
            let mut ge = vec![0.0; de];
            let mut gt = vec![0.0; de / 2];
            for (k, &th) in phases.iter().enumerate() {
                let (s, c) = th.sin_cos();
                let (a, b) = (e[2 * k], e[2 * k + 1]);
                let (ur, ui) = (u[2 * k], u[2 * k + 1]);
                ge[2 * k] = ur * c + ui * s;
                ge[2 * k + 1] = -ur * s + ui * c;
                gt[k] = ur * (-a * s - b * c) + ui * (a * c - b * s);
            }
            linalg::axpy(1.0, &ge, g.entity_mut(t.head, de));
            linalg::axpy(1.0, &gt, g.relation_mut(t.rel, de / 2));
        }
    }
    linalg::axpy(-1.0, &u, g.entity_mut(t.tail, de));
    f
}

/// Adds `coeff * d f_ec(e, c) / d params` to `g`.
pub(crate) fn ec_score_grad(space: &EmbeddingSpace, e: usize, c: usize, coeff: f64, g: &mut Grads) -> f64 {
    let (de, dc) = (space.dim_e(), space.dim_c());
    let x = space.entity(e);
    let tr = space.ffn(x);
    let w = &space.class_w[c];
    let z = linalg::sub(&w.matvec(&tr.out), space.class_b.row(c));
    let f = linalg::norm(&z);
    if f == 0.0 || coeff == 0.0 {
        return f;
    }
    let u: Vec<f64> = z.iter().map(|v| v * coeff / f).collect();
    g.class_w_mut(c, dc).add_outer(1.0, &u, &tr.out);
    linalg::axpy(-1.0, &u, g.class_b_mut(c, dc));
    let dy = w.matvec_t(&u);
    let dh = space.ffn_w2.matvec_t(&dy);
    let dpre: Vec<f64> = dh.iter().zip(&tr.hidden).map(|(d, h)| d * (1.0 - h * h)).collect();
    let dx = space.ffn_w1.matvec_t(&dpre);
    {
        let fg = g.ffn_mut(dc, de);
        fg.w2.add_outer(1.0, &dy, &tr.hidden);
        linalg::axpy(1.0, &dy, &mut fg.b2);
        fg.w1.add_outer(1.0, &dpre, x);
        linalg::axpy(1.0, &dpre, &mut fg.b1);
    }
    linalg::axpy(1.0, &dx, g.entity_mut(e, de));
    f
}

/// Sum over pairs of `|margin + f(pos) - f(neg)|_+` with its gradient.
pub fn er_pair_loss(space: &EmbeddingSpace, pairs: &[(Triple, Triple)]) -> (f64, Grads) {
    let margin = space.config.margin_er;
    let mut g = Grads::default();
    let mut loss = 0.0;
    for (pos, neg) in pairs {
        let h = margin + space.score_er(pos.head, pos.rel, pos.tail) - space.score_er(neg.head, neg.rel, neg.tail);
        if h > 0.0 {
            loss += h;
            er_score_grad(space, pos, 1.0, &mut g);
            er_score_grad(space, neg, -1.0, &mut g);
        }
    }
    (loss, g)
}

/// Sum over pairs of `|margin + f_ec(pos) - f_ec(neg)|_+` with its gradient.
pub fn ec_pair_loss(space: &EmbeddingSpace, pairs: &[((usize, usize), (usize, usize))]) -> (f64, Grads) {
    let margin = space.config.margin_ec;
    let mut g = Grads::default();
    let mut loss = 0.0;
    for &((pe, pc), (ne, nc)) in pairs {
        let h = margin + space.score_ec(pe, pc) - space.score_ec(ne, nc);
        if h > 0.0 {
            loss += h;
            ec_score_grad(space, pe, pc, 1.0, &mut g);
            ec_score_grad(space, ne, nc, -1.0, &mut g);
        }
    }
    (loss, g)
}

pub fn loss_er(space: &EmbeddingSpace, kg: &KnowledgeGraph, batch: &[Triple], per_pos: usize, rng: &mut Rng) -> (f64, Grads) {
    er_pair_loss(space, &sample_er_negatives(kg, batch, per_pos, rng))
}

/// Returns the loss, its gradient and the number of positives skipped for
/// lack of non-members.
pub fn loss_ec(
    space: &EmbeddingSpace,
    kg: &KnowledgeGraph,
    batch: &[(usize, usize)],
    per_pos: usize,
    rng: &mut Rng,
) -> (f64, Grads, usize) {
    let negs = sample_ec_negatives(kg, batch, per_pos, rng);
    let (l, g) = ec_pair_loss(space, &negs.pairs);
    (l, g, negs.skipped)
}
