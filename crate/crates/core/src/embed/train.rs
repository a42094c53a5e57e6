use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::loss::{ec_pair_loss, er_pair_loss, sample_ec_negatives, sample_er_negatives};
use super::{EmbeddingSpace, Grads};
use crate::kg::KnowledgeGraph;
use crate::linalg;
use crate::par::Exec;
use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum EmbedError {
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub negatives: usize,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip: Option<f64>,
    /// Average the batch gradient instead of summing it.
    pub mean_reduction: bool,
    /// Rescale touched entity rows to this norm after each step.
    pub max_entity_norm: Option<f64>,
    pub exec: Exec,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 200,
            batch_size: 256,
            lr: 0.01,
            negatives: 4,
            clip: None,
            mean_reduction: false,
            max_entity_norm: Some(1.0),
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean hinge loss per sampled pair, one entry per epoch.
    pub losses: Vec<f64>,
    pub mean_pos_score_before: f64,
    pub mean_pos_score_after: f64,
    /// Type triples that had no non-member to contrast with.
    pub skipped_ec: usize,
}

const CHUNK: usize = 32;

/// Evaluates `f` on fixed-size chunks of `items` and merges the partial
/// results in chunk order, so the sum is identical under every [`Exec`].
pub(crate) fn chunked<T: Sync>(exec: Exec, items: &[T], f: impl Fn(&[T]) -> (f64, Grads) + Sync + Send) -> (f64, Grads) {
    let chunks: Vec<&[T]> = items.chunks(CHUNK).collect();
    let parts = exec.map_slice(&chunks, |c| f(c));
    let mut loss = 0.0;
    let mut g = Grads::default();
    for (l, p) in parts {
        loss += l;
        g.add_scaled(&p, 1.0);
    }
    (loss, g)
}

pub(crate) fn project_entities(space: &mut EmbeddingSpace, touched: impl Iterator<Item = usize>, max_norm: f64) {
    for e in touched {
        let row = space.entities.row_mut(e);
        let n = linalg::norm(row);
        if n > 0.0 {
            linalg::scale(row, max_norm / n);
        }
    }
}

pub fn mean_pos_score(space: &EmbeddingSpace, kg: &KnowledgeGraph) -> f64 {
    let t = kg.triples();
    if t.is_empty() {
        return 0.0;
    }
    t.iter().map(|t| space.score_er(t.head, t.rel, t.tail)).sum::<f64>() / t.len() as f64
}

/// Trains both structural losses on one graph with mini-batch SGD.
pub fn train(space: &mut EmbeddingSpace, kg: &KnowledgeGraph, opts: &TrainOptions, seed: u64) -> Result<TrainReport, EmbedError> {
    let mut report = TrainReport {
        mean_pos_score_before: mean_pos_score(space, kg),
        ..TrainReport::default()
    };
    let triples = kg.triples();
    let types = kg.type_triples();
    let bs = opts.batch_size.max(1);
    for epoch in 0..opts.epochs {
        let mut rng = rng::stream(seed, "embed-epoch", epoch as u64);
        let mut order: Vec<usize> = (0..triples.len()).collect();
        order.shuffle(&mut rng);
        let mut type_order: Vec<usize> = (0..types.len()).collect();
        type_order.shuffle(&mut rng);
        let n_batches = triples.len().div_ceil(bs).max(types.len().div_ceil(bs)).max(1);
        let er_per = triples.len().div_ceil(n_batches);
        let ec_per = types.len().div_ceil(n_batches);
        let (mut total, mut count) = (0.0, 0usize);
        for b in 0..n_batches {
            let er_batch: Vec<_> = order.iter().skip(b * er_per).take(er_per).map(|&i| triples[i]).collect();
            let ec_batch: Vec<_> = type_order.iter().skip(b * ec_per).take(ec_per).map(|&i| types[i]).collect();
            let er_pairs = sample_er_negatives(kg, &er_batch, opts.negatives, &mut rng);
            let ec = sample_ec_negatives(kg, &ec_batch, opts.negatives, &mut rng);
            if epoch == 0 {
                report.skipped_ec += ec.skipped;
            }
            let n = er_pairs.len() + ec.pairs.len();
            if n == 0 {
                continue;
            }
            let (l1, mut g) = chunked(opts.exec, &er_pairs, |c| er_pair_loss(space, c));
            let (l2, g2) = chunked(opts.exec, &ec.pairs, |c| ec_pair_loss(space, c));
            g.add_scaled(&g2, 1.0);
            if opts.mean_reduction {
                g.scale(1.0 / n as f64);
            }
            if let Some(c) = opts.clip {
                g.clip(c);
            }
            space.apply(&g, opts.lr);
            if let Some(m) = opts.max_entity_norm {
                let touched: Vec<usize> = g.entities.keys().copied().collect();
                project_entities(space, touched.into_iter(), m);
            }
            total += l1 + l2;
            count += n;
        }
        let mean = if count == 0 { 0.0 } else { total / count as f64 };
        if !mean.is_finite() || !space.is_finite() {
            return Err(EmbedError::Diverged { epoch, loss: mean });
        }
        report.losses.push(mean);
    }
    report.mean_pos_score_after = mean_pos_score(space, kg);
    Ok(report)
}
