use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::loss::{alignment_example_loss, sample_alignment_examples, semi_loss, AlignExample};
use super::{greedy_matching, semi_supervised_mine, DerivedFeatures, JointGrads, JointModel, LabeledSets, SimCache};
use crate::embed::{self, EmbedError, Grads, TrainOptions};
use crate::kg::{Dataset, ElementKind, ElementPair, KnowledgeGraph};
use crate::par::Exec;
use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum AlignError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("alignment training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Negatives per positive for the structural losses.
    pub negatives: usize,
    /// Random negatives per labeled match for the alignment losses.
    pub align_negatives: usize,
    pub clip: Option<f64>,
    /// Average each loss term over its batch instead of summing it.
    pub mean_reduction: bool,
    pub max_entity_norm: Option<f64>,
    pub structure_weight: f64,
    pub semi_weight: f64,
    pub exec: Exec,
}

impl Default for JointOptions {
    fn default() -> Self {
        JointOptions {
            epochs: 50,
            batch_size: 256,
            lr: 0.02,
            negatives: 4,
            align_negatives: 16,
            clip: None,
            mean_reduction: false,
            max_entity_norm: Some(1.0),
            structure_weight: 1.0,
            semi_weight: 1.0,
            exec: Exec::default(),
        }
    }
}

impl JointOptions {
    fn reduction(&self, n: usize) -> f64 {
        if self.mean_reduction {
            n as f64
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JointReport {
    /// Mean per-term loss, one entry per epoch.
    pub losses: Vec<f64>,
    pub semi_pairs: usize,
}

fn slice_of<T: Clone>(items: &[T], order: &[usize], b: usize, per: usize) -> Vec<T> {
    order.iter().skip(b * per).take(per).map(|&i| items[i].clone()).collect()
}

fn structural(
    space: &embed::EmbeddingSpace,
    kg: &KnowledgeGraph,
    triples: Vec<crate::kg::Triple>,
    types: Vec<(usize, usize)>,
    negatives: usize,
    exec: Exec,
    rng: &mut rng::Rng,
) -> (f64, Grads, usize) {
    let er = embed::sample_er_negatives(kg, &triples, negatives, rng);
    let ec = embed::sample_ec_negatives(kg, &types, negatives, rng);
    let (l1, mut g) = crate::embed::chunked_grads(exec, &er, |c| embed::er_pair_loss(space, c));
    let (l2, g2) = crate::embed::chunked_grads(exec, &ec.pairs, |c| embed::ec_pair_loss(space, c));
    g.add_scaled(&g2, 1.0);
    (l1 + l2, g, er.len() + ec.pairs.len())
}

fn chunked_joint<T: Sync>(
    jm: &JointModel,
    exec: Exec,
    items: &[T],
    f: impl Fn(&[T]) -> (f64, JointGrads) + Sync + Send,
) -> (f64, JointGrads) {
    let chunks: Vec<&[T]> = items.chunks(32).collect();
    let parts = exec.map_slice(&chunks, |c| f(c));
    let mut g = jm.zero_grads();
    let mut loss = 0.0;
    for (l, p) in parts {
        loss += l;
        g.add_scaled(&p, 1.0);
    }
    (loss, g)
}

/// Joint SGD on both structural losses, the alignment losses over labeled
/// matches (listwise or focal) and the semi-supervised term. `features` stay
/// fixed for the whole call.
#[allow(clippy::too_many_arguments)]
pub fn train_joint(
    jm: &mut JointModel,
    ds: &Dataset,
    features: &DerivedFeatures,
    labels: &LabeledSets,
    semi: &[(ElementPair, f64)],
    focal: bool,
    opts: &JointOptions,
    seed: u64,
) -> Result<JointReport, AlignError> {
    let mut report = JointReport {
        semi_pairs: semi.len(),
        ..JointReport::default()
    };
    let bs = opts.batch_size.max(1);
    let (t1, t2) = (ds.kg1.triples(), ds.kg2.triples());
    let (y1, y2) = (ds.kg1.type_triples(), ds.kg2.type_triples());
    for epoch in 0..opts.epochs {
        let mut rng = rng::stream(seed, "joint-epoch", epoch as u64);
        let examples: Vec<AlignExample> = sample_alignment_examples(ds, labels, opts.align_negatives, &mut rng);
        let mut orders: Vec<Vec<usize>> = [t1.len(), t2.len(), y1.len(), y2.len(), examples.len(), semi.len()]
            .iter()
            .map(|&n| (0..n).collect())
            .collect();
        for o in &mut orders {
            o.shuffle(&mut rng);
        }
        let sizes: Vec<usize> = orders.iter().map(Vec::len).collect();
        let n_batches = sizes.iter().map(|n| n.div_ceil(bs)).max().unwrap_or(0).max(1);
        let per: Vec<usize> = sizes.iter().map(|n| n.div_ceil(n_batches)).collect();
        let (mut total, mut count) = (0.0, 0usize);
        for b in 0..n_batches {
            let mut g = jm.zero_grads();
            if opts.structure_weight > 0.0 {
                let (l, mut gl, n) = structural(
                    &jm.left,
                    &ds.kg1,
                    slice_of(t1, &orders[0], b, per[0]),
                    slice_of(y1, &orders[2], b, per[2]),
                    opts.negatives,
                    opts.exec,
                    &mut rng,
                );
                if n > 0 {
                    gl.scale(opts.structure_weight / opts.reduction(n));
                    if let Some(c) = opts.clip {
                        gl.clip(c);
                    }
                    g.left.add_scaled(&gl, 1.0);
                    total += l / n as f64;
                    count += 1;
                }
                let (l, mut gr, n) = structural(
                    &jm.right,
                    &ds.kg2,
                    slice_of(t2, &orders[1], b, per[1]),
                    slice_of(y2, &orders[3], b, per[3]),
                    opts.negatives,
                    opts.exec,
                    &mut rng,
                );
                if n > 0 {
                    gr.scale(opts.structure_weight / opts.reduction(n));
                    if let Some(c) = opts.clip {
                        gr.clip(c);
                    }
                    g.right.add_scaled(&gr, 1.0);
                    total += l / n as f64;
                    count += 1;
                }
            }
            let ex = slice_of(&examples, &orders[4], b, per[4]);
            if !ex.is_empty() {
                let (l, mut ga) = chunked_joint(jm, opts.exec, &ex, |c| alignment_example_loss(jm, features, c, focal));
                ga.scale(1.0 / opts.reduction(ex.len()));
                if let Some(c) = opts.clip {
                    ga.clip(c);
                }
                g.add_scaled(&ga, 1.0);
                total += l / ex.len() as f64;
                count += 1;
            }
            let sm = slice_of(semi, &orders[5], b, per[5]);
            if !sm.is_empty() && opts.semi_weight > 0.0 {
                let (l, mut gs) = chunked_joint(jm, opts.exec, &sm, |c| semi_loss(jm, features, c));
                gs.scale(opts.semi_weight / opts.reduction(sm.len()));
                if let Some(c) = opts.clip {
                    gs.clip(c);
                }
                g.add_scaled(&gs, 1.0);
                total += l / sm.len() as f64;
                count += 1;
            }
            jm.apply(&g, opts.lr);
            if let Some(m) = opts.max_entity_norm {
                let l: Vec<usize> = g.left.entities.keys().copied().collect();
                let r: Vec<usize> = g.right.entities.keys().copied().collect();
                embed::project_entities(&mut jm.left, l.into_iter(), m);
                embed::project_entities(&mut jm.right, r.into_iter(), m);
            }
        }
        let mean = if count == 0 { 0.0 } else { total / count as f64 };
        if !mean.is_finite() || !jm.is_finite() {
            return Err(AlignError::Diverged { epoch, loss: mean });
        }
        report.losses.push(mean);
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainOptions {
    pub embed: TrainOptions,
    pub joint: JointOptions,
    /// Mine semi-supervised pairs before each joint phase.
    pub semi: bool,
    /// The joint epochs are split into this many phases with features
    /// recomputed in between.
    pub phases: usize,
}

impl Default for PretrainOptions {
    fn default() -> Self {
        PretrainOptions {
            embed: TrainOptions::default(),
            joint: JointOptions::default(),
            semi: true,
            phases: 2,
        }
    }
}

fn mine(jm: &JointModel, f: &DerivedFeatures, pool: &[ElementPair], labels: &LabeledSets) -> Vec<(ElementPair, f64)> {
    let cache = SimCache::new(jm, f);
    semi_supervised_mine(&cache, pool, labels, jm.align.config.tau)
}

/// Structural pretraining of both spaces, then joint training on the seed
/// labels. Returns the features of the final model.
pub fn pretrain(
    jm: &mut JointModel,
    ds: &Dataset,
    labels: &LabeledSets,
    pool: &[ElementPair],
    opts: &PretrainOptions,
    seed: u64,
) -> Result<DerivedFeatures, AlignError> {
    embed::train(&mut jm.left, &ds.kg1, &opts.embed, rng::derive_seed(seed, "pretrain-left", 0))?;
    embed::train(&mut jm.right, &ds.kg2, &opts.embed, rng::derive_seed(seed, "pretrain-right", 0))?;
    let mut f = DerivedFeatures::compute_with(jm, ds, opts.joint.exec);
    let phases = opts.phases.max(1);
    for phase in 0..phases {
        let epochs = opts.joint.epochs / phases + usize::from(phase < opts.joint.epochs % phases);
        if epochs == 0 {
            continue;
        }
        let semi = if opts.semi { mine(jm, &f, pool, labels) } else { Vec::new() };
        let o = JointOptions { epochs, ..opts.joint };
        train_joint(jm, ds, &f, labels, &semi, false, &o, rng::derive_seed(seed, "pretrain-joint", phase as u64))?;
        f = DerivedFeatures::compute_with(jm, ds, opts.joint.exec);
    }
    Ok(f)
}

/// One-to-one union of two soft-labeled pair lists: each pair keeps its
/// larger weight, then conflicts resolve greedily by weight, never touching
/// an element already in a labeled match.
pub fn merge_soft_pairs(a: &[(ElementPair, f64)], b: &[(ElementPair, f64)], labels: &LabeledSets) -> Vec<(ElementPair, f64)> {
    let mut best: BTreeMap<ElementPair, f64> = BTreeMap::new();
    for &(p, w) in a.iter().chain(b) {
        if labels.contains(&p) {
            continue;
        }
        let slot = best.entry(p).or_insert(w);
        *slot = slot.max(w);
    }
    let mut out = Vec::new();
    for kind in ElementKind::ALL {
        let cands: Vec<(usize, usize, f64)> = best
            .iter()
            .filter(|(p, _)| p.kind == kind)
            .map(|(p, &w)| (p.left, p.right, w))
            .collect();
        let used_left: HashSet<usize> = labels.matches_of(kind).map(|p| p.left).collect();
        let used_right: HashSet<usize> = labels.matches_of(kind).map(|p| p.right).collect();
        out.extend(
            greedy_matching(cands, 0.0, &used_left, &used_right)
                .into_iter()
                .map(|(l, r, w)| (ElementPair { kind, left: l, right: r }, w)),
        );
    }
    out
}

/// One round of focal-loss fine-tuning over all labels (old and new) plus
/// freshly mined pairs and the soft-labeled `extra` pairs; features are
/// recomputed afterwards.
#[allow(clippy::too_many_arguments)]
pub fn fine_tune(
    jm: &mut JointModel,
    ds: &Dataset,
    features: &mut DerivedFeatures,
    labels: &LabeledSets,
    pool: &[ElementPair],
    extra: &[(ElementPair, f64)],
    opts: &JointOptions,
    semi: bool,
    seed: u64,
) -> Result<JointReport, AlignError> {
    if opts.epochs == 0 {
        return Ok(JointReport::default());
    }
    let mined = if semi { mine(jm, features, pool, labels) } else { Vec::new() };
    let soft = merge_soft_pairs(&mined, extra, labels);
    let rep = train_joint(jm, ds, features, labels, &soft, true, opts, seed)?;
    *features = DerivedFeatures::compute_with(jm, ds, opts.exec);
    Ok(rep)
}
