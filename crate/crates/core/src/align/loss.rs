use std::collections::{BTreeMap, HashMap};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{DerivedFeatures, JointGrads, JointModel};
use crate::kg::{Dataset, ElementKind, ElementPair, Label};
use crate::linalg;
use crate::rng::Rng;

/// Oracle labels collected so far. A pair carries at most one label and it
/// never changes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<(ElementPair, Label)>", into = "Vec<(ElementPair, Label)>")]
pub struct LabeledSets {
    labels: BTreeMap<ElementPair, Label>,
}

impl From<Vec<(ElementPair, Label)>> for LabeledSets {
    fn from(v: Vec<(ElementPair, Label)>) -> Self {
        LabeledSets { labels: v.into_iter().collect() }
    }
}

impl From<LabeledSets> for Vec<(ElementPair, Label)> {
    fn from(s: LabeledSets) -> Self {
        s.labels.into_iter().collect()
    }
}

impl LabeledSets {
    /// Records a label. Returns `Ok(false)` when the same label was already
    /// present and `Err` when it contradicts an earlier one.
    pub fn insert(&mut self, pair: ElementPair, label: Label) -> Result<bool, Label> {
        match self.labels.get(&pair) {
            Some(&old) if old == label => Ok(false),
            Some(&old) => Err(old),
            None => {
                self.labels.insert(pair, label);
                Ok(true)
            }
        }
    }

    pub fn get(&self, pair: &ElementPair) -> Option<Label> {
        self.labels.get(pair).copied()
    }

    pub fn contains(&self, pair: &ElementPair) -> bool {
        self.labels.contains_key(pair)
    }

    pub fn is_match(&self, pair: &ElementPair) -> bool {
        self.get(pair) == Some(Label::Match)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ElementPair, &Label)> {
        self.labels.iter()
    }

    pub fn matches(&self) -> impl Iterator<Item = ElementPair> + '_ {
        self.labels.iter().filter(|(_, l)| l.is_match()).map(|(p, _)| *p)
    }

    pub fn non_matches(&self) -> impl Iterator<Item = ElementPair> + '_ {
        self.labels.iter().filter(|(_, l)| !l.is_match()).map(|(p, _)| *p)
    }

    pub fn matches_of(&self, kind: ElementKind) -> impl Iterator<Item = ElementPair> + '_ {
        self.matches().filter(move |p| p.kind == kind)
    }

    pub fn num_matches(&self) -> usize {
        self.matches().count()
    }
}

/// One listwise term: a labeled match and the pairs it is contrasted with.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignExample {
    pub pos: ElementPair,
    pub negs: Vec<ElementPair>,
}

const MAX_ATTEMPTS: usize = 20;

fn random_element(ds: &Dataset, kind: ElementKind, left: bool, rng: &mut Rng) -> Option<usize> {
    let kg = if left { &ds.kg1 } else { &ds.kg2 };
    let n = match kind {
        ElementKind::Relation => kg.num_base_relations(),
        _ => kg.num_elements(kind),
    };
    if n == 0 {
        return None;
    }
    let i = rng.gen_range(0..n);
    Some(if kind == ElementKind::Relation { 2 * i } else { i })
}

/// For every labeled match, `per_pos` negatives made by replacing one side at
/// random, plus every labeled non-match sharing an endpoint with it.
pub fn sample_alignment_examples(ds: &Dataset, labels: &LabeledSets, per_pos: usize, rng: &mut Rng) -> Vec<AlignExample> {
    let mut hard: HashMap<(ElementKind, bool, usize), Vec<ElementPair>> = HashMap::new();
    for p in labels.non_matches() {
        hard.entry((p.kind, true, p.left)).or_default().push(p);
        hard.entry((p.kind, false, p.right)).or_default().push(p);
    }
    let mut out = Vec::new();
    for pos in labels.matches() {
        let mut negs = Vec::with_capacity(per_pos);
        for _ in 0..per_pos {
            for _ in 0..MAX_ATTEMPTS {
                let left = rng.gen_bool(0.5);
                let Some(x) = random_element(ds, pos.kind, !left, rng) else {
                    break;
                };
                let neg = if left {
                    ElementPair { right: x, ..pos }
                } else {
                    ElementPair { left: x, ..pos }
                };
                if neg != pos && !labels.is_match(&neg) {
                    negs.push(neg);
                    break;
                }
            }
        }
        for key in [(pos.kind, true, pos.left), (pos.kind, false, pos.right)] {
            if let Some(h) = hard.get(&key) {
                negs.extend(h.iter().copied());
            }
        }
        if !negs.is_empty() {
            out.push(AlignExample { pos, negs });
        }
    }
    out
}

/// Summed listwise loss `-log softmax_pos(S / Z)` over the examples, or its
/// focal form `-(1 - p)^gamma log p`, with the gradient.
pub fn alignment_example_loss(
    jm: &JointModel,
    f: &DerivedFeatures,
    examples: &[AlignExample],
    focal: bool,
) -> (f64, JointGrads) {
    let cfg = &jm.align.config;
    let mut g = jm.zero_grads();
    let mut loss = 0.0;
    for ex in examples {
        let z = cfg.temperature(ex.pos.kind);
        let pairs: Vec<&ElementPair> = std::iter::once(&ex.pos).chain(&ex.negs).collect();
        let logits: Vec<f64> = pairs.iter().map(|p| jm.sim(f, p) / z).collect();
        let probs = linalg::softmax(&logits);
        let p0 = probs[0];
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
        let log_p0 = logits[0] - lse;
        // dL/dlogit_i = phi'(p0) * p0 * (delta_i0 - p_i)
        let (term, dphi_p0) = if focal {
            let q = 1.0 - p0;
            if q <= 0.0 {
                (0.0, 0.0)
            } else {
                let gamma = cfg.gamma;
                let term = -q.powf(gamma) * log_p0;
                let dphi = gamma * q.powf(gamma - 1.0) * log_p0 - q.powf(gamma) / p0;
                (term, dphi * p0)
            }
        } else {
            (-log_p0, -1.0)
        };
        loss += term;
        if dphi_p0 == 0.0 {
            continue;
        }
        for (i, p) in pairs.iter().enumerate() {
            let delta = if i == 0 { 1.0 } else { 0.0 };
            let dl = dphi_p0 * (delta - probs[i]) / z;
            jm.sim_backward(f, p, dl, &mut g);
        }
    }
    (loss, g)
}

pub fn alignment_loss(
    jm: &JointModel,
    f: &DerivedFeatures,
    ds: &Dataset,
    labels: &LabeledSets,
    per_pos: usize,
    focal: bool,
    rng: &mut Rng,
) -> (f64, JointGrads) {
    let ex = sample_alignment_examples(ds, labels, per_pos, rng);
    alignment_example_loss(jm, f, &ex, focal)
}

/// `-sum S0(x, x') S(x, x')` over mined pairs, `S0` frozen.
pub fn semi_loss(jm: &JointModel, f: &DerivedFeatures, mined: &[(ElementPair, f64)]) -> (f64, JointGrads) {
    let mut g = jm.zero_grads();
    let mut loss = 0.0;
    for (p, s0) in mined {
        loss -= s0 * jm.sim_backward(f, p, -s0, &mut g);
    }
    (loss, g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_are_write_once() {
        let mut l = LabeledSets::default();
        let p = ElementPair::entity(1, 2);
        assert_eq!(l.insert(p, Label::Match), Ok(true));
        assert_eq!(l.insert(p, Label::Match), Ok(false));
        assert_eq!(l.insert(p, Label::NonMatch), Err(Label::Match));
        assert_eq!(l.num_matches(), 1);
    }
}
