//! Simulated active learning: oracle, baseline selectors and metrics.

mod baselines;
mod metrics;

use std::collections::BTreeMap;

use crate::kg::{ElementKind, ElementPair, GoldIndex, GoldLinks, Label};

pub use baselines::*;
pub use metrics::*;

/// Answers every query with the gold label and counts what it was asked.
#[derive(Debug, Clone)]
pub struct Oracle {
    gold: GoldIndex,
    queries: usize,
    /// `(matches, non-matches)` answered per kind.
    per_kind: BTreeMap<ElementKind, (usize, usize)>,
}

impl Oracle {
    pub fn new(links: &GoldLinks) -> Self {
        Oracle {
            gold: GoldIndex::new(links),
            queries: 0,
            per_kind: BTreeMap::new(),
        }
    }

    pub fn label(&mut self, pair: &ElementPair) -> Label {
        self.queries += 1;
        let m = self.gold.is_match(pair);
        let slot = self.per_kind.entry(pair.kind).or_default();
        if m {
            slot.0 += 1;
            Label::Match
        } else {
            slot.1 += 1;
            Label::NonMatch
        }
    }

    pub fn queries(&self) -> usize {
        self.queries
    }

    pub fn counts(&self, kind: ElementKind) -> (usize, usize) {
        self.per_kind.get(&kind).copied().unwrap_or_default()
    }
}

/// Share of `inferred` pairs that are gold matches; `None` when nothing was
/// inferred.
pub fn inference_accuracy(inferred: &[ElementPair], gold: &GoldIndex) -> Option<f64> {
    if inferred.is_empty() {
        return None;
    }
    Some(inferred.iter().filter(|p| gold.is_match(p)).count() as f64 / inferred.len() as f64)
}
