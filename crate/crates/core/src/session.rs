//! The active-learning session: seed/test splits, pretraining, pool and
//! alignment graph, batch selection, label intake and fine-tuning rounds.
//!
//! All randomness derives from the configured seed and the round number, so
//! a session reloaded from a snapshot, or rebuilt by replaying its label
//! events, selects the same batches as the original.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{fine_tune, pool_probabilities, pretrain, AlignError, DerivedFeatures, JointModel, LabeledSets, SimCache};
use crate::config::{ExperimentConfig, Selector};
use crate::graph::{pair_label, AlignmentGraph, RelPair};
use crate::harness::{
    binary_entropy, degree_select, evaluate, pagerank, EvalError, EvalSplit, MetricsReport, Oracle,
};
use crate::infer::{EdgeDiffs, InferConfig, InferContext, PowerTable};
use crate::kg::{Dataset, ElementKind, ElementPair, GoldLinks, Label};
use crate::par::Exec;
use crate::rng::{derive_seed, stream};
use crate::select::{cross_partition_mask, generate_pool, greedy_select, GainState, GreedyMode, Partition, Selected};

const SNAPSHOT_HEADER: &str = "kgalign-session 1";

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("pair `{0}` is not in the pending batch")]
    NotPending(String),
    #[error("pair `{0}` was already labeled {1:?}")]
    Conflict(String, Label),
    #[error("malformed pair id `{0}`")]
    BadPairId(String),
    #[error("no batch is pending")]
    NoBatch,
    #[error("the pending batch still misses {0} labels")]
    Incomplete(usize),
    #[error("the label budget is used up")]
    BudgetExhausted,
    #[error(transparent)]
    Train(#[from] AlignError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("bad snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// `kind:left:right` with numeric ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairId(pub ElementPair);

impl fmt::Display for PairId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.0.kind.as_str(), self.0.left, self.0.right)
    }
}

impl FromStr for PairId {
    type Err = SessionError;
    fn from_str(s: &str) -> Result<Self, SessionError> {
        let bad = || SessionError::BadPairId(s.to_string());
        let mut it = s.split(':');
        let (Some(k), Some(l), Some(r), None) = (it.next(), it.next(), it.next(), it.next()) else {
            return Err(bad());
        };
        Ok(PairId(ElementPair {
            kind: k.parse().map_err(|_| bad())?,
            left: l.parse().map_err(|_| bad())?,
            right: r.parse().map_err(|_| bad())?,
        }))
    }
}

pub fn pair_id(p: &ElementPair) -> String {
    PairId(*p).to_string()
}

/// Gold entity links divided into seed labels, held-out test pairs and the
/// rest, which the loop may discover.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub seeds: Vec<(usize, usize)>,
    pub test: Vec<(usize, usize)>,
    pub unlabeled: Vec<(usize, usize)>,
}

pub fn split_links(links: &GoldLinks, seed_fraction: f64, test_fraction: f64, seed: u64) -> Splits {
    let mut all = links.entities.clone();
    all.sort_unstable();
    all.shuffle(&mut stream(seed, "split", 0));
    let n = all.len() as f64;
    let n_seed = (n * seed_fraction).round() as usize;
    let n_test = ((n * test_fraction).round() as usize).min(all.len() - n_seed.min(all.len()));
    let unlabeled = all.split_off((n_seed + n_test).min(all.len()));
    let test = all.split_off(n_seed.min(all.len()));
    Splits {
        seeds: all,
        test,
        unlabeled,
    }
}

pub fn seed_labels(splits: &Splits) -> LabeledSets {
    let mut labels = LabeledSets::default();
    for &(l, r) in &splits.seeds {
        labels.insert(ElementPair::entity(l, r), Label::Match).expect("gold links are consistent");
    }
    labels
}

/// Structural pretraining followed by joint training on the seed labels.
pub fn pretrain_model(config: &ExperimentConfig, ds: &Dataset, splits: &Splits) -> Result<(JointModel, DerivedFeatures), AlignError> {
    let mut jm = JointModel::new(ds, config.embed, config.align, derive_seed(config.seed, "model", 0));
    let f = pretrain(
        &mut jm,
        ds,
        &seed_labels(splits),
        &[],
        &config.pretrain_options(),
        derive_seed(config.seed, "pretrain", 0),
    )?;
    Ok((jm, f))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchItem {
    pub pair_id: String,
    pub kind: ElementKind,
    pub left: String,
    pub right: String,
    pub similarity: f64,
    pub probability: f64,
    /// Selector score: expected gain for the inference-power selectors,
    /// entropy, degree or PageRank for the baselines, 0 for random.
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingBatch {
    pub round: usize,
    pub items: Vec<BatchItem>,
    /// Labels received so far, by pair id.
    pub received: BTreeMap<String, Label>,
}

impl PendingBatch {
    pub fn missing(&self) -> usize {
        self.items.len() - self.received.len()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.items.iter().any(|x| x.pair_id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEvent {
    pub round: usize,
    pub pair_id: String,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordOutcome {
    pub accepted: usize,
    /// Resubmissions of labels already recorded.
    pub duplicates: usize,
    /// Batch members still unlabeled.
    pub missing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub selector: Selector,
    pub round: usize,
    /// Oracle queries spent so far, seeds excluded.
    pub labels_used: usize,
    pub batch_size: usize,
    /// Labeled matches of every kind, seeds included.
    pub labeled_matches: usize,
    /// `labeled_matches` over all gold links.
    pub match_fraction: f64,
    pub metrics: MetricsReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementContext {
    pub name: String,
    /// `(relation, neighbor)`; class membership shows up as `("type", class)`.
    pub neighbors: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNeighbor {
    pub relation: String,
    pub pair_id: String,
    pub label: Option<Label>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairContext {
    pub pair_id: String,
    pub kind: ElementKind,
    pub left: ElementContext,
    pub right: ElementContext,
    pub similarity: f64,
    pub label: Option<Label>,
    /// Out-edges of the pair in the alignment graph.
    pub graph: Vec<GraphNeighbor>,
}

const CONTEXT_LIMIT: usize = 20;

fn element_context(ds: &Dataset, left: bool, kind: ElementKind, id: usize) -> ElementContext {
    let kg = if left { &ds.kg1 } else { &ds.kg2 };
    let mut neighbors = Vec::new();
    match kind {
        ElementKind::Entity => {
            for &(r, x) in kg.out_edges(id).iter().take(CONTEXT_LIMIT) {
                neighbors.push((kg.relation_name(r), kg.entity_name(x).to_string()));
            }
            for &c in kg.classes_of(id) {
                neighbors.push(("type".to_string(), kg.class_name(c).to_string()));
            }
        }
        ElementKind::Relation => {
            for &t in kg.triples_of(id).iter().take(CONTEXT_LIMIT) {
                let t = kg.triples()[t];
                neighbors.push((kg.entity_name(t.head).to_string(), kg.entity_name(t.tail).to_string()));
            }
        }
        ElementKind::Class => {
            for &e in kg.members_of(id).iter().take(CONTEXT_LIMIT) {
                neighbors.push(("member".to_string(), kg.entity_name(e).to_string()));
            }
        }
    }
    ElementContext {
        name: kg.element_name(kind, id),
        neighbors,
    }
}

/// Inputs of one inference-power selection.
pub struct SelectionInput<'a> {
    pub ds: &'a Dataset,
    pub jm: &'a JointModel,
    pub features: &'a DerivedFeatures,
    pub graph: &'a AlignmentGraph,
    pub labels: &'a LabeledSets,
    pub infer: InferConfig,
    pub greedy: GreedyMode,
    /// Seed of the sampled edge bounds.
    pub seed: u64,
    pub exec: Exec,
}

pub struct PowerSelection {
    pub selected: Vec<Selected>,
    pub partition: Option<Partition>,
    /// The thresholded table the gains were computed on.
    pub table: PowerTable,
}

impl SelectionInput<'_> {
    pub fn known_matches(&self) -> Vec<usize> {
        (0..self.graph.num_nodes()).filter(|&i| self.labels.is_match(&self.graph.node(i))).collect()
    }

    /// Thresholded power table with rows for `sources` plus the labeled
    /// matches, optionally restricted to the edges in `mask`.
    pub fn power_table(&self, diffs: &EdgeDiffs, sources: &[usize], mask: Option<&[bool]>) -> PowerTable {
        let known = self.known_matches();
        let ctx = self.context(diffs, known.clone());
        let mut all: Vec<usize> = sources.iter().copied().chain(known).collect();
        all.sort_unstable();
        all.dedup();
        ctx.power_table(&all, mask, self.exec).thresholded(self.infer.kappa)
    }

    fn context<'b>(&'b self, diffs: &'b EdgeDiffs, known: Vec<usize>) -> InferContext<'b> {
        InferContext {
            ds: self.ds,
            jm: self.jm,
            features: self.features,
            graph: self.graph,
            diffs,
            config: self.infer,
            known_matches: known,
        }
    }

    pub fn edge_diffs(&self) -> EdgeDiffs {
        EdgeDiffs::compute(self.graph, self.jm, &self.infer, self.seed, self.exec)
    }

    /// Greedy maximization of the expected overall power over `cands`.
    /// `probs` is indexed by graph node. With `rho` set, the pool is
    /// partitioned first and powers only travel across partitions.
    pub fn select(&self, probs: &[f64], cands: &[usize], budget: usize, rho: Option<f64>) -> PowerSelection {
        let diffs = self.edge_diffs();
        self.select_with(&diffs, probs, cands, budget, rho)
    }

    pub fn select_with(&self, diffs: &EdgeDiffs, probs: &[f64], cands: &[usize], budget: usize, rho: Option<f64>) -> PowerSelection {
        let known = self.known_matches();
        let (partition, mask) = match rho {
            None => (None, None),
            Some(rho) => {
                let powers = self.context(diffs, known.clone()).edge_powers(self.exec);
                let p = crate::select::partition_pool(self.graph, &powers, rho, self.graph.num_nodes());
                let m = cross_partition_mask(self.graph, &p);
                (Some(p), Some(m))
            }
        };
        let table = self.power_table(diffs, cands, mask.as_deref());
        let floor = table.best_from(&known);
        let probs: Vec<f64> = (0..self.graph.num_nodes())
            .map(|i| match self.labels.get(&self.graph.node(i)) {
                Some(Label::Match) => 1.0,
                Some(Label::NonMatch) => 0.0,
                None => probs[i],
            })
            .collect();
        let mut state = GainState::new(&table, probs, floor);
        let selected = greedy_select(&mut state, cands, budget, self.greedy, self.exec);
        drop(state);
        PowerSelection {
            selected,
            partition,
            table,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Snapshot {
    config: ExperimentConfig,
    model: JointModel,
    features: DerivedFeatures,
    labels: LabeledSets,
    universe: Vec<ElementPair>,
    round: usize,
    labels_used: usize,
    pending: Option<PendingBatch>,
    events: Vec<LabelEvent>,
    records: Vec<RoundRecord>,
}

#[derive(Debug, Clone)]
pub struct ActiveSession {
    config: ExperimentConfig,
    ds: Dataset,
    splits: Splits,
    model: JointModel,
    features: DerivedFeatures,
    labels: LabeledSets,
    graph: AlignmentGraph,
    round: usize,
    labels_used: usize,
    pending: Option<PendingBatch>,
    events: Vec<LabelEvent>,
    records: Vec<RoundRecord>,
    /// Record wall-clock seconds per round; off by default so reports are
    /// byte-reproducible.
    pub timings: bool,
}

impl ActiveSession {
    /// Pretrains on the seed labels, builds the pool and evaluates round 0.
    pub fn new(config: ExperimentConfig, ds: Dataset) -> Result<Self, SessionError> {
        let splits = split_links(&ds.links, config.run.seed_fraction, config.run.test_fraction, config.seed);
        let (model, features) = pretrain_model(&config, &ds, &splits)?;
        Self::from_model(config, ds, model, features)
    }

    /// Starts from an already trained model.
    pub fn from_model(config: ExperimentConfig, ds: Dataset, model: JointModel, features: DerivedFeatures) -> Result<Self, SessionError> {
        let splits = split_links(&ds.links, config.run.seed_fraction, config.run.test_fraction, config.seed);
        let labels = seed_labels(&splits);
        let ex_l: HashSet<usize> = splits.test.iter().map(|p| p.0).collect();
        let ex_r: HashSet<usize> = splits.test.iter().map(|p| p.1).collect();
        let mut universe = generate_pool(&model, &ds, &features, config.select.neighbors, &ex_l, &ex_r, config.exec);
        universe.extend(labels.matches());
        universe.sort_unstable();
        universe.dedup();
        let graph = AlignmentGraph::build(&ds, &universe);
        let mut s = ActiveSession {
            config,
            ds,
            splits,
            model,
            features,
            labels,
            graph,
            round: 0,
            labels_used: 0,
            pending: None,
            events: Vec::new(),
            records: Vec::new(),
            timings: false,
        };
        let rec = s.record(0, None)?;
        s.records.push(rec);
        Ok(s)
    }

    /// A copy that continues with another selector; meant for comparing
    /// selectors from one pretrained state.
    pub fn with_selector(&self, selector: Selector) -> Self {
        let mut s = self.clone();
        s.config.run.selector = selector;
        for r in &mut s.records {
            r.selector = selector;
        }
        s
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn dataset(&self) -> &Dataset {
        &self.ds
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    pub fn model(&self) -> &JointModel {
        &self.model
    }

    pub fn features(&self) -> &DerivedFeatures {
        &self.features
    }

    pub fn labels(&self) -> &LabeledSets {
        &self.labels
    }

    pub fn graph(&self) -> &AlignmentGraph {
        &self.graph
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn labels_used(&self) -> usize {
        self.labels_used
    }

    pub fn budget_left(&self) -> usize {
        self.config.run.labels.saturating_sub(self.labels_used)
    }

    pub fn pending(&self) -> Option<&PendingBatch> {
        self.pending.as_ref()
    }

    pub fn events(&self) -> &[LabelEvent] {
        &self.events
    }

    pub fn records(&self) -> &[RoundRecord] {
        &self.records
    }

    pub fn eval_split(&self) -> EvalSplit {
        let unlabeled = |kind: ElementKind| -> Vec<(usize, usize)> {
            self.ds
                .links
                .of_kind(kind)
                .iter()
                .copied()
                .filter(|&(l, r)| !self.labels.contains(&ElementPair { kind, left: l, right: r }))
                .collect()
        };
        EvalSplit {
            entity: self.splits.test.clone(),
            relation: unlabeled(ElementKind::Relation),
            class: unlabeled(ElementKind::Class),
        }
    }

    pub fn evaluate(&self) -> Result<MetricsReport, SessionError> {
        let cache = SimCache::new(&self.model, &self.features);
        Ok(evaluate(&cache, &self.ds, &self.eval_split(), self.config.run.eval_floor, self.config.exec)?)
    }

    fn record(&self, batch_size: usize, seconds: Option<f64>) -> Result<RoundRecord, SessionError> {
        let labeled_matches = self.labels.num_matches();
        let total = self.ds.links.len().max(1);
        Ok(RoundRecord {
            selector: self.config.run.selector,
            round: self.round,
            labels_used: self.labels_used,
            batch_size,
            labeled_matches,
            match_fraction: labeled_matches as f64 / total as f64,
            metrics: self.evaluate()?,
            seconds,
        })
    }

    /// Match probability of every graph node under the current model.
    pub fn probabilities(&self) -> Vec<f64> {
        let cache = SimCache::new(&self.model, &self.features);
        pool_probabilities(&cache, &self.config.align, self.graph.nodes(), self.config.exec)
    }

    /// Unlabeled graph nodes.
    pub fn candidates(&self) -> Vec<usize> {
        (0..self.graph.num_nodes()).filter(|&i| !self.labels.contains(&self.graph.node(i))).collect()
    }

    pub fn selection_input(&self) -> SelectionInput<'_> {
        SelectionInput {
            ds: &self.ds,
            jm: &self.model,
            features: &self.features,
            graph: &self.graph,
            labels: &self.labels,
            infer: self.config.infer,
            greedy: self.config.run.greedy,
            seed: derive_seed(self.config.seed, "bounds", self.round as u64),
            exec: self.config.exec,
        }
    }

    /// Unlabeled pairs the labeled matches infer with power above kappa,
    /// with that power.
    pub fn inferred_pairs(&self) -> Vec<(ElementPair, f64)> {
        let inp = self.selection_input();
        let known = inp.known_matches();
        let table = inp.power_table(&inp.edge_diffs(), &[], None);
        table
            .best_from(&known)
            .into_iter()
            .enumerate()
            .filter(|&(i, p)| p > 0.0 && !self.labels.contains(&self.graph.node(i)))
            .map(|(i, p)| (self.graph.node(i), p))
            .collect()
    }

    fn choose(&self, budget: usize) -> Vec<(usize, f64)> {
        let cands = self.candidates();
        let sel = self.config.run.selector;
        let scored = |score: &dyn Fn(usize) -> f64, picked: Vec<usize>| picked.into_iter().map(|q| (q, score(q))).collect();
        match sel {
            Selector::Random => {
                let mut rng = stream(self.config.seed, "select-random", self.round as u64);
                crate::harness::random_select(&cands, budget, &mut rng).into_iter().map(|q| (q, 0.0)).collect()
            }
            Selector::Degree => scored(&|q| self.graph.degree(q) as f64, degree_select(&self.graph, &cands, budget)),
            Selector::Pagerank => {
                let pr = pagerank(&self.graph, 0.85, 50);
                scored(&|q| pr[q], crate::harness::pagerank_select(&self.graph, &cands, budget))
            }
            Selector::Uncertainty => {
                let probs = self.probabilities();
                scored(&|q| binary_entropy(probs[q]), crate::harness::uncertainty_select(&probs, &cands, budget))
            }
            Selector::DaakgGreedy | Selector::DaakgPartition => {
                let probs = self.probabilities();
                let rho = (sel == Selector::DaakgPartition).then_some(self.config.select.rho);
                self.selection_input()
                    .select(&probs, &cands, budget, rho)
                    .selected
                    .into_iter()
                    .map(|s| (s.node, s.gain))
                    .collect()
            }
        }
    }

    /// The pending batch, selecting a new one when none is pending. The
    /// batch never exceeds the per-round budget or the labels left.
    pub fn select_batch(&mut self) -> Result<&PendingBatch, SessionError> {
        if self.pending.is_none() {
            let budget = self.config.select.budget.min(self.budget_left());
            if budget == 0 {
                return Err(SessionError::BudgetExhausted);
            }
            let chosen = self.choose(budget);
            if chosen.is_empty() {
                return Err(SessionError::BudgetExhausted);
            }
            let probs = self.probabilities();
            let cache = SimCache::new(&self.model, &self.features);
            let items = chosen
                .into_iter()
                .map(|(q, gain)| {
                    let p = self.graph.node(q);
                    BatchItem {
                        pair_id: pair_id(&p),
                        kind: p.kind,
                        left: self.ds.kg1.element_name(p.kind, p.left),
                        right: self.ds.kg2.element_name(p.kind, p.right),
                        similarity: cache.sim_pair(&p),
                        probability: probs[q],
                        gain,
                    }
                })
                .collect();
            self.pending = Some(PendingBatch {
                round: self.round,
                items,
                received: BTreeMap::new(),
            });
        }
        Ok(self.pending.as_ref().expect("just set"))
    }

    /// Records labels for members of the pending batch. Either every label
    /// in `labels` is applied or none is. Resubmitting a label that is
    /// already recorded, in this batch or an earlier one, is a no-op.
    pub fn record_labels(&mut self, labels: &[(String, Label)]) -> Result<RecordOutcome, SessionError> {
        let mut fresh: BTreeMap<&str, Label> = BTreeMap::new();
        let mut duplicates = 0;
        for (id, label) in labels {
            let p = id.parse::<PairId>()?.0;
            let earlier = self
                .labels
                .get(&p)
                .or_else(|| self.pending.as_ref().and_then(|b| b.received.get(id).copied()))
                .or_else(|| fresh.get(id.as_str()).copied());
            match earlier {
                Some(old) if old == *label => duplicates += 1,
                Some(old) => return Err(SessionError::Conflict(id.clone(), old)),
                None => {
                    if !self.pending.as_ref().is_some_and(|b| b.contains(id)) {
                        return Err(SessionError::NotPending(id.clone()));
                    }
                    fresh.insert(id, *label);
                }
            }
        }
        let round = self.round;
        let accepted = fresh.len();
        if let Some(pending) = self.pending.as_mut() {
            for (id, label) in &fresh {
                pending.received.insert(id.to_string(), *label);
            }
        }
        // events keep submission order
        for (id, label) in labels {
            if fresh.remove(id.as_str()).is_some() {
                self.events.push(LabelEvent {
                    round,
                    pair_id: id.clone(),
                    label: *label,
                });
            }
        }
        Ok(RecordOutcome {
            accepted,
            duplicates,
            missing: self.pending.as_ref().map_or(0, PendingBatch::missing),
        })
    }

    /// True when a batch is pending and every member carries a label.
    pub fn batch_complete(&self) -> bool {
        self.pending.as_ref().is_some_and(|b| b.missing() == 0)
    }

    /// Applies the complete pending batch, fine-tunes and evaluates.
    pub fn train_round(&mut self) -> Result<&RoundRecord, SessionError> {
        let start = Instant::now();
        let pending = self.pending.as_ref().ok_or(SessionError::NoBatch)?;
        if pending.missing() > 0 {
            return Err(SessionError::Incomplete(pending.missing()));
        }
        let pending = self.pending.take().expect("checked above");
        for item in &pending.items {
            let p = item.pair_id.parse::<PairId>()?.0;
            self.labels
                .insert(p, pending.received[&item.pair_id])
                .map_err(|old| SessionError::Conflict(item.pair_id.clone(), old))?;
        }
        self.labels_used += pending.items.len();
        let inferred = if self.config.run.infer_labels { self.inferred_pairs() } else { Vec::new() };
        fine_tune(
            &mut self.model,
            &self.ds,
            &mut self.features,
            &self.labels,
            self.graph.nodes(),
            &inferred,
            &self.config.finetune_options(),
            self.config.run.semi,
            derive_seed(self.config.seed, "finetune", self.round as u64),
        )?;
        self.round += 1;
        let secs = self.timings.then(|| start.elapsed().as_secs_f64());
        let rec = self.record(pending.items.len(), secs)?;
        self.records.push(rec);
        Ok(self.records.last().expect("just pushed"))
    }

    /// Runs rounds against `oracle` until the label budget is spent.
    pub fn run_simulated(&mut self, oracle: &mut Oracle) -> Result<(), SessionError> {
        loop {
            let batch = match self.select_batch() {
                Ok(b) => b,
                Err(SessionError::BudgetExhausted) => return Ok(()),
                Err(e) => return Err(e),
            };
            let answers: Vec<(String, Label)> = batch
                .items
                .iter()
                .map(|it| {
                    let p = it.pair_id.parse::<PairId>().expect("ids are generated").0;
                    (it.pair_id.clone(), oracle.label(&p))
                })
                .collect();
            self.record_labels(&answers)?;
            self.train_round()?;
        }
    }

    /// Rebuilds a session from its label events. The model is pretrained
    /// again, so the result matches the original only under the same
    /// configuration and dataset.
    pub fn replay(config: ExperimentConfig, ds: Dataset, events: &[LabelEvent]) -> Result<Self, SessionError> {
        let mut s = ActiveSession::new(config, ds)?;
        let mut i = 0;
        while i < events.len() {
            let round = events[i].round;
            let mut j = i;
            while j < events.len() && events[j].round == round {
                j += 1;
            }
            if round != s.round {
                return Err(SessionError::Snapshot(format!("event for round {round} while at round {}", s.round)));
            }
            s.select_batch()?;
            let batch: Vec<(String, Label)> = events[i..j].iter().map(|e| (e.pair_id.clone(), e.label)).collect();
            s.record_labels(&batch)?;
            if s.batch_complete() {
                s.train_round()?;
            }
            i = j;
        }
        Ok(s)
    }

    pub fn pair_context(&self, id: &str) -> Result<PairContext, SessionError> {
        let p = id.parse::<PairId>()?.0;
        let node = self.graph.node_id(&p).ok_or_else(|| SessionError::NotPending(id.to_string()))?;
        let cache = SimCache::new(&self.model, &self.features);
        let graph = self
            .graph
            .out(node)
            .iter()
            .take(CONTEXT_LIMIT)
            .map(|e| {
                let q = self.graph.node(e.dst);
                let relation = match e.rel {
                    RelPair::Rel(r, r2) => format!("{}|{}", self.ds.kg1.relation_name(r), self.ds.kg2.relation_name(r2)),
                    RelPair::Type => "type".to_string(),
                    RelPair::TypeInv => "member".to_string(),
                };
                GraphNeighbor {
                    relation,
                    pair_id: pair_id(&q),
                    label: self.labels.get(&q),
                }
            })
            .collect();
        Ok(PairContext {
            pair_id: pair_id(&p),
            kind: p.kind,
            left: element_context(&self.ds, true, p.kind, p.left),
            right: element_context(&self.ds, false, p.kind, p.right),
            similarity: cache.sim_pair(&p),
            label: self.labels.get(&p),
            graph,
        })
    }

    pub fn pair_label(&self, p: &ElementPair) -> String {
        pair_label(&self.ds, p)
    }

    pub fn save<W: Write>(&self, mut out: W) -> Result<(), SessionError> {
        let snap = Snapshot {
            config: self.config,
            model: self.model.clone(),
            features: self.features.clone(),
            labels: self.labels.clone(),
            universe: self.graph.nodes().to_vec(),
            round: self.round,
            labels_used: self.labels_used,
            pending: self.pending.clone(),
            events: self.events.clone(),
            records: self.records.clone(),
        };
        writeln!(out, "{SNAPSHOT_HEADER}")?;
        serde_json::to_writer(&mut out, &snap).map_err(|e| SessionError::Snapshot(e.to_string()))?;
        writeln!(out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load<R: BufRead>(mut input: R, ds: Dataset) -> Result<Self, SessionError> {
        let mut header = String::new();
        input.read_line(&mut header)?;
        if header.trim_end() != SNAPSHOT_HEADER {
            return Err(SessionError::Snapshot(format!("unexpected header `{}`", header.trim_end())));
        }
        let snap: Snapshot = serde_json::from_reader(input).map_err(|e| SessionError::Snapshot(e.to_string()))?;
        let splits = split_links(&ds.links, snap.config.run.seed_fraction, snap.config.run.test_fraction, snap.config.seed);
        let graph = AlignmentGraph::build(&ds, &snap.universe);
        Ok(ActiveSession {
            config: snap.config,
            ds,
            splits,
            model: snap.model,
            features: snap.features,
            labels: snap.labels,
            graph,
            round: snap.round,
            labels_used: snap.labels_used,
            pending: snap.pending,
            events: snap.events,
            records: snap.records,
            timings: false,
        })
    }
}

/// One JSON object per line.
pub fn write_jsonl<W: Write, T: Serialize>(mut out: W, rows: &[T]) -> io::Result<()> {
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        writeln!(out)?;
    }
    out.flush()
}

#[derive(Serialize)]
struct CurveRow {
    selector: Selector,
    round: usize,
    labels_used: usize,
    match_fraction: f64,
    entity_h1: f64,
    entity_h10: f64,
    entity_mrr: f64,
    entity_f1: f64,
    relation_h1: f64,
    relation_f1: f64,
    class_h1: f64,
    class_f1: f64,
}

/// Plot-ready curve: one CSV row per round.
pub fn write_curves_csv<W: Write>(out: W, records: &[RoundRecord]) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        let m = &r.metrics;
        w.serialize(CurveRow {
            selector: r.selector,
            round: r.round,
            labels_used: r.labels_used,
            match_fraction: r.match_fraction,
            entity_h1: m.entity.hits1,
            entity_h10: m.entity.hits10,
            entity_mrr: m.entity.mrr,
            entity_f1: m.entity.f1,
            relation_h1: m.relation.hits1,
            relation_f1: m.relation.f1,
            class_h1: m.class.hits1,
            class_f1: m.class.f1,
        })
        .map_err(io::Error::other)?;
    }
    w.flush()
}

/// `kind<TAB>left<TAB>right<TAB>gain<TAB>probability`, in selection order.
pub fn write_batch_tsv<W: Write>(mut out: W, batch: &PendingBatch) -> io::Result<()> {
    for it in &batch.items {
        writeln!(out, "{}\t{}\t{}\t{}\t{}", it.kind.as_str(), it.left, it.right, it.gain, it.probability)?;
    }
    out.flush()
}
