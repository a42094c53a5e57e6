use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::infer::PowerTable;
use crate::par::Exec;

/// `prod_{q in Q+} p(q) * prod_{q in Q \ Q+} (1 - p(q))`.
pub fn batch_probability(probs: &[f64], plus: &[bool]) -> f64 {
    probs
        .iter()
        .zip(plus)
        .map(|(&p, &m)| if m { p } else { 1.0 - p })
        .product()
}

/// Expected overall power bookkeeping for a growing batch. Targets already
/// inferred from the labeled matches carry a floor, which acts as a source
/// known to match.
#[derive(Debug, Clone)]
pub struct GainState<'a> {
    table: &'a PowerTable,
    probs: Vec<f64>,
    floor: Vec<f64>,
    batch: Vec<usize>,
    /// Per target, `(power, probability)` of batch members reaching it,
    /// sorted by descending power.
    reach: Vec<Vec<(f64, f64)>>,
}

/// `E[(a - max(floor, M))_+]` where `M` is the largest power among the
/// sources of `list` that turn out to match.
fn expected_excess(a: f64, floor: f64, list: &[(f64, f64)]) -> f64 {
    if a <= floor {
        return 0.0;
    }
    let mut survive = 1.0;
    let mut acc = 0.0;
    for &(p, pi) in list {
        if p < a {
            acc += survive * pi * (a - p.max(floor));
        }
        survive *= 1.0 - pi;
    }
    acc + survive * (a - floor)
}

fn expected_max(floor: f64, list: &[(f64, f64)]) -> f64 {
    let mut survive = 1.0;
    let mut acc = 0.0;
    for &(p, pi) in list {
        acc += survive * pi * p.max(floor);
        survive *= 1.0 - pi;
    }
    acc + survive * floor
}

impl<'a> GainState<'a> {
    /// `probs` and `floor` are indexed by table node.
    pub fn new(table: &'a PowerTable, probs: Vec<f64>, floor: Vec<f64>) -> Self {
        let n = table.num_nodes();
        assert_eq!(probs.len(), n);
        assert_eq!(floor.len(), n);
        GainState {
            table,
            probs,
            floor,
            batch: Vec::new(),
            reach: vec![Vec::new(); n],
        }
    }

    pub fn batch(&self) -> &[usize] {
        &self.batch
    }

    pub fn probability(&self, q: usize) -> f64 {
        self.probs[q]
    }

    /// Increase of the expected overall power from adding `q` to the batch.
    pub fn gain(&self, q: usize) -> f64 {
        let pi = self.probs[q];
        if pi <= 0.0 {
            return 0.0;
        }
        let s: f64 = self
            .table
            .row(q)
            .iter()
            .map(|&(t, a)| expected_excess(a, self.floor[t], &self.reach[t]))
            .sum();
        pi * s
    }

    pub fn push(&mut self, q: usize) {
        let pi = self.probs[q];
        for &(t, a) in self.table.row(q) {
            let list = &mut self.reach[t];
            let at = list.partition_point(|x| x.0 >= a);
            list.insert(at, (a, pi));
        }
        self.batch.push(q);
    }

    /// Expected overall power of the current batch on top of the floors.
    pub fn objective(&self) -> f64 {
        (0..self.reach.len()).map(|t| expected_max(self.floor[t], &self.reach[t])).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GreedyMode {
    /// Re-evaluates every candidate each step.
    Plain,
    /// Re-evaluates stale upper bounds only, relying on diminishing gains.
    #[default]
    Lazy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selected {
    pub node: usize,
    pub gain: f64,
    pub probability: f64,
}

#[derive(PartialEq)]
struct Entry(f64, Reverse<usize>);

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Entry {
    fn cmp(&self, o: &Self) -> Ordering {
        self.0.total_cmp(&o.0).then(self.1.cmp(&o.1))
    }
}

/// Greedy maximization of the expected overall power: repeatedly adds the
/// candidate with the largest gain, smallest node id first on ties.
pub fn greedy_select(
    state: &mut GainState,
    candidates: &[usize],
    budget: usize,
    mode: GreedyMode,
    exec: Exec,
) -> Vec<Selected> {
    let mut cands: Vec<usize> = candidates.to_vec();
    cands.sort_unstable();
    cands.dedup();
    let budget = budget.min(cands.len());
    let mut out = Vec::with_capacity(budget);
    match mode {
        GreedyMode::Plain => {
            let mut taken = vec![false; cands.len()];
            for _ in 0..budget {
                let gains = exec.map_range(cands.len(), |i| if taken[i] { f64::NEG_INFINITY } else { state.gain(cands[i]) });
                let mut best = None::<usize>;
                for (i, &g) in gains.iter().enumerate() {
                    if taken[i] {
                        continue;
                    }
                    if best.is_none_or(|b| g > gains[b]) {
                        best = Some(i);
                    }
                }
                let i = best.expect("budget bounded by candidates");
                taken[i] = true;
                let q = cands[i];
                out.push(Selected {
                    node: q,
                    gain: gains[i],
                    probability: state.probability(q),
                });
                state.push(q);
            }
        }
        GreedyMode::Lazy => {
            let init = exec.map_slice(&cands, |&q| state.gain(q));
            let mut heap: BinaryHeap<(Entry, usize)> =
                cands.iter().zip(init).map(|(&q, g)| (Entry(g, Reverse(q)), 0)).collect();
            let mut round = 0;
            while out.len() < budget {
                let (Entry(_, Reverse(q)), seen) = heap.pop().expect("budget bounded by candidates");
                if seen == round {
                    out.push(Selected {
                        node: q,
                        gain: state.gain(q),
                        probability: state.probability(q),
                    });
                    state.push(q);
                    round += 1;
                } else {
                    heap.push((Entry(state.gain(q), Reverse(q)), round));
                }
            }
        }
    }
    out
}
