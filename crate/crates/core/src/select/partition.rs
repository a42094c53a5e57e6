use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::graph::{AlignmentGraph, RelPair};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    /// Partition index per graph node.
    pub assign: Vec<usize>,
    pub count: usize,
    pub splits: usize,
    /// True when the split cap stopped the loop before every partition passed
    /// the check.
    pub capped: bool,
}

/// Smallest `outer / (inner + outer)` over members of partition `i`, where
/// inner and outer sum one-hop powers to neighbors inside and outside it.
fn retained_fraction(graph: &AlignmentGraph, power: &[f64], assign: &[usize], members: &[usize], i: usize) -> f64 {
    let mut worst = f64::INFINITY;
    for &q in members {
        let (mut inner, mut outer) = (0.0, 0.0);
        for ei in graph.out_range(q) {
            let e = graph.edges()[ei];
            if e.dst == q || power[ei] <= 0.0 {
                continue;
            }
            if assign[e.dst] == i {
                inner += power[ei];
            } else {
                outer += power[ei];
            }
        }
        if inner + outer > 0.0 {
            worst = worst.min(outer / (inner + outer));
        }
    }
    worst
}

/// Members of partition `i` to move out: sources of intra-partition edges
/// labeled with the relation pair carrying the most intra power. If that
/// would empty the partition, keep only a subset with no such edge between
/// its members, so some intra edge always becomes a crossing one.
fn split_off(graph: &AlignmentGraph, power: &[f64], assign: &[usize], members: &[usize], i: usize) -> Option<Vec<usize>> {
    let mut by_label: BTreeMap<RelPair, f64> = BTreeMap::new();
    for &q in members {
        for ei in graph.out_range(q) {
            let e = graph.edges()[ei];
            if e.dst != q && assign[e.dst] == i && power[ei] > 0.0 {
                *by_label.entry(e.rel).or_insert(0.0) += power[ei];
            }
        }
    }
    let mut best: Option<(RelPair, f64)> = None;
    for (&l, &p) in &by_label {
        if best.is_none_or(|b| p > b.1) {
            best = Some((l, p));
        }
    }
    let (label, _) = best?;
    let linked = |q: usize| {
        graph
            .out_range(q)
            .map(|ei| (ei, graph.edges()[ei]))
            .filter(move |(ei, e)| e.rel == label && e.dst != q && assign[e.dst] == i && power[*ei] > 0.0)
            .map(|(_, e)| e.dst)
    };
    let sources: Vec<usize> = members.iter().copied().filter(|&q| linked(q).next().is_some()).collect();
    if sources.len() < members.len() {
        return Some(sources);
    }
    // every member has such an edge: take an independent subset
    let mut adj: HashSet<(usize, usize)> = HashSet::new();
    for &q in members {
        for d in linked(q) {
            adj.insert((q.min(d), q.max(d)));
        }
    }
    let mut picked: Vec<usize> = Vec::new();
    for &q in members {
        if picked.iter().all(|&p| !adj.contains(&(p.min(q), p.max(q)))) {
            picked.push(q);
        }
    }
    Some(picked)
}

/// Splits the nodes of `graph` until, for every node, the share of one-hop
/// power leaving its partition is at least `rho`, or `max_splits` is reached.
/// `power` holds the one-hop power of every graph edge.
pub fn partition_pool(graph: &AlignmentGraph, power: &[f64], rho: f64, max_splits: usize) -> Partition {
    let n = graph.num_nodes();
    let mut assign = vec![0usize; n];
    let mut count = usize::from(n > 0);
    let mut splits = 0;
    let mut members: Vec<Vec<usize>> = vec![(0..n).collect()];
    loop {
        let mut split = false;
        for i in 0..count {
            if retained_fraction(graph, power, &assign, &members[i], i) >= rho {
                continue;
            }
            let Some(moved) = split_off(graph, power, &assign, &members[i], i) else {
                continue;
            };
            if splits == max_splits {
                return Partition {
                    assign,
                    count,
                    splits,
                    capped: true,
                };
            }
            let moved_set: HashSet<usize> = moved.iter().copied().collect();
            members[i].retain(|q| !moved_set.contains(q));
            for &q in &moved {
                assign[q] = count;
            }
            members.push(moved);
            count += 1;
            splits += 1;
            split = true;
            break;
        }
        if !split {
            return Partition {
                assign,
                count,
                splits,
                capped: false,
            };
        }
    }
}

/// Edge mask keeping edges between different partitions. Self-loops stay:
/// no partition can cut them, and they carry no path power.
pub fn cross_partition_mask(graph: &AlignmentGraph, p: &Partition) -> Vec<bool> {
    graph.edges().iter().map(|e| e.src == e.dst || p.assign[e.src] != p.assign[e.dst]).collect()
}
