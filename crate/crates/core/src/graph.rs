//! The alignment graph: pool pairs as nodes, linked when both graphs have
//! corresponding edges between the endpoints.

use std::collections::{HashMap, HashSet};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{base_relation, is_inverse, Dataset, ElementKind, ElementPair, KnowledgeGraph};
use crate::par::Exec;

/// Label of an alignment-graph edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelPair {
    /// Relation ids on both sides; both base or both inverse.
    Rel(usize, usize),
    /// Entity pair to class pair.
    Type,
    /// Class pair to entity pair.
    TypeInv,
}

impl RelPair {
    /// The pool pair this edge label corresponds to, if any.
    pub fn pool_pair(&self) -> Option<ElementPair> {
        match *self {
            RelPair::Rel(r, r2) => Some(ElementPair::relation(base_relation(r), base_relation(r2))),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub rel: RelPair,
    pub dst: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("pair {0:?} is not a node of the alignment graph")]
pub struct UnknownNode(pub ElementPair);

#[derive(Debug, Clone, Default)]
pub struct AlignmentGraph {
    nodes: Vec<ElementPair>,
    index: HashMap<ElementPair, usize>,
    edges: Vec<Edge>,
    offsets: Vec<usize>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GraphOptions {
    /// Keep relation edges only when the relation pair's similarity exceeds
    /// this floor; `None` keeps every edge.
    pub relation_floor: Option<f64>,
    pub exec: Exec,
}

impl AlignmentGraph {
    pub fn build(ds: &Dataset, pool: &[ElementPair]) -> Self {
        Self::build_with(ds, pool, &GraphOptions::default(), |_, _| 1.0)
    }

    /// `rel_sim(r, r2)` is only consulted when a floor is set; it receives
    /// base relation ids.
    pub fn build_with(
        ds: &Dataset,
        pool: &[ElementPair],
        opts: &GraphOptions,
        rel_sim: impl Fn(usize, usize) -> f64 + Sync,
    ) -> Self {
        let mut nodes = pool.to_vec();
        nodes.sort_unstable();
        nodes.dedup();
        let index: HashMap<ElementPair, usize> = nodes.iter().enumerate().map(|(i, p)| (*p, i)).collect();
        let mut rel_ok: HashSet<(usize, usize)> = HashSet::new();
        for p in nodes.iter().filter(|p| p.kind == ElementKind::Relation) {
            if opts.relation_floor.is_none_or(|f| rel_sim(p.left, p.right) > f) {
                rel_ok.insert((p.left, p.right));
            }
        }
        let (kg1, kg2) = (&ds.kg1, &ds.kg2);
        let per_node: Vec<Vec<Edge>> = opts.exec.map_range(nodes.len(), |i| {
            let p = nodes[i];
            let mut out = Vec::new();
            match p.kind {
                ElementKind::Entity => {
                    for &(r, x) in kg1.out_edges(p.left) {
                        for &(r2, x2) in kg2.out_edges(p.right) {
                            if is_inverse(r) != is_inverse(r2)
                                || !rel_ok.contains(&(base_relation(r), base_relation(r2)))
                            {
                                continue;
                            }
                            if let Some(&j) = index.get(&ElementPair::entity(x, x2)) {
                                out.push(Edge { src: i, rel: RelPair::Rel(r, r2), dst: j });
                            }
                        }
                    }
                    for &c in kg1.classes_of(p.left) {
                        for &c2 in kg2.classes_of(p.right) {
                            if let Some(&j) = index.get(&ElementPair::class(c, c2)) {
                                out.push(Edge { src: i, rel: RelPair::Type, dst: j });
                            }
                        }
                    }
                }
                ElementKind::Class => {
                    for &e in kg1.members_of(p.left) {
                        for &e2 in kg2.members_of(p.right) {
                            if let Some(&j) = index.get(&ElementPair::entity(e, e2)) {
                                out.push(Edge { src: i, rel: RelPair::TypeInv, dst: j });
                            }
                        }
                    }
                }
                ElementKind::Relation => {}
            }
            out.sort_unstable();
            out
        });
        let mut edges = Vec::new();
        let mut offsets = Vec::with_capacity(nodes.len() + 1);
        offsets.push(0);
        for es in per_node {
            edges.extend(es);
            offsets.push(edges.len());
        }
        AlignmentGraph { nodes, index, edges, offsets }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[ElementPair] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> ElementPair {
        self.nodes[i]
    }

    pub fn node_id(&self, p: &ElementPair) -> Option<usize> {
        self.index.get(p).copied()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Outgoing edges of node `i`.
    pub fn out(&self, i: usize) -> &[Edge] {
        &self.edges[self.out_range(i)]
    }

    /// Indices into [`edges`](Self::edges) of the outgoing edges of node `i`.
    pub fn out_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn neighbors(&self, p: &ElementPair) -> Result<Vec<(RelPair, ElementPair)>, UnknownNode> {
        let i = self.node_id(p).ok_or(UnknownNode(*p))?;
        Ok(self.out(i).iter().map(|e| (e.rel, self.nodes[e.dst])).collect())
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// Tab-separated `source<TAB>relation pair<TAB>target` edge list.
    pub fn write_tsv<W: Write>(&self, ds: &Dataset, mut out: W) -> io::Result<()> {
        for e in &self.edges {
            let rel = match e.rel {
                RelPair::Rel(r, r2) => format!("{}|{}", ds.kg1.relation_name(r), ds.kg2.relation_name(r2)),
                RelPair::Type => "type|type".to_string(),
                RelPair::TypeInv => "type^-1|type^-1".to_string(),
            };
            writeln!(
                out,
                "{}\t{}\t{}",
                pair_label(ds, &self.nodes[e.src]),
                rel,
                pair_label(ds, &self.nodes[e.dst])
            )?;
        }
        out.flush()
    }
}

/// `left|right` element names of a pair.
pub fn pair_label(ds: &Dataset, p: &ElementPair) -> String {
    let name = |kg: &KnowledgeGraph, id: usize| kg.element_name(p.kind, id);
    format!("{}|{}", name(&ds.kg1, p.left), name(&ds.kg2, p.right))
}
