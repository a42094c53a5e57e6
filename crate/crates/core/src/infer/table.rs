use std::collections::{HashMap, HashSet};
use std::io::{self, Write};

use super::{EdgeDiffs, InferConfig, PathSearch};
use crate::align::{DerivedFeatures, JointModel};
use crate::graph::{pair_label, AlignmentGraph, RelPair};
use crate::kg::{base_relation, is_inverse, Dataset, ElementKind, ElementPair, KnowledgeGraph};
use crate::linalg;
use crate::par::Exec;

/// Maps a gradient norm into `[0, 1)` so it is comparable with path powers.
pub fn squash(g: f64) -> f64 {
    g / (1.0 + g)
}

fn mean_branch_grads(jm: &JointModel, left_mean: &[f64], right_mean: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let a = &jm.align.a_ent;
    let (_, gu, gv) = linalg::cosine_with_grad(&a.matvec(left_mean), right_mean);
    (a.matvec_t(&gu), gv)
}

fn class_weight_total(kg: &KnowledgeGraph, c: usize, w: &[f64]) -> f64 {
    kg.members_of(c).iter().map(|&m| w[m].max(0.0)).sum()
}

/// Norm of the gradient of the mean-branch class similarity of `(c, c2)` with
/// respect to the embeddings of `e` and `e2`, weights held fixed. Zero unless
/// both memberships hold.
pub fn pair_to_class_gradient(
    jm: &JointModel,
    f: &DerivedFeatures,
    ds: &Dataset,
    (e, e2): (usize, usize),
    (c, c2): (usize, usize),
) -> f64 {
    if !ds.kg1.is_member(e, c) || !ds.kg2.is_member(e2, c2) {
        return 0.0;
    }
    let (gl, gr) = mean_branch_grads(jm, f.cbar_left.row(c), f.cbar_right.row(c2));
    let w1 = class_weight_total(&ds.kg1, c, &f.w_left);
    let w2 = class_weight_total(&ds.kg2, c2, &f.w_right);
    let s1 = if w1 > 0.0 { f.w_left[e].max(0.0) / w1 } else { 0.0 };
    let s2 = if w2 > 0.0 { f.w_right[e2].max(0.0) / w2 } else { 0.0 };
    (s1 * s1 * linalg::dot(&gl, &gl) + s2 * s2 * linalg::dot(&gr, &gr)).sqrt()
}

/// `(head, tail, base relation)` of the stored triple behind edge step
/// `src -r-> dst`.
fn base_triple(src: usize, r: usize, dst: usize) -> (usize, usize, usize) {
    if is_inverse(r) {
        (dst, src, base_relation(r))
    } else {
        (src, dst, r)
    }
}

fn triple_weight(w: &[f64], h: usize, t: usize) -> f64 {
    w[h].min(w[t]).max(0.0)
}

fn relation_weight_total(kg: &KnowledgeGraph, r: usize, w: &[f64]) -> f64 {
    kg.triples_of(r)
        .iter()
        .map(|&i| {
            let t = kg.triples()[i];
            triple_weight(w, t.head, t.tail)
        })
        .sum()
}

/// Norm of the gradient of the mean-branch relation similarity of the base
/// pair behind `(r, r2)` with respect to the per-triple argmin vectors of the
/// edge `(e, e2) -(r, r2)-> (x, x2)` (for TransE, the differences `x - e`).
pub fn pair_to_relation_gradient(
    jm: &JointModel,
    f: &DerivedFeatures,
    ds: &Dataset,
    (e, e2): (usize, usize),
    (r, r2): (usize, usize),
    (x, x2): (usize, usize),
) -> f64 {
    let (h1, t1, b1) = base_triple(e, r, x);
    let (h2, t2, b2) = base_triple(e2, r2, x2);
    if !ds.kg1.has_triple(&crate::kg::Triple { head: h1, rel: b1, tail: t1 })
        || !ds.kg2.has_triple(&crate::kg::Triple { head: h2, rel: b2, tail: t2 })
    {
        return 0.0;
    }
    let (gl, gr) = mean_branch_grads(jm, f.rbar_left.row(b1), f.rbar_right.row(b2));
    let w1 = relation_weight_total(&ds.kg1, b1, &f.w_left);
    let w2 = relation_weight_total(&ds.kg2, b2, &f.w_right);
    let s1 = if w1 > 0.0 { triple_weight(&f.w_left, h1, t1) / w1 } else { 0.0 };
    let s2 = if w2 > 0.0 { triple_weight(&f.w_right, h2, t2) / w2 } else { 0.0 };
    (s1 * s1 * linalg::dot(&gl, &gl) + s2 * s2 * linalg::dot(&gr, &gr)).sqrt()
}

/// Sparse `I(target | source)` over the nodes of an alignment graph. Each
/// computed row holds the source itself with power 1.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PowerTable {
    nodes: Vec<ElementPair>,
    rows: Vec<Vec<(usize, f64)>>,
}

impl PowerTable {
    /// Rows must be sorted by target and hold powers in `(0, 1]`.
    pub fn new(nodes: Vec<ElementPair>, rows: Vec<Vec<(usize, f64)>>) -> Self {
        assert_eq!(nodes.len(), rows.len());
        PowerTable { nodes, rows }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[ElementPair] {
        &self.nodes
    }

    pub fn row(&self, src: usize) -> &[(usize, f64)] {
        &self.rows[src]
    }

    pub fn power(&self, src: usize, dst: usize) -> f64 {
        let r = &self.rows[src];
        r.binary_search_by_key(&dst, |x| x.0).map_or(0.0, |i| r[i].1)
    }

    /// Only entries above `kappa`.
    pub fn thresholded(&self, kappa: f64) -> PowerTable {
        PowerTable {
            nodes: self.nodes.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| r.iter().copied().filter(|x| x.1 > kappa).collect())
                .collect(),
        }
    }

    /// `max_{q in sources} I(q' | q)` for every node `q'`.
    pub fn best_from(&self, sources: &[usize]) -> Vec<f64> {
        let mut best = vec![0.0; self.nodes.len()];
        for &s in sources {
            for &(t, p) in &self.rows[s] {
                if p > best[t] {
                    best[t] = p;
                }
            }
        }
        best
    }

    pub fn num_entries(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }
}

/// Sum of best-source powers over targets whose best power exceeds `kappa`.
pub fn overall_power(table: &PowerTable, sources: &[usize], kappa: f64) -> f64 {
    table.best_from(sources).into_iter().filter(|&p| p > kappa).sum()
}

/// Everything needed to fill power-table rows.
pub struct InferContext<'a> {
    pub ds: &'a Dataset,
    pub jm: &'a JointModel,
    pub features: &'a DerivedFeatures,
    pub graph: &'a AlignmentGraph,
    pub diffs: &'a EdgeDiffs,
    pub config: InferConfig,
    /// Graph nodes of entity pairs labeled as matches; relation pairs infer
    /// only through edges leaving these.
    pub known_matches: Vec<usize>,
}

impl InferContext<'_> {
    fn relation_index(&self, allowed: Option<&[bool]>) -> HashMap<(usize, usize), Vec<(usize, f64)>> {
        let mut idx: HashMap<(usize, usize), HashMap<usize, f64>> = HashMap::new();
        let known: HashSet<usize> = self.known_matches.iter().copied().collect();
        let mut ks: Vec<usize> = known.into_iter().collect();
        ks.sort_unstable();
        for q in ks {
            if self.graph.node(q).kind != ElementKind::Entity {
                continue;
            }
            for ei in self.graph.out_range(q) {
                let e = self.graph.edges()[ei];
                if allowed.is_some_and(|a| !a[ei]) || !self.diffs.is_usable(ei) {
                    continue;
                }
                if let RelPair::Rel(r, r2) = e.rel {
                    let p = 1.0 / (1.0 + self.diffs.radius(ei));
                    let slot = idx
                        .entry((base_relation(r), base_relation(r2)))
                        .or_default()
                        .entry(e.dst)
                        .or_insert(0.0);
                    if p > *slot {
                        *slot = p;
                    }
                }
            }
        }
        idx.into_iter()
            .map(|(k, v)| {
                let mut v: Vec<(usize, f64)> = v.into_iter().collect();
                v.sort_unstable_by_key(|x| x.0);
                (k, v)
            })
            .collect()
    }

    fn entity_row(&self, src: usize, allowed: Option<&[bool]>) -> Vec<(usize, f64)> {
        let search = PathSearch::new(self.graph, self.diffs, &self.config);
        let mut row: HashMap<usize, f64> = search.from_source(src, allowed).into_iter().collect();
        let p = self.graph.node(src);
        for ei in self.graph.out_range(src) {
            if allowed.is_some_and(|a| !a[ei]) {
                continue;
            }
            let e = self.graph.edges()[ei];
            let (target, power) = match e.rel {
                RelPair::Type => {
                    let c = self.graph.node(e.dst);
                    let g = pair_to_class_gradient(self.jm, self.features, self.ds, (p.left, p.right), (c.left, c.right));
                    (Some(e.dst), squash(g))
                }
                RelPair::Rel(r, r2) => {
                    let x = self.graph.node(e.dst);
                    let target = e.rel.pool_pair().and_then(|rp| self.graph.node_id(&rp));
                    let power = match target {
                        Some(_) => squash(pair_to_relation_gradient(
                            self.jm,
                            self.features,
                            self.ds,
                            (p.left, p.right),
                            (r, r2),
                            (x.left, x.right),
                        )),
                        None => 0.0,
                    };
                    (target, power)
                }
                RelPair::TypeInv => (None, 0.0),
            };
            if let Some(t) = target {
                if power > 0.0 {
                    let slot = row.entry(t).or_insert(0.0);
                    if power > *slot {
                        *slot = power;
                    }
                }
            }
        }
        row.into_iter().collect()
    }

    /// One-hop power of every graph edge: the path power for relation
    /// edges, the squashed class gradient for type edges, 0 otherwise.
    pub fn edge_powers(&self, exec: Exec) -> Vec<f64> {
        exec.map_range(self.graph.num_edges(), |ei| {
            let e = self.graph.edges()[ei];
            match e.rel {
                RelPair::Rel(..) => self.diffs.edge_power(ei),
                RelPair::Type => {
                    let (p, c) = (self.graph.node(e.src), self.graph.node(e.dst));
                    squash(pair_to_class_gradient(self.jm, self.features, self.ds, (p.left, p.right), (c.left, c.right)))
                }
                RelPair::TypeInv => 0.0,
            }
        })
    }

    /// Rows for `sources` (graph node ids); other rows stay empty. `allowed`
    /// masks graph edges by index.
    pub fn power_table(&self, sources: &[usize], allowed: Option<&[bool]>, exec: Exec) -> PowerTable {
        let rel_idx = self.relation_index(allowed);
        let computed = exec.map_slice(sources, |&s| {
            let p = self.graph.node(s);
            let mut row: Vec<(usize, f64)> = match p.kind {
                ElementKind::Entity => self.entity_row(s, allowed),
                ElementKind::Relation => rel_idx.get(&(p.left, p.right)).cloned().unwrap_or_default(),
                ElementKind::Class => Vec::new(),
            };
            row.retain(|x| x.0 != s && x.1 > 0.0);
            row.push((s, 1.0));
            row.sort_unstable_by_key(|x| x.0);
            row
        });
        let mut rows = vec![Vec::new(); self.graph.num_nodes()];
        for (&s, r) in sources.iter().zip(computed) {
            rows[s] = r;
        }
        PowerTable::new(self.graph.nodes().to_vec(), rows)
    }
}

/// `source<TAB>target<TAB>power`, one line per table entry.
pub fn write_power_table<W: Write>(table: &PowerTable, ds: &Dataset, mut out: W) -> io::Result<()> {
    for (s, row) in table.rows.iter().enumerate() {
        for &(t, p) in row {
            writeln!(
                out,
                "{}\t{}\t{p}",
                pair_label(ds, &table.nodes[s]),
                pair_label(ds, &table.nodes[t])
            )?;
        }
    }
    out.flush()
}
