//! Knowledge graph data model: interned entities, relations (each with a
//! synthetic inverse), classes, relation triples and type triples.
//!
//! Relation ids come in pairs: base relation `k` has id `2k` and its inverse
//! has id `2k + 1`, so `inverse(r) == r ^ 1`.

mod io;
mod sample;
mod synth;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

pub use io::{load_dataset, load_dataset_with_aliases, write_dataset, LoadError, DEFAULT_TYPE_ALIASES};
pub use sample::{subsample, SampleError};
pub use synth::{link_counts, synth_kg_pair, SynthError, SynthParams, SynthStats};

pub type EntityId = usize;
pub type RelationId = usize;
pub type ClassId = usize;

#[inline]
pub fn inverse(r: RelationId) -> RelationId {
    r ^ 1
}

#[inline]
pub fn is_inverse(r: RelationId) -> bool {
    r & 1 == 1
}

/// Base (non-inverse) relation id of `r`.
#[inline]
pub fn base_relation(r: RelationId) -> RelationId {
    r & !1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub rel: RelationId,
    pub tail: EntityId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Entity,
    Relation,
    Class,
}

impl ElementKind {
    pub const ALL: [ElementKind; 3] = [ElementKind::Entity, ElementKind::Relation, ElementKind::Class];

    pub fn as_str(self) -> &'static str {
        match self {
            ElementKind::Entity => "entity",
            ElementKind::Relation => "relation",
            ElementKind::Class => "class",
        }
    }
}

impl std::str::FromStr for ElementKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "entity" => Ok(ElementKind::Entity),
            "relation" => Ok(ElementKind::Relation),
            "class" => Ok(ElementKind::Class),
            other => Err(format!("unknown element kind `{other}`")),
        }
    }
}

/// A candidate correspondence between an element of the first graph and an
/// element of the same kind in the second graph. Relation pairs always refer
/// to base relations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ElementPair {
    pub kind: ElementKind,
    pub left: usize,
    pub right: usize,
}

impl ElementPair {
    pub fn entity(left: EntityId, right: EntityId) -> Self {
        ElementPair { kind: ElementKind::Entity, left, right }
    }
    pub fn relation(left: RelationId, right: RelationId) -> Self {
        ElementPair { kind: ElementKind::Relation, left, right }
    }
    pub fn class(left: ClassId, right: ClassId) -> Self {
        ElementPair { kind: ElementKind::Class, left, right }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    Match,
    NonMatch,
}

impl Label {
    pub fn is_match(self) -> bool {
        self == Label::Match
    }
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    entities: Vec<String>,
    base_relations: Vec<String>,
    classes: Vec<String>,
    triples: Vec<Triple>,
    types: Vec<(EntityId, ClassId)>,
    entity_index: HashMap<String, EntityId>,
    relation_index: HashMap<String, RelationId>,
    class_index: HashMap<String, ClassId>,
    out_offsets: Vec<usize>,
    out_edges: Vec<(RelationId, EntityId)>,
    rel_triples: Vec<Vec<usize>>,
    entity_classes: Vec<Vec<ClassId>>,
    class_members: Vec<Vec<EntityId>>,
}

impl KnowledgeGraph {
    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    /// Number of relation ids, inverses included.
    pub fn num_relations(&self) -> usize {
        self.base_relations.len() * 2
    }

    pub fn num_base_relations(&self) -> usize {
        self.base_relations.len()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn entity_name(&self, e: EntityId) -> &str {
        &self.entities[e]
    }

    pub fn relation_name(&self, r: RelationId) -> String {
        let base = &self.base_relations[r / 2];
        if is_inverse(r) {
            format!("{base}^-1")
        } else {
            base.clone()
        }
    }

    pub fn base_relation_name(&self, r: RelationId) -> &str {
        &self.base_relations[r / 2]
    }

    pub fn class_name(&self, c: ClassId) -> &str {
        &self.classes[c]
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entity_index.get(name).copied()
    }

    /// Id of the base relation named `name`.
    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relation_index.get(name).copied()
    }

    pub fn class_id(&self, name: &str) -> Option<ClassId> {
        self.class_index.get(name).copied()
    }

    pub fn element_name(&self, kind: ElementKind, id: usize) -> String {
        match kind {
            ElementKind::Entity => self.entities[id].clone(),
            ElementKind::Relation => self.relation_name(id),
            ElementKind::Class => self.classes[id].clone(),
        }
    }

    pub fn num_elements(&self, kind: ElementKind) -> usize {
        match kind {
            ElementKind::Entity => self.num_entities(),
            ElementKind::Relation => self.num_base_relations(),
            ElementKind::Class => self.num_classes(),
        }
    }

    /// Element ids of `kind` that are alignment candidates (base relations only).
    pub fn candidates(&self, kind: ElementKind) -> Vec<usize> {
        match kind {
            ElementKind::Relation => (0..self.num_base_relations()).map(|k| 2 * k).collect(),
            _ => (0..self.num_elements(kind)).collect(),
        }
    }

    /// All relation triples, inverses included, sorted.
    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn type_triples(&self) -> &[(EntityId, ClassId)] {
        &self.types
    }

    /// Outgoing `(relation, tail)` edges of `e`, inverses included.
    pub fn out_edges(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        &self.out_edges[self.out_offsets[e]..self.out_offsets[e + 1]]
    }

    /// Indices into [`Self::triples`] of the triples labeled `r`.
    pub fn triples_of(&self, r: RelationId) -> &[usize] {
        &self.rel_triples[r]
    }

    pub fn classes_of(&self, e: EntityId) -> &[ClassId] {
        &self.entity_classes[e]
    }

    pub fn members_of(&self, c: ClassId) -> &[EntityId] {
        &self.class_members[c]
    }

    /// Classes without instances are kept but reported here.
    pub fn is_empty_class(&self, c: ClassId) -> bool {
        self.class_members[c].is_empty()
    }

    pub fn has_triple(&self, t: &Triple) -> bool {
        self.triples.binary_search(t).is_ok()
    }

    pub fn is_member(&self, e: EntityId, c: ClassId) -> bool {
        self.entity_classes[e].binary_search(&c).is_ok()
    }

    /// Entity degree counting inverse edges, i.e. the number of incident triples.
    pub fn degree(&self, e: EntityId) -> usize {
        self.out_edges(e).len()
    }

    /// Base triples as names, the canonical content of the graph.
    pub fn named_triples(&self) -> BTreeSet<(&str, &str, &str)> {
        self.triples
            .iter()
            .filter(|t| !is_inverse(t.rel))
            .map(|t| {
                (
                    self.entities[t.head].as_str(),
                    self.base_relations[t.rel / 2].as_str(),
                    self.entities[t.tail].as_str(),
                )
            })
            .collect()
    }

    pub fn named_types(&self) -> BTreeSet<(&str, &str)> {
        self.types
            .iter()
            .map(|&(e, c)| (self.entities[e].as_str(), self.classes[c].as_str()))
            .collect()
    }

    fn name_sets(&self) -> (BTreeSet<&str>, BTreeSet<&str>, BTreeSet<&str>) {
        (
            self.entities.iter().map(String::as_str).collect(),
            self.base_relations.iter().map(String::as_str).collect(),
            self.classes.iter().map(String::as_str).collect(),
        )
    }

    /// Set equality on every component, independent of id assignment.
    pub fn same_content(&self, other: &KnowledgeGraph) -> bool {
        self.name_sets() == other.name_sets()
            && self.named_triples() == other.named_triples()
            && self.named_types() == other.named_types()
    }
}

/// Incremental constructor that interns names in first-seen order.
#[derive(Debug, Default)]
pub struct KgBuilder {
    kg: KnowledgeGraph,
    triple_set: BTreeSet<Triple>,
    type_set: BTreeSet<(EntityId, ClassId)>,
}

impl KgBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entity(&mut self, name: &str) -> EntityId {
        intern(&mut self.kg.entities, &mut self.kg.entity_index, name, 1)
    }

    pub fn relation(&mut self, name: &str) -> RelationId {
        intern(&mut self.kg.base_relations, &mut self.kg.relation_index, name, 2)
    }

    pub fn class(&mut self, name: &str) -> ClassId {
        intern(&mut self.kg.classes, &mut self.kg.class_index, name, 1)
    }

    /// Adds the triple and its synthetic inverse.
    pub fn triple(&mut self, head: &str, rel: &str, tail: &str) {
        let h = self.entity(head);
        let r = self.relation(rel);
        let t = self.entity(tail);
        self.triple_set.insert(Triple { head: h, rel: r, tail: t });
        self.triple_set.insert(Triple { head: t, rel: inverse(r), tail: h });
    }

    pub fn type_of(&mut self, entity: &str, class: &str) {
        let e = self.entity(entity);
        let c = self.class(class);
        self.type_set.insert((e, c));
    }

    pub fn build(self) -> KnowledgeGraph {
        let KgBuilder { mut kg, triple_set, type_set } = self;
        kg.triples = triple_set.into_iter().collect();
        kg.types = type_set.into_iter().collect();
        let n = kg.entities.len();

        kg.out_offsets = vec![0; n + 1];
        for t in &kg.triples {
            kg.out_offsets[t.head + 1] += 1;
        }
        for i in 0..n {
            kg.out_offsets[i + 1] += kg.out_offsets[i];
        }
        // triples are sorted by head first, so edges land in order
        kg.out_edges = kg.triples.iter().map(|t| (t.rel, t.tail)).collect();

        kg.rel_triples = vec![Vec::new(); kg.base_relations.len() * 2];
        for (i, t) in kg.triples.iter().enumerate() {
            kg.rel_triples[t.rel].push(i);
        }
        kg.entity_classes = vec![Vec::new(); n];
        kg.class_members = vec![Vec::new(); kg.classes.len()];
        for &(e, c) in &kg.types {
            kg.entity_classes[e].push(c);
            kg.class_members[c].push(e);
        }
        kg
    }
}

fn intern(names: &mut Vec<String>, index: &mut HashMap<String, usize>, name: &str, stride: usize) -> usize {
    if let Some(&id) = index.get(name) {
        return id;
    }
    let id = names.len() * stride;
    names.push(name.to_string());
    index.insert(name.to_string(), id);
    id
}

/// Gold correspondences between two graphs. Relation links use base ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GoldLinks {
    pub entities: Vec<(EntityId, EntityId)>,
    pub relations: Vec<(RelationId, RelationId)>,
    pub classes: Vec<(ClassId, ClassId)>,
}

impl GoldLinks {
    pub fn of_kind(&self, kind: ElementKind) -> &[(usize, usize)] {
        match kind {
            ElementKind::Entity => &self.entities,
            ElementKind::Relation => &self.relations,
            ElementKind::Class => &self.classes,
        }
    }

    pub fn len(&self) -> usize {
        self.entities.len() + self.relations.len() + self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, pair: &ElementPair) -> bool {
        self.of_kind(pair.kind).contains(&(pair.left, pair.right))
    }

    /// Sorted copy; linking order carries no meaning.
    pub fn normalized(&self) -> GoldLinks {
        let mut g = self.clone();
        g.entities.sort_unstable();
        g.relations.sort_unstable();
        g.classes.sort_unstable();
        g
    }
}

/// Lookup structure for "is this pair a gold match".
#[derive(Debug, Clone, Default)]
pub struct GoldIndex {
    set: std::collections::HashSet<ElementPair>,
}

impl GoldIndex {
    pub fn new(links: &GoldLinks) -> Self {
        let mut set = std::collections::HashSet::new();
        for kind in ElementKind::ALL {
            for &(l, r) in links.of_kind(kind) {
                set.insert(ElementPair { kind, left: l, right: r });
            }
        }
        GoldIndex { set }
    }

    pub fn is_match(&self, pair: &ElementPair) -> bool {
        self.set.contains(pair)
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub kg1: KnowledgeGraph,
    pub kg2: KnowledgeGraph,
    pub links: GoldLinks,
}

impl Dataset {
    pub fn kg(&self, side: Side) -> &KnowledgeGraph {
        match side {
            Side::Left => &self.kg1,
            Side::Right => &self.kg2,
        }
    }

    /// Links as name pairs, for comparisons across id assignments.
    pub fn named_links(&self) -> BTreeSet<(ElementKind, String, String)> {
        let mut out = BTreeSet::new();
        for kind in ElementKind::ALL {
            for &(l, r) in self.links.of_kind(kind) {
                out.insert((kind, self.kg1.element_name(kind, l), self.kg2.element_name(kind, r)));
            }
        }
        out
    }

    pub fn same_content(&self, other: &Dataset) -> bool {
        self.kg1.same_content(&other.kg1)
            && self.kg2.same_content(&other.kg2)
            && self.named_links() == other.named_links()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}
