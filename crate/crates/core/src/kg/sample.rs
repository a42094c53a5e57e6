use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::Rng as _;
use thiserror::Error;

use super::{is_inverse, Dataset, GoldLinks, KgBuilder, KnowledgeGraph};
use crate::rng;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SampleError {
    #[error("requested {requested} entities but the first graph has {available}")]
    TooLarge { requested: usize, available: usize },
    #[error("dangling fraction must lie in [0, 1]")]
    Dangling,
}

const RESTART_PROB: f64 = 0.15;

/// Down-samples a dataset to `n_entities` entities of the first graph.
///
/// Entities are collected by a seeded random walk (with restarts) started
/// from matched entities; the second graph keeps the counterparts of the
/// matched ones, minus a `dangling` share removed at random. Both graphs are
/// the induced subgraphs; links are restricted to what survives.
pub fn subsample(ds: &Dataset, n_entities: usize, dangling: f64, seed: u64) -> Result<Dataset, SampleError> {
    let available = ds.kg1.num_entities();
    if n_entities > available {
        return Err(SampleError::TooLarge {
            requested: n_entities,
            available,
        });
    }
    if !(0.0..=1.0).contains(&dangling) {
        return Err(SampleError::Dangling);
    }
    if n_entities == 0 {
        return Ok(Dataset::default());
    }
    let mut rng = rng::stream(seed, "subsample", 0);
    let counterpart: HashMap<usize, usize> = ds.links.entities.iter().copied().collect();
    let mut seeds: Vec<usize> = counterpart.keys().copied().collect();
    seeds.sort_unstable();
    let kg = &ds.kg1;

    let mut chosen: Vec<usize> = Vec::with_capacity(n_entities);
    let mut visited = vec![false; available];
    let restart = |rng: &mut rng::Rng, visited: &[bool]| -> usize {
        let fresh: Vec<usize> = seeds.iter().copied().filter(|&e| !visited[e]).collect();
        if fresh.is_empty() {
            let any: Vec<usize> = (0..available).filter(|&e| !visited[e]).collect();
            any[rng.gen_range(0..any.len())]
        } else {
            fresh[rng.gen_range(0..fresh.len())]
        }
    };
    let mut current = restart(&mut rng, &visited);
    let mut stale = 0usize;
    while chosen.len() < n_entities {
        if !visited[current] {
            visited[current] = true;
            chosen.push(current);
            stale = 0;
        } else {
            stale += 1;
        }
        if chosen.len() == n_entities {
            break;
        }
        let edges = kg.out_edges(current);
        if edges.is_empty() || stale > 32 || rng.gen_bool(RESTART_PROB) {
            current = restart(&mut rng, &visited);
        } else {
            current = edges[rng.gen_range(0..edges.len())].1;
        }
    }

    let keep1: BTreeSet<usize> = chosen.iter().copied().collect();
    let mut matched2: Vec<usize> = chosen.iter().filter_map(|e| counterpart.get(e).copied()).collect();
    matched2.sort_unstable();
    matched2.shuffle(&mut rng);
    let remove = (dangling * matched2.len() as f64).round() as usize;
    let keep2: BTreeSet<usize> = matched2[remove..].iter().copied().collect();

    let kg1 = induced(&ds.kg1, &keep1);
    let kg2 = induced(&ds.kg2, &keep2);
    let links = restrict_links(ds, &kg1, &kg2);
    Ok(Dataset { kg1, kg2, links })
}

/// Induced subgraph on `keep`. Entities left without any triple cannot be
/// represented in the file layout and are dropped.
fn induced(kg: &KnowledgeGraph, keep: &BTreeSet<usize>) -> KnowledgeGraph {
    let mut b = KgBuilder::new();
    for t in kg.triples() {
        if !is_inverse(t.rel) && keep.contains(&t.head) && keep.contains(&t.tail) {
            b.triple(kg.entity_name(t.head), kg.base_relation_name(t.rel), kg.entity_name(t.tail));
        }
    }
    for &(e, c) in kg.type_triples() {
        if keep.contains(&e) {
            b.type_of(kg.entity_name(e), kg.class_name(c));
        }
    }
    b.build()
}

fn restrict_links(ds: &Dataset, kg1: &KnowledgeGraph, kg2: &KnowledgeGraph) -> GoldLinks {
    let mut links = GoldLinks::default();
    for &(l, r) in &ds.links.entities {
        if let (Some(a), Some(b)) = (kg1.entity_id(ds.kg1.entity_name(l)), kg2.entity_id(ds.kg2.entity_name(r))) {
            links.entities.push((a, b));
        }
    }
    for &(l, r) in &ds.links.relations {
        if let (Some(a), Some(b)) = (
            kg1.relation_id(ds.kg1.base_relation_name(l)),
            kg2.relation_id(ds.kg2.base_relation_name(r)),
        ) {
            links.relations.push((a, b));
        }
    }
    for &(l, r) in &ds.links.classes {
        if let (Some(a), Some(b)) = (kg1.class_id(ds.kg1.class_name(l)), kg2.class_id(ds.kg2.class_name(r))) {
            links.classes.push((a, b));
        }
    }
    links
}
