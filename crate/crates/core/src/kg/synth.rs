//! Ground-truth generator: a random typed graph, a renamed copy with some
//! entities removed and some edges dropped, and the exact gold links between
//! them.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Dataset, ElementKind, GoldLinks, KgBuilder};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub entities: usize,
    pub relations: usize,
    pub classes: usize,
    /// Base relation triples per entity.
    pub density: f64,
    /// Fraction of the copy's surviving edges that are dropped.
    pub noise: f64,
    /// Fraction of entities removed from the copy.
    pub dangling: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            entities: 200,
            relations: 12,
            classes: 6,
            density: 2.0,
            noise: 0.0,
            dangling: 0.0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("{0} must lie in [0, 1], got {1}")]
    Fraction(&'static str, f64),
    #[error("density must be finite and non-negative, got {0}")]
    Density(f64),
    #[error("at least one class is needed to type {0} entities")]
    NoClasses(usize),
    #[error("at least one relation is needed for density {0}")]
    NoRelations(f64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthStats {
    /// Base triples in the first graph.
    pub triples_generated: usize,
    pub entities_removed: usize,
    pub edges_dropped: usize,
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        for (name, v) in [("noise", self.noise), ("dangling", self.dangling)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SynthError::Fraction(name, v));
            }
        }
        if !self.density.is_finite() || self.density < 0.0 {
            return Err(SynthError::Density(self.density));
        }
        if self.entities > 0 && self.classes == 0 {
            return Err(SynthError::NoClasses(self.entities));
        }
        if self.density > 0.0 && self.relations == 0 {
            return Err(SynthError::NoRelations(self.density));
        }
        Ok(())
    }
}

/// Generates a graph pair with exact gold links.
///
/// Every entity carries at least one class, so no entity is ever isolated
/// and the pair survives a write/load round trip unchanged. Relations are
/// partial one-to-one maps whose heads and tails prefer a per-relation domain
/// and range class.
pub fn synth_kg_pair(params: &SynthParams, seed: u64) -> Result<(Dataset, SynthStats), SynthError> {
    params.validate()?;
    let mut rng = rng::stream(seed, "synth", 0);
    let n = params.entities;

    // class assignment: first `classes` entities cover every class
    let mut classes_of: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            if i < params.classes {
                vec![i]
            } else {
                vec![rng.gen_range(0..params.classes)]
            }
        })
        .collect();
    if params.classes > 1 {
        for cs in classes_of.iter_mut() {
            if rng.gen_bool(0.15) {
                let extra = rng.gen_range(0..params.classes);
                if !cs.contains(&extra) {
                    cs.push(extra);
                    cs.sort_unstable();
                }
            }
        }
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); params.classes];
    for (e, cs) in classes_of.iter().enumerate() {
        members[cs[0]].push(e);
    }
    let domain: Vec<usize> = (0..params.relations).map(|_| rng.gen_range(0..params.classes.max(1))).collect();
    let range: Vec<usize> = (0..params.relations).map(|_| rng.gen_range(0..params.classes.max(1))).collect();

    let target = (params.density * n as f64).round() as usize;
    let mut triples: Vec<(usize, usize, usize)> = Vec::new();
    let mut seen: HashSet<(usize, usize, usize)> = HashSet::new();
    let mut used_head: Vec<HashSet<usize>> = vec![HashSet::new(); params.relations];
    let mut used_tail: Vec<HashSet<usize>> = vec![HashSet::new(); params.relations];

    let mut try_add = |h: usize, r: usize, t: usize, triples: &mut Vec<(usize, usize, usize)>| -> bool {
        if h == t || used_head[r].contains(&h) || used_tail[r].contains(&t) || seen.contains(&(h, r, t)) {
            return false;
        }
        used_head[r].insert(h);
        used_tail[r].insert(t);
        seen.insert((h, r, t));
        triples.push((h, r, t));
        true
    };

    // spanning edges keep the graph connected
    if params.relations > 0 {
        let mut order: Vec<usize> = (0..params.relations).collect();
        for i in 1..n {
            if triples.len() >= target {
                break;
            }
            let j = rng.gen_range(0..i);
            order.shuffle(&mut rng);
            let typed = order
                .iter()
                .copied()
                .filter(|&r| domain[r] == classes_of[i][0] && range[r] == classes_of[j][0]);
            let candidates: Vec<usize> = typed.chain(order.iter().copied()).collect();
            for r in candidates {
                if try_add(i, r, j, &mut triples) {
                    break;
                }
            }
        }
    }
    let mut attempts = 0usize;
    while triples.len() < target && attempts < 50 * target.max(1) {
        attempts += 1;
        let r = rng.gen_range(0..params.relations);
        let pick = |pool: &Vec<usize>, rng: &mut rng::Rng| {
            if !pool.is_empty() && rng.gen_bool(0.8) {
                pool[rng.gen_range(0..pool.len())]
            } else {
                rng.gen_range(0..n)
            }
        };
        let h = pick(&members[domain[r]], &mut rng);
        let t = pick(&members[range[r]], &mut rng);
        try_add(h, r, t, &mut triples);
    }
    let triples_generated = triples.len();

    // the copy: renamed through random permutations
    let mut ent_perm: Vec<usize> = (0..n).collect();
    ent_perm.shuffle(&mut rng);
    let mut rel_perm: Vec<usize> = (0..params.relations).collect();
    rel_perm.shuffle(&mut rng);
    let mut cls_perm: Vec<usize> = (0..params.classes).collect();
    cls_perm.shuffle(&mut rng);

    let removed_count = (params.dangling * n as f64).round() as usize;
    let mut shuffled: Vec<usize> = (0..n).collect();
    shuffled.shuffle(&mut rng);
    let removed: BTreeSet<usize> = shuffled[..removed_count].iter().copied().collect();

    let surviving: Vec<usize> = (0..triples.len())
        .filter(|&i| !removed.contains(&triples[i].0) && !removed.contains(&triples[i].2))
        .collect();
    let drop_count = (params.noise * surviving.len() as f64).round() as usize;
    let mut drop_order = surviving.clone();
    drop_order.shuffle(&mut rng);
    let dropped: BTreeSet<usize> = drop_order[..drop_count].iter().copied().collect();

    let mut b1 = KgBuilder::new();
    let mut b2 = KgBuilder::new();
    let en1 = |e: usize| format!("e{e}");
    let en2 = |e: usize| format!("x{}", ent_perm[e]);
    let rn1 = |r: usize| format!("r{r}");
    let rn2 = |r: usize| format!("p{}", rel_perm[r]);
    let cn1 = |c: usize| format!("c{c}");
    let cn2 = |c: usize| format!("k{}", cls_perm[c]);

    for (i, &(h, r, t)) in triples.iter().enumerate() {
        b1.triple(&en1(h), &rn1(r), &en1(t));
        if !removed.contains(&h) && !removed.contains(&t) && !dropped.contains(&i) {
            b2.triple(&en2(h), &rn2(r), &en2(t));
        }
    }
    // copy entities are declared in a shuffled order so ids carry no hint
    let mut copy_order: Vec<usize> = (0..n).filter(|e| !removed.contains(e)).collect();
    copy_order.sort_by_key(|&e| ent_perm[e]);
    for (e, cs) in classes_of.iter().enumerate() {
        for &c in cs {
            b1.type_of(&en1(e), &cn1(c));
        }
    }
    for &e in &copy_order {
        for &c in &classes_of[e] {
            b2.type_of(&en2(e), &cn2(c));
        }
    }
    let kg1 = b1.build();
    let kg2 = b2.build();

    let mut links = GoldLinks::default();
    for e in 0..n {
        if removed.contains(&e) {
            continue;
        }
        if let (Some(l), Some(r)) = (kg1.entity_id(&en1(e)), kg2.entity_id(&en2(e))) {
            links.entities.push((l, r));
        }
    }
    for r in 0..params.relations {
        if let (Some(l), Some(rr)) = (kg1.relation_id(&rn1(r)), kg2.relation_id(&rn2(r))) {
            links.relations.push((l, rr));
        }
    }
    for c in 0..params.classes {
        if let (Some(l), Some(r)) = (kg1.class_id(&cn1(c)), kg2.class_id(&cn2(c))) {
            links.classes.push((l, r));
        }
    }
    let stats = SynthStats {
        triples_generated,
        entities_removed: removed_count,
        edges_dropped: drop_count,
    };
    Ok((Dataset { kg1, kg2, links }, stats))
}

/// Count of gold pairs per kind, handy for reports.
pub fn link_counts(links: &GoldLinks) -> BTreeMap<ElementKind, usize> {
    ElementKind::ALL.iter().map(|&k| (k, links.of_kind(k).len())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{is_inverse, Triple};

    #[test]
    fn clean_clone_is_isomorphic() {
        let p = SynthParams {
            entities: 60,
            ..SynthParams::default()
        };
        let (ds, _) = synth_kg_pair(&p, 3).unwrap();
        assert_eq!(ds.links.entities.len(), 60);
        assert_eq!(ds.kg1.num_base_relations(), ds.kg2.num_base_relations());
        assert_eq!(ds.links.relations.len(), ds.kg1.num_base_relations());
        assert_eq!(ds.links.classes.len(), ds.kg1.num_classes());
        let ent: std::collections::HashMap<_, _> = ds.links.entities.iter().copied().collect();
        let rel: std::collections::HashMap<_, _> = ds.links.relations.iter().copied().collect();
        let mut mapped = 0;
        for t in ds.kg1.triples().iter().filter(|t| !is_inverse(t.rel)) {
            let image = Triple {
                head: ent[&t.head],
                rel: rel[&t.rel],
                tail: ent[&t.tail],
            };
            assert!(ds.kg2.has_triple(&image));
            mapped += 1;
        }
        assert_eq!(mapped * 2, ds.kg2.triples().len());
    }

    #[test]
    fn half_dangling_leaves_half_the_matches() {
        let p = SynthParams {
            entities: 100,
            dangling: 0.5,
            ..SynthParams::default()
        };
        let (ds, stats) = synth_kg_pair(&p, 11).unwrap();
        assert_eq!(ds.links.entities.len(), 50);
        assert_eq!(stats.entities_removed, 50);
        assert_eq!(ds.kg2.num_entities(), 50);
    }

    #[test]
    fn density_controls_triple_count() {
        let p = SynthParams {
            entities: 100,
            density: 2.0,
            ..SynthParams::default()
        };
        let (ds, stats) = synth_kg_pair(&p, 5).unwrap();
        assert_eq!(stats.triples_generated, 200);
        assert_eq!(ds.kg1.triples().len(), 2 * stats.triples_generated);
    }

    #[test]
    fn noise_drops_edges_from_the_copy_only() {
        let p = SynthParams {
            entities: 100,
            noise: 0.2,
            ..SynthParams::default()
        };
        let (ds, stats) = synth_kg_pair(&p, 9).unwrap();
        assert_eq!(stats.edges_dropped, 40);
        assert_eq!(ds.kg2.triples().len(), ds.kg1.triples().len() - 80);
    }

    #[test]
    fn parameter_validation() {
        let bad = SynthParams {
            noise: 1.5,
            ..SynthParams::default()
        };
        assert_eq!(bad.validate(), Err(SynthError::Fraction("noise", 1.5)));
        let bad = SynthParams {
            classes: 0,
            ..SynthParams::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn relations_are_one_to_one() {
        let (ds, _) = synth_kg_pair(&SynthParams::default(), 1).unwrap();
        let mut heads = HashSet::new();
        let mut tails = HashSet::new();
        for t in ds.kg1.triples() {
            assert!(heads.insert((t.rel, t.head)));
            assert!(tails.insert((t.rel, t.tail)));
        }
    }
}
