use std::collections::HashSet;

use kgalign::align::{fine_tune, greedy_matching, match_probability, merge_soft_pairs, CandidateSets, LabeledSets, SimCache};
use kgalign::config::ExperimentConfig;
use kgalign::kg::{synth_kg_pair, ElementKind, ElementPair, Label, SynthParams};
use kgalign::session::ActiveSession;
use proptest::prelude::*;

fn soft_pairs() -> impl Strategy<Value = Vec<(ElementPair, f64)>> {
    prop::collection::vec((0usize..6, 0usize..6, 0.01f64..1.0), 0..20)
        .prop_map(|v| v.into_iter().map(|(l, r, w)| (ElementPair::entity(l, r), w)).collect())
}

proptest! {
    #[test]
    fn merged_pairs_are_one_to_one(a in soft_pairs(), b in soft_pairs(), seed_l in 0usize..6) {
        let mut labels = LabeledSets::default();
        labels.insert(ElementPair::entity(seed_l, seed_l), Label::Match).unwrap();
        let out = merge_soft_pairs(&a, &b, &labels);
        let mut lefts = HashSet::new();
        let mut rights = HashSet::new();
        for (p, w) in &out {
            prop_assert!(lefts.insert(p.left) && rights.insert(p.right));
            prop_assert!(p.left != seed_l && p.right != seed_l);
            let top = a.iter().chain(&b).filter(|x| x.0 == *p).map(|x| x.1).fold(0.0, f64::max);
            prop_assert_eq!(*w, top);
        }
    }

    #[test]
    fn greedy_matching_keeps_best_above_floor(
        cands in prop::collection::vec((0usize..5, 0usize..5, 0.0f64..1.0), 0..25),
        floor in 0.0f64..0.5,
    ) {
        let out = greedy_matching(cands.clone(), floor, &HashSet::new(), &HashSet::new());
        prop_assert!(out.iter().all(|m| m.2 > floor));
        for w in out.windows(2) {
            prop_assert!(w[0].2 >= w[1].2);
        }
        // every dropped candidate above the floor collides with a kept one
        for c in cands.iter().filter(|c| c.2 > floor) {
            prop_assert!(out.iter().any(|m| m.0 == c.0 || m.1 == c.1));
        }
    }

    #[test]
    fn match_probability_is_the_smaller_softmax(
        sims in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 3),
        z in 0.05f64..1.0,
    ) {
        let sim = |l: usize, r: usize| sims[l][r];
        let pair = ElementPair::entity(1, 2);
        let row: f64 = (0..3).map(|r| (sim(1, r) / z).exp()).sum();
        let col: f64 = (0..3).map(|l| (sim(l, 2) / z).exp()).sum();
        let s = (sim(1, 2) / z).exp();
        let want = (s / row).min(s / col);
        prop_assert!((match_probability(sim, &pair, &[0, 1], &[0, 1, 2], z) - want).abs() < 1e-12);
    }
}

#[test]
fn conflicting_labels_are_refused() {
    let mut l = LabeledSets::default();
    let p = ElementPair::class(0, 1);
    assert_eq!(l.insert(p, Label::NonMatch), Ok(true));
    assert_eq!(l.insert(p, Label::NonMatch), Ok(false));
    assert_eq!(l.insert(p, Label::Match), Err(Label::NonMatch));
    assert_eq!(l.len(), 1);
    assert!(!l.is_match(&p));
}

fn session() -> ActiveSession {
    let p = SynthParams {
        entities: 60,
        ..SynthParams::default()
    };
    let ds = synth_kg_pair(&p, 2).unwrap().0;
    let cfg = ExperimentConfig::from_text("embed.dim_e = 16\nembed.dim_c = 8\nembed.epochs = 10\njoint.epochs = 10\n").unwrap();
    ActiveSession::new(cfg, ds).unwrap()
}

#[test]
fn pool_probabilities_match_the_pairwise_form() {
    let s = session();
    let probs = s.probabilities();
    let cache = SimCache::new(s.model(), s.features());
    let nodes = s.graph().nodes();
    let cands = CandidateSets::from_pool(nodes);
    for (p, &got) in nodes.iter().zip(&probs).step_by(7) {
        let z = s.config().align.temperature(p.kind);
        let want = match_probability(
            |l, r| cache.sim(p.kind, l, r),
            p,
            &cands.of_left[&(p.kind, p.left)],
            &cands.of_right[&(p.kind, p.right)],
            z,
        );
        assert!((got - want).abs() < 1e-9, "{p:?}");
    }
    assert!(nodes.iter().any(|p| p.kind == ElementKind::Relation));
}

#[test]
fn fine_tune_is_deterministic() {
    let s = session();
    let run = || {
        let mut jm = s.model().clone();
        let mut f = s.features().clone();
        let opts = s.config().finetune_options();
        fine_tune(&mut jm, s.dataset(), &mut f, s.labels(), s.graph().nodes(), &[], &opts, true, 9).unwrap();
        serde_json::to_string(&jm).unwrap()
    };
    let first = run();
    assert_eq!(first, run());
    assert_ne!(first, serde_json::to_string(s.model()).unwrap());
}
