use kgalign::embed::{self, EmbedConfig, EmbeddingSpace, Grads, ModelKind, ParamRef, TrainOptions};
use kgalign::kg::{synth_kg_pair, KnowledgeGraph, SynthParams};
use kgalign::linalg;
use kgalign::par::Exec;
use kgalign::rng;
use rand::seq::SliceRandom;

fn clone_kg(entities: usize, seed: u64) -> KnowledgeGraph {
    let p = SynthParams {
        entities,
        relations: 6,
        classes: 4,
        ..SynthParams::default()
    };
    synth_kg_pair(&p, seed).unwrap().0.kg1
}

fn space(kg: &KnowledgeGraph, kind: ModelKind) -> EmbeddingSpace {
    let cfg = EmbedConfig {
        kind,
        dim_e: 8,
        dim_c: 4,
        ..EmbedConfig::default()
    };
    EmbeddingSpace::new(cfg, kg, 11)
}

/// Central differences on up to `n` touched coordinates; returns the worst
/// relative error.
fn fd_check(s: &EmbeddingSpace, g: &Grads, n: usize, f: impl Fn(&EmbeddingSpace) -> f64) -> (f64, usize) {
    let mut coords: Vec<ParamRef> = g.coordinates().into_iter().filter(|&p| g.get(p) != 0.0).collect();
    coords.shuffle(&mut rng::stream(1, "fd", 0));
    coords.truncate(n);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut probe = s.clone();
    for &p in &coords {
        let x = s.get(p);
        probe.set(p, x + h);
        let up = f(&probe);
        probe.set(p, x - h);
        let down = f(&probe);
        probe.set(p, x);
        let num = (up - down) / (2.0 * h);
        let ana = g.get(p);
        worst = worst.max((ana - num).abs() / ana.abs().max(num.abs()).max(1e-6));
    }
    (worst, coords.len())
}

#[test]
fn er_gradients_match_finite_differences() {
    let kg = clone_kg(40, 3);
    for kind in [ModelKind::TransE, ModelKind::RotatE] {
        let s = space(&kg, kind);
        let mut rng = rng::stream(2, "neg", 0);
        let pairs = embed::sample_er_negatives(&kg, &kg.triples()[..30], 3, &mut rng);
        let (_, g) = embed::er_pair_loss(&s, &pairs);
        let (err, n) = fd_check(&s, &g, 150, |sp| embed::er_pair_loss(sp, &pairs).0);
        assert!(n >= 100, "{kind:?}: only {n} coordinates");
        assert!(err < 1e-4, "{kind:?}: {err}");
    }
}

#[test]
fn ec_gradients_match_finite_differences() {
    let kg = clone_kg(40, 3);
    let s = space(&kg, ModelKind::TransE);
    let mut rng = rng::stream(2, "neg", 0);
    let negs = embed::sample_ec_negatives(&kg, kg.type_triples(), 2, &mut rng);
    let (_, g) = embed::ec_pair_loss(&s, &negs.pairs);
    let (err, n) = fd_check(&s, &g, 150, |sp| embed::ec_pair_loss(sp, &negs.pairs).0);
    assert!(n >= 100);
    assert!(err < 1e-4, "{err}");
}

#[test]
fn zero_epochs_leave_space_unchanged() {
    let kg = clone_kg(30, 1);
    let mut s = space(&kg, ModelKind::TransE);
    let before = s.clone();
    let opts = TrainOptions {
        epochs: 0,
        ..TrainOptions::default()
    };
    embed::train(&mut s, &kg, &opts, 9).unwrap();
    assert_eq!(s, before);
}

#[test]
fn training_separates_positives_and_is_deterministic() {
    let kg = clone_kg(150, 4);
    let opts = TrainOptions {
        epochs: 200,
        batch_size: 64,
        ..TrainOptions::default()
    };
    let mut a = space(&kg, ModelKind::TransE);
    let rep = embed::train(&mut a, &kg, &opts, 5).unwrap();
    assert!(rep.mean_pos_score_after < rep.mean_pos_score_before);

    let mut rng = rng::stream(77, "held-out", 0);
    let pairs = embed::sample_er_negatives(&kg, kg.triples(), 1, &mut rng);
    let pos: f64 = pairs.iter().map(|(p, _)| a.score_er(p.head, p.rel, p.tail)).sum::<f64>();
    let neg: f64 = pairs.iter().map(|(_, n)| a.score_er(n.head, n.rel, n.tail)).sum::<f64>();
    assert!(pos < neg, "pos {pos} neg {neg}");

    // negatives corrupt the entity within a class, so separation is per class
    for c in 0..kg.num_classes() {
        let (mem, non): (Vec<usize>, Vec<usize>) = (0..kg.num_entities()).partition(|&e| kg.is_member(e, c));
        let below = mem
            .iter()
            .flat_map(|&m| non.iter().map(move |&x| (m, x)))
            .filter(|&(m, x)| a.score_ec(m, c) < a.score_ec(x, c))
            .count();
        let auc = below as f64 / (mem.len() * non.len()) as f64;
        assert!(auc > 0.9, "class {c} auc {auc}");
    }

    let mut b = space(&kg, ModelKind::TransE);
    let seq = TrainOptions {
        exec: Exec::Sequential,
        ..opts
    };
    embed::train(&mut b, &kg, &seq, 5).unwrap();
    assert_eq!(a, b, "parallel and sequential runs must agree bit for bit");
}

#[test]
fn rotate_training_lowers_positive_scores() {
    let kg = clone_kg(80, 6);
    let mut s = space(&kg, ModelKind::RotatE);
    let opts = TrainOptions {
        epochs: 60,
        batch_size: 64,
        lr: 0.1,
        ..TrainOptions::default()
    };
    let rep = embed::train(&mut s, &kg, &opts, 1).unwrap();
    assert!(rep.mean_pos_score_after < rep.mean_pos_score_before);
    assert!(s.is_finite());
}

#[test]
fn rotation_preserves_norm() {
    let kg = clone_kg(20, 2);
    let s = space(&kg, ModelKind::RotatE);
    for t in kg.triples() {
        let p = s.project(t.head, t.rel);
        assert!((linalg::norm(&p) - linalg::norm(s.entity(t.head))).abs() < 1e-9);
    }
}
