use kgalign::graph::AlignmentGraph;
use kgalign::infer::PowerTable;
use kgalign::kg::{Dataset, ElementPair, KgBuilder};
use kgalign::par::Exec;
use kgalign::select::{batch_probability, cross_partition_mask, greedy_select, partition_pool, GainState, GreedyMode};
use proptest::prelude::*;

/// Dense power matrix with unit diagonal, probabilities and floors.
fn instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
    (2usize..12).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::collection::vec(prop_oneof![Just(0.0), 0.01f64..1.0], n), n),
            prop::collection::vec(0.0f64..=1.0, n),
            prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..1.0], n),
        )
            .prop_map(|(mut m, p, f)| {
                for (i, row) in m.iter_mut().enumerate() {
                    row[i] = 1.0;
                }
                (m, p, f)
            })
    })
}

fn table(m: &[Vec<f64>]) -> PowerTable {
    let rows = m
        .iter()
        .map(|r| r.iter().enumerate().filter(|x| *x.1 > 0.0).map(|(t, &p)| (t, p)).collect())
        .collect();
    PowerTable::new((0..m.len()).map(|i| ElementPair::entity(i, i)).collect(), rows)
}

fn expected(m: &[Vec<f64>], probs: &[f64], floor: &[f64], batch: &[usize]) -> f64 {
    let mut total = 0.0;
    for mask in 0u32..(1 << batch.len()) {
        let mut pr = 1.0;
        let mut best = floor.to_vec();
        for (i, &q) in batch.iter().enumerate() {
            if mask >> i & 1 == 1 {
                pr *= probs[q];
                for (b, &x) in best.iter_mut().zip(&m[q]) {
                    *b = b.max(x);
                }
            } else {
                pr *= 1.0 - probs[q];
            }
        }
        total += pr * best.iter().sum::<f64>();
    }
    total
}

proptest! {
    #[test]
    fn objective_matches_enumeration((m, probs, floor) in instance(), k in 0usize..6) {
        let t = table(&m);
        let batch: Vec<usize> = (0..k.min(m.len())).collect();
        let mut s = GainState::new(&t, probs.clone(), floor.clone());
        for &q in &batch {
            s.push(q);
        }
        prop_assert!((s.objective() - expected(&m, &probs, &floor, &batch)).abs() < 1e-9);
    }

    #[test]
    fn gains_are_nonnegative_and_diminishing((m, probs, floor) in instance(), split in 0usize..12) {
        let t = table(&m);
        let n = m.len();
        let small = split.min(n - 1);
        let mut a = GainState::new(&t, probs.clone(), floor.clone());
        let mut b = GainState::new(&t, probs.clone(), floor.clone());
        for q in 0..small {
            a.push(q);
            b.push(q);
        }
        for q in small..n - 1 {
            b.push(q);
        }
        let q = n - 1;
        prop_assert!(b.gain(q) >= -1e-12);
        prop_assert!(b.gain(q) <= a.gain(q) + 1e-12);
    }

    #[test]
    fn lazy_and_plain_greedy_agree((m, probs, floor) in instance(), budget in 1usize..5) {
        let t = table(&m);
        let cands: Vec<usize> = (0..m.len()).collect();
        let mut a = GainState::new(&t, probs.clone(), floor.clone());
        let mut b = GainState::new(&t, probs, floor);
        let la = greedy_select(&mut a, &cands, budget, GreedyMode::Lazy, Exec::Sequential);
        let pb = greedy_select(&mut b, &cands, budget, GreedyMode::Plain, Exec::Sequential);
        prop_assert!((a.objective() - b.objective()).abs() < 1e-9);
        prop_assert_eq!(la.len(), pb.len());
    }

    #[test]
    fn batch_probabilities_form_a_distribution(probs in prop::collection::vec(0.0f64..=1.0, 1..10)) {
        let k = probs.len();
        let total: f64 = (0u32..(1 << k))
            .map(|mask| {
                let plus: Vec<bool> = (0..k).map(|i| mask >> i & 1 == 1).collect();
                batch_probability(&probs, &plus)
            })
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }
}

#[test]
fn greedy_never_exceeds_candidates_or_repeats() {
    let m = vec![vec![1.0, 0.5, 0.0], vec![0.0, 1.0, 0.9], vec![0.3, 0.0, 1.0]];
    let t = table(&m);
    let mut s = GainState::new(&t, vec![0.5; 3], vec![0.0; 3]);
    let sel = greedy_select(&mut s, &[2, 0, 2], 5, GreedyMode::Lazy, Exec::Sequential);
    let mut nodes: Vec<usize> = sel.iter().map(|x| x.node).collect();
    nodes.sort_unstable();
    assert_eq!(nodes, vec![0, 2]);
}

#[test]
fn certain_floor_leaves_no_gain() {
    let m = vec![vec![1.0, 0.7], vec![0.0, 1.0]];
    let t = table(&m);
    let s = GainState::new(&t, vec![0.9, 0.9], vec![1.0, 1.0]);
    assert_eq!(s.gain(0), 0.0);
}

fn chain() -> (Dataset, AlignmentGraph) {
    let mut a = KgBuilder::new();
    let mut b = KgBuilder::new();
    for (h, t) in [("x0", "x1"), ("x1", "x2"), ("x2", "x3")] {
        a.triple(h, "r", t);
        b.triple(&h.replace('x', "y"), "s", &t.replace('x', "y"));
    }
    let ds = Dataset {
        kg1: a.build(),
        kg2: b.build(),
        links: Default::default(),
    };
    let mut pool: Vec<ElementPair> = (0..4).map(|i| ElementPair::entity(i, i)).collect();
    pool.push(ElementPair::relation(0, 0));
    let g = AlignmentGraph::build(&ds, &pool);
    (ds, g)
}

#[test]
fn partition_meets_threshold_unless_capped() {
    let (_, g) = chain();
    let power = vec![0.9; g.num_edges()];
    for rho in [0.3, 0.6, 1.0] {
        let p = partition_pool(&g, &power, rho, g.num_nodes());
        assert!(!p.capped);
        assert_eq!(p.assign.len(), g.num_nodes());
        for q in 0..g.num_nodes() {
            let (mut inner, mut outer) = (0.0, 0.0);
            for e in g.out(q).iter().filter(|e| e.dst != q) {
                if p.assign[e.dst] == p.assign[q] {
                    inner += 0.9;
                } else {
                    outer += 0.9;
                }
            }
            if inner + outer > 0.0 {
                assert!(outer / (inner + outer) >= rho, "rho {rho} node {q}");
            }
        }
    }
}

#[test]
fn split_cap_is_reported() {
    let (_, g) = chain();
    let p = partition_pool(&g, &vec![0.9; g.num_edges()], 1.0, 0);
    assert!(p.capped);
    assert_eq!(p.count, 1);
    assert!(cross_partition_mask(&g, &p).iter().all(|&k| !k));
}
