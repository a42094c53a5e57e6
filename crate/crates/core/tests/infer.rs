use kgalign::graph::AlignmentGraph;
use kgalign::infer::{overall_power, path_difference, EdgeBound, EdgeDiffs, PathSearch, PowerTable};
use kgalign::kg::{Dataset, ElementPair, KgBuilder};
use kgalign::linalg::Matrix;
use proptest::prelude::*;

/// x0 -> x1 -> x2 -> x3 on both sides, one relation each.
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

/// One-dimensional deltas: `forward(i)` on the edge from node i to i+1,
/// `back` on every reverse edge.
fn diffs(g: &AlignmentGraph, forward: impl Fn(usize) -> f64, back: f64) -> EdgeDiffs {
    EdgeDiffs::from_parts(
        g.edges()
            .iter()
            .map(|e| Some((vec![if e.dst == e.src + 1 { forward(e.src) } else { back }], 0.0)))
            .collect(),
    )
}

fn search<'a>(g: &'a AlignmentGraph, d: &'a EdgeDiffs, mu: usize, beam: Option<usize>) -> PathSearch<'a> {
    PathSearch { graph: g, diffs: d, mu, beam }
}

#[test]
fn chain_powers_follow_the_summed_difference() {
    let (_, g) = chain();
    let d = diffs(&g, |_| 0.1, 5.0);
    let s = search(&g, &d, 5, None);
    for k in 1..4 {
        let want = 1.0 / (1.0 + 0.1 * k as f64);
        assert!((s.pair_to_pair(0, k) - want).abs() < 1e-12, "hop {k}");
    }
}

#[test]
fn opposite_deltas_cancel_along_a_path() {
    let (_, g) = chain();
    let d = diffs(&g, |i| if i == 0 { 0.5 } else { -0.5 }, 5.0);
    let s = search(&g, &d, 5, None);
    assert!((s.pair_to_pair(0, 1) - 1.0 / 1.5).abs() < 1e-12);
    assert!((s.pair_to_pair(0, 2) - 1.0).abs() < 1e-12);
}

#[test]
fn hop_limit_and_mask_cut_paths() {
    let (_, g) = chain();
    let d = diffs(&g, |_| 0.1, 0.1);
    assert_eq!(search(&g, &d, 2, None).pair_to_pair(0, 3), 0.0);
    let mask: Vec<bool> = g.edges().iter().map(|e| !(e.src == 1 && e.dst == 2)).collect();
    let reach: Vec<usize> = search(&g, &d, 5, None).from_source(0, Some(&mask)).iter().map(|x| x.0).collect();
    assert_eq!(reach, vec![1]);
}

#[test]
fn unusable_edges_carry_nothing() {
    let (_, g) = chain();
    let d = EdgeDiffs::from_parts(vec![None; g.num_edges()]);
    assert!(search(&g, &d, 5, None).from_source(0, None).is_empty());
    assert_eq!(d.edge_power(0), 0.0);
}

#[test]
fn edge_power_includes_the_radius() {
    let d = EdgeDiffs::from_parts(vec![Some((vec![3.0, 4.0], 1.0))]);
    assert!((d.edge_power(0) - 1.0 / 7.0).abs() < 1e-15);
}

proptest! {
    #[test]
    fn wide_beam_matches_exhaustive(f in prop::collection::vec(-1.0f64..1.0, 3), back in -1.0f64..1.0, mu in 1usize..5) {
        let (_, g) = chain();
        let d = diffs(&g, |i| f[i], back);
        for src in 0..g.num_nodes() {
            let a = search(&g, &d, mu, None).from_source(src, None);
            let b = search(&g, &d, mu, Some(1000)).from_source(src, None);
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn path_difference_matches_direct_formula(
        hops in prop::collection::vec((prop::collection::vec(-1.0f64..1.0, 2), prop::collection::vec(-1.0f64..1.0, 2), 0.0f64..0.5, 0.0f64..0.5), 1..5),
        scale in 0.1f64..2.0,
    ) {
        let m = Matrix::from_fn(2, 2, |i, j| if i == j { scale } else { 0.0 });
        let bounds: Vec<(EdgeBound, EdgeBound)> = hops
            .iter()
            .map(|(l, r, dl, dr)| {
                let b = |v: &Vec<f64>, d: f64| EdgeBound { r_tilde: v.clone(), d, converged: true };
                (b(l, *dl), b(r, *dr))
            })
            .collect();
        let (mut sx, mut sy, mut rad) = (0.0, 0.0, 0.0);
        for (l, r, dl, dr) in &hops {
            sx += scale * l[0] - r[0];
            sy += scale * l[1] - r[1];
            rad += dl + dr;
        }
        let want = (sx * sx + sy * sy).sqrt() + rad;
        prop_assert!((path_difference(&m, &bounds) - want).abs() < 1e-12);
    }
}

#[test]
fn table_thresholds_and_best_sources() {
    let nodes = (0..3).map(|i| ElementPair::entity(i, i)).collect();
    let t = PowerTable::new(nodes, vec![vec![(0, 1.0), (1, 0.9), (2, 0.5)], vec![(1, 1.0), (2, 0.85)], vec![(2, 1.0)]]);
    assert_eq!(t.power(0, 2), 0.5);
    assert_eq!(t.power(2, 0), 0.0);
    let k = t.thresholded(0.8);
    assert_eq!(k.num_entries(), 5);
    assert_eq!(t.best_from(&[0, 1]), vec![1.0, 1.0, 0.85]);
    assert!((overall_power(&t, &[0], 0.8) - 1.9).abs() < 1e-12);
    assert_eq!(overall_power(&t, &[], 0.8), 0.0);
}
