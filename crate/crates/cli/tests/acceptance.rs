//! Acceptance suite. Prints one line per criterion and exits nonzero when
//! any fails. Pass criterion numbers as arguments to run a subset.

use std::collections::HashSet;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use kgalign::align::{
    self, directional_softmax, AlignConfig, AlignExample, DerivedFeatures, JointGrads, JointModel, JointParam, LabeledSets,
};
use kgalign::config::{ExperimentConfig, Selector};
use kgalign::embed::{self, EmbedConfig, ModelKind};
use kgalign::graph::AlignmentGraph;
use kgalign::harness::{inference_accuracy, Oracle};
use kgalign::infer::{edge_bound, BoundMode, EdgeDiffs, InferConfig, PowerTable};
use kgalign::kg::{synth_kg_pair, Dataset, ElementKind, ElementPair, GoldIndex, KgBuilder, Label, SynthParams};
use kgalign::linalg;
use kgalign::par::Exec;
use kgalign::rng::{self, Rng};
use kgalign::select::{batch_probability, cross_partition_mask, generate_pool, GainState, GreedyMode};
use kgalign::session::{ActiveSession, SelectionInput};
use rand::seq::SliceRandom;
use rand::Rng as _;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(t: Instant, limit: Duration) -> (bool, String) {
    let e = t.elapsed();
    (e < limit, format!("{:.1}s of {}s", e.as_secs_f64(), limit.as_secs()))
}

// ---------------------------------------------------------------- 1

/// Richardson-extrapolated central differences on up to `n` coordinates with
/// a nonzero gradient; returns the worst relative error.
fn fd_check(jm: &JointModel, g: &JointGrads, n: usize, loss: impl Fn(&JointModel) -> f64) -> (f64, usize) {
    let mut coords: Vec<JointParam> = g.nonzero_coordinates();
    coords.shuffle(&mut rng::stream(1, "fd", 0));
    coords.truncate(n);
    let mut worst: f64 = 0.0;
    let mut probe = jm.clone();
    let mut central = |p: JointParam, h: f64| {
        let x = jm.get(p);
        probe.set(p, x + h);
        let up = loss(&probe);
        probe.set(p, x - h);
        let down = loss(&probe);
        probe.set(p, x);
        (up - down) / (2.0 * h)
    };
    let h = 1e-3;
    for &p in &coords {
        let num = (4.0 * central(p, h / 2.0) - central(p, h)) / 3.0;
        let ana = g.get(p);
        worst = worst.max((ana - num).abs() / ana.abs().max(num.abs()).max(1e-6));
    }
    (worst, coords.len())
}

fn gradient_model(kind: ModelKind) -> (Dataset, JointModel, DerivedFeatures) {
    let p = SynthParams {
        entities: 40,
        relations: 6,
        classes: 4,
        ..SynthParams::default()
    };
    let ds = synth_kg_pair(&p, 3).unwrap().0;
    let cfg = EmbedConfig {
        kind,
        dim_e: 8,
        dim_c: 4,
        ..EmbedConfig::default()
    };
    let align = AlignConfig {
        init_noise: 0.3,
        ..AlignConfig::default()
    };
    let jm = JointModel::new(&ds, cfg, align, 5);
    let f = DerivedFeatures::compute(&jm, &ds);
    (ds, jm, f)
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let mut failures = Vec::new();
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let mut fewest = usize::MAX;
    let mut check = |name: String, (err, n): (f64, usize)| {
        checked += 1;
        worst = worst.max(err);
        fewest = fewest.min(n);
        if n < 100 || !(err < 1e-4) {
            failures.push(format!("{name} err {err:.2e} coords {n}"));
        }
    };
    for kind in [ModelKind::TransE, ModelKind::RotatE] {
        let (ds, jm, f) = gradient_model(kind);
        let mut r = rng::stream(2, "neg", 0);

        let er = embed::sample_er_negatives(&ds.kg1, ds.kg1.triples(), 2, &mut r);
        let er_loss = |m: &JointModel| embed::er_pair_loss(&m.left, &er).0;
        let mut g = jm.zero_grads();
        g.left = embed::er_pair_loss(&jm.left, &er).1;
        check(format!("{kind:?} er"), fd_check(&jm, &g, 150, er_loss));

        let ec = embed::sample_ec_negatives(&ds.kg1, ds.kg1.type_triples(), 2, &mut r);
        let ec_loss = |m: &JointModel| embed::ec_pair_loss(&m.left, &ec.pairs).0;
        let mut g = jm.zero_grads();
        g.left = embed::ec_pair_loss(&jm.left, &ec.pairs).1;
        check(format!("{kind:?} ec"), fd_check(&jm, &g, 150, ec_loss));

        let mut labels = LabeledSets::default();
        for kind in ElementKind::ALL {
            for &(l, r) in ds.links.of_kind(kind) {
                labels.insert(ElementPair { kind, left: l, right: r }, Label::Match).unwrap();
            }
        }
        let examples = align::sample_alignment_examples(&ds, &labels, 4, &mut r);
        for ek in ElementKind::ALL {
            let ex: Vec<AlignExample> = examples.iter().filter(|e| e.pos.kind == ek).cloned().collect();
            for focal in [false, true] {
                let (_, g) = align::alignment_example_loss(&jm, &f, &ex, focal);
                let loss = |m: &JointModel| align::alignment_example_loss(m, &f, &ex, focal).0;
                let tag = if focal { " focal" } else { "" };
                check(format!("{kind:?} {}{tag}", ek.as_str()), fd_check(&jm, &g, 150, loss));
            }
        }

        let mined: Vec<(ElementPair, f64)> = labels.matches().map(|p| (p, r.gen_range(0.2..1.0))).collect();
        let (_, g) = align::semi_loss(&jm, &f, &mined);
        check(format!("{kind:?} semi"), fd_check(&jm, &g, 150, |m| align::semi_loss(m, &f, &mined).0));
    }
    let (fast, time) = within(t, Duration::from_secs(60));
    let pass = failures.is_empty() && fast;
    let mut detail = format!("{checked} losses, worst rel err {worst:.2e}, min coords {fewest}, {time}");
    if !failures.is_empty() {
        detail.push_str(&format!("; failing: {}", failures.join(", ")));
    }
    outcome(pass, detail)
}

// ---------------------------------------------------------------- 2, 3

struct GainInstance {
    /// Dense `power[s][t]`; 0 means no entry.
    power: Vec<Vec<f64>>,
    probs: Vec<f64>,
    floor: Vec<f64>,
}

impl GainInstance {
    fn random(n: usize, r: &mut Rng) -> Self {
        let mut power = vec![vec![0.0; n]; n];
        for (s, row) in power.iter_mut().enumerate() {
            row[s] = 1.0;
            for t in 0..n {
                if t != s && r.gen_bool(0.3) {
                    row[t] = r.gen_range(0.01..1.0);
                }
            }
        }
        let probs = (0..n)
            .map(|_| match r.gen_range(0..10) {
                0 => 0.0,
                1 => 1.0,
                _ => r.gen_range(0.0..1.0),
            })
            .collect();
        let floor = (0..n).map(|_| if r.gen_bool(0.3) { r.gen_range(0.0..1.0) } else { 0.0 }).collect();
        GainInstance { power, probs, floor }
    }

    fn table(&self) -> PowerTable {
        let n = self.power.len();
        let rows = self
            .power
            .iter()
            .map(|row| row.iter().enumerate().filter(|x| *x.1 > 0.0).map(|(t, &p)| (t, p)).collect())
            .collect();
        PowerTable::new((0..n).map(|i| ElementPair::entity(i, i)).collect(), rows)
    }

    /// Expected objective of `batch` by enumerating every match outcome.
    fn expected(&self, batch: &[usize]) -> f64 {
        let n = self.power.len();
        let mut total = 0.0;
        for mask in 0u32..(1 << batch.len()) {
            let mut prob = 1.0;
            let mut best = self.floor.clone();
            for (i, &q) in batch.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    prob *= self.probs[q];
                    for t in 0..n {
                        best[t] = best[t].max(self.power[q][t]);
                    }
                } else {
                    prob *= 1.0 - self.probs[q];
                }
            }
            total += prob * best.iter().sum::<f64>();
        }
        total
    }
}

fn state_after<'a>(inst: &GainInstance, table: &'a PowerTable, batch: &[usize]) -> GainState<'a> {
    let mut s = GainState::new(table, inst.probs.clone(), inst.floor.clone());
    for &q in batch {
        s.push(q);
    }
    s
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let mut r = rng::stream(2, "acceptance", 0);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = r.gen_range(2..=30);
        let inst = GainInstance::random(n, &mut r);
        let table = inst.table();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut r);
        let k = r.gen_range(0..n.min(10));
        let (batch, rest) = order.split_at(k);
        let q = rest[0];
        let state = state_after(&inst, &table, batch);
        let mut with_q = batch.to_vec();
        with_q.push(q);
        let exact = inst.expected(&with_q) - inst.expected(batch);
        worst = worst.max((state.gain(q) - exact).abs());
        worst = worst.max((state.objective() - inst.expected(batch)).abs());
    }
    let (fast, time) = within(t, Duration::from_secs(60));
    outcome(worst <= 1e-9 && fast, format!("200 instances, max |gain - enumeration| {worst:.2e}, {time}"))
}

fn criterion_3() -> Outcome {
    let mut r = rng::stream(3, "acceptance", 0);
    let (mut checks, mut negative, mut increasing) = (0, 0, 0);
    let tol = 1e-12;
    for _ in 0..200 {
        let n = r.gen_range(3..=30);
        let inst = GainInstance::random(n, &mut r);
        let table = inst.table();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut r);
        let big = r.gen_range(1..n);
        let small = r.gen_range(0..=big);
        let s = state_after(&inst, &table, &order[..small]);
        let b = state_after(&inst, &table, &order[..big]);
        for &q in &order[big..] {
            checks += 1;
            let (gs, gb) = (s.gain(q), b.gain(q));
            if gs < -tol || gb < -tol {
                negative += 1;
            }
            if gb > gs + tol {
                increasing += 1;
            }
        }
    }
    outcome(
        negative == 0 && increasing == 0,
        format!("200 instances, {checks} checks, {negative} negative gains, {increasing} diminishing-return violations"),
    )
}

// ---------------------------------------------------------------- 4

fn small_instance(r: &mut Rng) -> (Dataset, Vec<ElementPair>) {
    let (nl, nr) = (3, 3);
    let mut b1 = KgBuilder::new();
    let mut b2 = KgBuilder::new();
    for i in 0..nl {
        b1.entity(&format!("a{i}"));
    }
    for i in 0..nr {
        b2.entity(&format!("b{i}"));
    }
    for _ in 0..r.gen_range(3..=6) {
        let (h, t) = (r.gen_range(0..nl), r.gen_range(0..nl));
        b1.triple(&format!("a{h}"), &format!("r{}", r.gen_range(0..2)), &format!("a{t}"));
    }
    for _ in 0..r.gen_range(3..=6) {
        let (h, t) = (r.gen_range(0..nr), r.gen_range(0..nr));
        b2.triple(&format!("b{h}"), &format!("s{}", r.gen_range(0..2)), &format!("b{t}"));
    }
    let ds = Dataset {
        kg1: b1.build(),
        kg2: b2.build(),
        links: Default::default(),
    };
    let mut pool = Vec::new();
    for i in 0..ds.kg1.num_entities() {
        for j in 0..ds.kg2.num_entities() {
            pool.push(ElementPair::entity(i, j));
        }
    }
    let rels = ds.kg1.candidates(ElementKind::Relation);
    for (&a, &b) in rels.iter().zip(&ds.kg2.candidates(ElementKind::Relation)) {
        pool.push(ElementPair::relation(a, b));
    }
    (ds, pool)
}

fn objective(table: &PowerTable, probs: &[f64], batch: impl IntoIterator<Item = usize>) -> f64 {
    let mut s = GainState::new(table, probs.to_vec(), vec![0.0; probs.len()]);
    for q in batch {
        s.push(q);
    }
    s.objective()
}

fn subsets(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if cur.len() == k {
        f(cur);
        return;
    }
    for i in start..n {
        cur.push(i);
        subsets(n, k, i + 1, cur, f);
        cur.pop();
    }
}

#[derive(Default)]
struct RatioStats {
    instances: usize,
    /// Instances where partitioning lowered some estimate.
    reduced: usize,
    greedy_bad: usize,
    part_bad: usize,
    pair_bad: usize,
    pairs: usize,
    worst_greedy: f64,
    worst_part: f64,
    worst_pair: f64,
}

impl RatioStats {
    fn ok(&self) -> bool {
        self.greedy_bad == 0 && self.part_bad == 0 && self.pair_bad == 0
    }

    fn summary(&self) -> String {
        format!(
            "{} instances ({} with reduced estimates): greedy below bound {} (min F/opt {:.3}), partition below bound {} \
             (min F/(rho^mu opt) {:.3}), per-pair estimate below rho^mu {}/{} (min ratio {:.3})",
            self.instances,
            self.reduced,
            self.greedy_bad,
            self.worst_greedy,
            self.part_bad,
            self.worst_part,
            self.pair_bad,
            self.pairs,
            self.worst_pair
        )
    }
}

fn ratio_instances(count: usize, seed: u64) -> RatioStats {
    let mut r = rng::stream(seed, "acceptance", 0);
    let ratio = 1.0 - (-1.0f64).exp();
    let mut st = RatioStats {
        instances: count,
        worst_greedy: f64::INFINITY,
        worst_part: f64::INFINITY,
        worst_pair: f64::INFINITY,
        ..RatioStats::default()
    };
    for i in 0..count {
        let (ds, pool) = small_instance(&mut r);
        let graph = AlignmentGraph::build(&ds, &pool);
        let n = graph.num_nodes();
        let parts = (0..graph.num_edges())
            .map(|_| {
                let len = r.gen_range(0.0..2.0);
                let a: f64 = r.gen_range(0.0..std::f64::consts::TAU);
                Some((vec![len * a.cos(), len * a.sin()], r.gen_range(0.0..0.3)))
            })
            .collect();
        let diffs = EdgeDiffs::from_parts(parts);
        let cfg = EmbedConfig {
            dim_e: 2,
            dim_c: 2,
            ..EmbedConfig::default()
        };
        let jm = JointModel::new(&ds, cfg, AlignConfig::default(), i as u64);
        let features = DerivedFeatures::compute(&jm, &ds);
        let labels = LabeledSets::default();
        let mu = r.gen_range(1..=5);
        let rho = [0.5, 0.6, 0.7, 0.8, 0.9][r.gen_range(0..5)];
        let inp = SelectionInput {
            ds: &ds,
            jm: &jm,
            features: &features,
            graph: &graph,
            labels: &labels,
            infer: InferConfig {
                mu,
                beam: None,
                kappa: 0.0,
                ..InferConfig::default()
            },
            greedy: GreedyMode::Lazy,
            seed: 0,
            exec: Exec::Sequential,
        };
        let probs: Vec<f64> = (0..n).map(|_| r.gen_range(0.05..0.95)).collect();
        let all: Vec<usize> = (0..n).collect();
        let budget = r.gen_range(1..=4);
        let truth = inp.power_table(&diffs, &all, None);
        let mut opt: f64 = 0.0;
        subsets(n, budget, 0, &mut Vec::new(), &mut |s| opt = opt.max(objective(&truth, &probs, s.iter().copied())));

        let greedy = inp.select_with(&diffs, &probs, &all, budget, None);
        let fg = objective(&truth, &probs, greedy.selected.iter().map(|s| s.node));
        st.worst_greedy = st.worst_greedy.min(fg / opt);
        st.greedy_bad += usize::from(fg < ratio * opt - 1e-12);

        let part = inp.select_with(&diffs, &probs, &all, budget, Some(rho));
        let fp = objective(&truth, &probs, part.selected.iter().map(|s| s.node));
        let bound = rho.powi(mu as i32);
        st.worst_part = st.worst_part.min(fp / (bound * opt));
        st.part_bad += usize::from(fp < bound * ratio * opt - 1e-12);

        st.reduced += usize::from((0..n).any(|q| part.table.row(q) != truth.row(q)));
        for q in 0..n {
            let sum = |tb: &PowerTable| tb.row(q).iter().filter(|x| x.0 != q).map(|x| x.1).sum::<f64>();
            let (est, exact) = (sum(&part.table), sum(&truth));
            if exact > 0.0 {
                st.pairs += 1;
                st.worst_pair = st.worst_pair.min(est / (bound * exact));
                st.pair_bad += usize::from(est < bound * exact - 1e-12);
            }
        }
    }
    st
}

fn criterion_4() -> Outcome {
    let t = Instant::now();
    let st = ratio_instances(50, 4);
    let (fast, time) = within(t, Duration::from_secs(300));
    // wider sample, reported only
    let stress = ratio_instances(2000, 40);
    outcome(st.ok() && fast, format!("{}, {time}; stress run: {}", st.summary(), stress.summary()))
}

// ---------------------------------------------------------------- 5

fn quick_config(seed: u64, extra: &str) -> ExperimentConfig {
    let base = "embed.dim_e = 32\nembed.dim_c = 16\nembed.epochs = 100\nembed.batch_size = 128\n\
                joint.epochs = 100\njoint.batch_size = 128\nloop.finetune_epochs = 20\n";
    let mut cfg = ExperimentConfig::from_text(&format!("{base}{extra}")).unwrap();
    cfg.seed = seed;
    cfg
}

fn criterion_5() -> Outcome {
    let t = Instant::now();
    let p = SynthParams {
        entities: 200,
        noise: 0.1,
        ..SynthParams::default()
    };
    let ds = synth_kg_pair(&p, 5).unwrap().0;
    let cfg = quick_config(5, "select.budget = 25\nloop.labels = 100\nloop.selector = daakg_greedy\n");
    let mut s = ActiveSession::new(cfg, ds.clone()).unwrap();

    let space = &s.model().left;
    let mut r = rng::stream(5, "acceptance", 0);
    let (mut worst_r, mut worst_d, mut converged) = (0.0f64, 0.0f64, true);
    for tr in ds.kg1.triples().iter().take(100) {
        let closed = edge_bound(space, tr.head, tr.rel, BoundMode::Closed, 1, &mut r);
        let generic = edge_bound(space, tr.head, tr.rel, BoundMode::Generic, 8, &mut r);
        worst_r = worst_r.max(linalg::distance(&generic.r_tilde, &space.relation_vector(tr.rel)));
        worst_r = worst_r.max(linalg::distance(&generic.r_tilde, &closed.r_tilde));
        worst_d = worst_d.max(generic.d);
        converged &= generic.converged;
    }

    let gold = GoldIndex::new(&ds.links);
    let mut inferred: Vec<ElementPair> = Vec::new();
    let mut per_round = Vec::new();
    let mut oracle = Oracle::new(&ds.links);
    loop {
        let round: Vec<ElementPair> = s.inferred_pairs().into_iter().map(|x| x.0).collect();
        per_round.push(format!("{}", round.len()));
        inferred.extend(round);
        let Ok(batch) = s.select_batch() else { break };
        let answers: Vec<(String, Label)> = batch
            .items
            .iter()
            .map(|it| (it.pair_id.clone(), oracle.label(&it.pair_id.parse::<kgalign::session::PairId>().unwrap().0)))
            .collect();
        s.record_labels(&answers).unwrap();
        s.train_round().unwrap();
    }
    let acc = inference_accuracy(&inferred, &gold);
    let (fast, time) = within(t, Duration::from_secs(600));
    let bound_ok = worst_r < 1e-3 && worst_d < 1e-3 && converged;
    let acc_ok = acc.is_some_and(|a| a >= 0.95);
    outcome(
        bound_ok && acc_ok && fast,
        format!(
            "generic bound max |r~ - r| {worst_r:.2e}, max d {worst_d:.2e}; inferred pairs per round [{}], \
             accuracy {} over {}, {time}",
            per_round.join(", "),
            acc.map_or("n/a".into(), |a| format!("{a:.3}")),
            inferred.len()
        ),
    )
}

// ---------------------------------------------------------------- 6

fn loop_dataset(seed: u64) -> Dataset {
    let p = SynthParams {
        entities: 500,
        relations: 12,
        classes: 6,
        density: 2.0,
        noise: 0.0,
        dangling: 0.3,
    };
    synth_kg_pair(&p, seed).unwrap().0
}

fn criterion_6() -> Outcome {
    let t = Instant::now();
    let sels = [Selector::DaakgGreedy, Selector::Uncertainty, Selector::Random];
    let seeds = 1..=5u64;
    let n = seeds.clone().count() as f64;
    // per selector, entity H@1 summed over seeds, one entry per round
    let mut curves: Vec<Vec<f64>> = vec![Vec::new(); sels.len()];
    for seed in seeds {
        let ds = loop_dataset(seed);
        let cfg = quick_config(seed, "select.budget = 50\nloop.labels = 200\n");
        let base = ActiveSession::new(cfg, ds.clone()).unwrap();
        let mut row = Vec::new();
        for (i, sel) in sels.iter().enumerate() {
            let mut s = base.with_selector(*sel);
            s.run_simulated(&mut Oracle::new(&ds.links)).unwrap();
            let h: Vec<f64> = s.records().iter().map(|r| r.metrics.entity.hits1).collect();
            curves[i].resize(h.len(), 0.0);
            for (c, x) in curves[i].iter_mut().zip(&h) {
                *c += x;
            }
            row.push(format!("{sel} {:.3}", h.last().unwrap()));
        }
        println!("  seed {seed}: {}", row.join(", "));
    }
    for (sel, c) in sels.iter().zip(&curves) {
        let shown: Vec<String> = c.iter().map(|x| format!("{:.3}", x / n)).collect();
        println!("  mean H@1 per round, {sel}: {}", shown.join(" "));
    }
    let means: Vec<f64> = curves.iter().map(|c| c.last().unwrap() / n).collect();
    let (fast, time) = within(t, Duration::from_secs(1800));
    outcome(
        means[0] > means[1] && means[1] > means[2] && fast,
        format!(
            "mean final entity H@1: daakg_greedy {:.3}, uncertainty {:.3}, random {:.3}; {time}",
            means[0], means[1], means[2]
        ),
    )
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Outcome {
    let p = SynthParams {
        entities: 300,
        relations: 8,
        classes: 6,
        density: 10.0,
        noise: 0.0,
        dangling: 0.3,
    };
    let ds = synth_kg_pair(&p, 7).unwrap().0;
    let cfg = quick_config(7, "select.budget = 50\nselect.neighbors = 18\n");
    let s = ActiveSession::new(cfg, ds.clone()).unwrap();
    let inp = s.selection_input();
    let probs = s.probabilities();
    let cands = s.candidates();
    let diffs = inp.edge_diffs();
    let budget = 50;
    // median of seven runs
    let timed = |rho: Option<f64>| {
        let mut times = Vec::new();
        let mut sel = None;
        for _ in 0..7 {
            let t = Instant::now();
            sel = Some(inp.select_with(&diffs, &probs, &cands, budget, rho));
            times.push(t.elapsed().as_secs_f64());
        }
        times.sort_by(f64::total_cmp);
        (times[3], sel.unwrap())
    };
    let (_, greedy) = timed(None);
    let (t_one, full) = timed(Some(1.0));
    let (t_low, low) = timed(Some(0.8));
    let kept = |sel: &kgalign::session::PowerSelection| {
        let p = sel.partition.as_ref().unwrap();
        (cross_partition_mask(s.graph(), p).into_iter().filter(|&k| k).count(), p.count)
    };
    let ((e_one, n_one), (e_low, n_low)) = (kept(&full), kept(&low));

    // realized power: what the true matches among the selection infer
    let gold = GoldIndex::new(&ds.links);
    let known = inp.known_matches();
    let truth = inp.power_table(&diffs, &cands, None);
    let kappa = inp.infer.kappa;
    let base = kgalign::infer::overall_power(&truth, &known, kappa);
    let realized = |sel: &kgalign::session::PowerSelection| {
        let mut src = known.clone();
        src.extend(sel.selected.iter().map(|x| x.node).filter(|&q| gold.is_match(&s.graph().node(q))));
        kgalign::infer::overall_power(&truth, &src, kappa) - base
    };
    let (rg, rl) = (realized(&greedy), realized(&low));
    let share = if rg > 0.0 { rl / rg } else { 1.0 };
    outcome(
        t_low < t_one && share >= 0.8,
        format!(
            "pool {} pairs, {} edges; median selection {:.1} ms at rho 1.0 ({n_one} parts, {e_one} edges searched) \
             vs {:.1} ms at rho 0.8 ({n_low} parts, {e_low} edges searched); realized power {rl:.2} vs greedy {rg:.2} = {:.1}%",
            s.graph().num_nodes(),
            s.graph().num_edges(),
            1e3 * t_one,
            1e3 * t_low,
            100.0 * share
        ),
    )
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Outcome {
    let sets = [("clone", 0.0, 0.0), ("noisy clone", 0.1, 0.0), ("dangling", 0.0, 0.3)];
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, &(name, noise, dangling)) in sets.iter().enumerate() {
        let p = SynthParams {
            entities: 200,
            noise,
            dangling,
            ..SynthParams::default()
        };
        let ds = synth_kg_pair(&p, 80 + i as u64).unwrap().0;
        let cfg = quick_config(8, "embed.epochs = 30\njoint.epochs = 30\n");
        let s = ActiveSession::new(cfg, ds.clone()).unwrap();
        let none = HashSet::new();
        let links: HashSet<ElementPair> = ds.links.entities.iter().map(|&(l, r)| ElementPair::entity(l, r)).collect();
        let sat = ds.kg1.num_entities().max(ds.kg2.num_entities());
        let mut curve = Vec::new();
        for n in [1, 2, 3, 5, 10, 20, 50, 100, sat] {
            let pool = generate_pool(s.model(), &ds, s.features(), n, &none, &none, Exec::available());
            let hit = pool.iter().filter(|p| links.contains(p)).count();
            curve.push(hit as f64 / links.len() as f64);
        }
        let monotone = curve.windows(2).all(|w| w[1] >= w[0]);
        let last = *curve.last().unwrap();
        let saturated = dangling > 0.0 || last == 1.0;
        pass &= monotone && saturated;
        let shown: Vec<String> = curve.iter().map(|c| format!("{c:.3}")).collect();
        parts.push(format!("{name} [{}]", shown.join(" ")));
    }
    outcome(pass, format!("recall at N = 1,2,3,5,10,20,50,100,all: {}", parts.join("; ")))
}

// ---------------------------------------------------------------- 9

fn criterion_9() -> Outcome {
    let mut r = rng::stream(9, "acceptance", 0);
    let (mut soft, mut batch) = (0.0f64, 0.0f64);
    for _ in 0..500 {
        let n = r.gen_range(1..50);
        let sims: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let z = r.gen_range(0.01..1.0);
        soft = soft.max((directional_softmax(&sims, z).iter().sum::<f64>() - 1.0).abs());
        let k = r.gen_range(1..=10);
        let probs: Vec<f64> = (0..k).map(|_| r.gen_range(0.0..1.0)).collect();
        let mut total = 0.0;
        for mask in 0u32..(1 << k) {
            let plus: Vec<bool> = (0..k).map(|i| mask >> i & 1 == 1).collect();
            total += batch_probability(&probs, &plus);
        }
        batch = batch.max((total - 1.0).abs());
    }
    outcome(
        soft <= 1e-6 && batch <= 1e-9,
        format!("500 instances, max softmax deviation {soft:.2e}, max batch-probability deviation {batch:.2e}"),
    )
}

// ---------------------------------------------------------------- 10

fn run(args: &[&str]) {
    let st = Command::new(env!("CARGO_BIN_EXE_kgalign")).args(args).stdout(Stdio::null()).status().unwrap();
    assert!(st.success(), "kgalign {args:?} failed: {st}");
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |x: &str| dir.path().join(x).to_string_lossy().into_owned();
    run(&["synth", "--out", &p("data"), "--entities", "150", "--dangling", "0.2", "--seed", "4"]);
    let report = |out: &str| {
        run(&[
            "loop",
            "--data",
            &p("data"),
            "--out",
            &p(out),
            "--selector",
            "daakg_greedy",
            "--budget",
            "40",
            "--select.budget",
            "20",
            "--embed.epochs",
            "20",
            "--joint.epochs",
            "20",
            "--loop.finetune_epochs",
            "5",
            "--seed",
            "11",
        ]);
        let read = |f: &str| std::fs::read(Path::new(&p(out)).join(f)).unwrap();
        (read("rounds.jsonl"), read("events.jsonl"))
    };
    let a = report("a");
    let b = report("b");
    let lines = a.0.iter().filter(|&&c| c == b'\n').count();
    outcome(
        a == b && lines > 1,
        format!("rounds.jsonl ({} bytes, {lines} records) and events.jsonl identical: {}", a.0.len(), a == b),
    )
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let all: [(usize, fn() -> Outcome); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let mut failed = 0;
    for (n, f) in all {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let o = f();
        println!("criterion {n}: {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
