use kgalign::config::{ExperimentConfig, Selector};
use kgalign::harness::Oracle;
use kgalign::kg::{synth_kg_pair, Dataset, Label, SynthParams};
use kgalign::session::{ActiveSession, SessionError};

fn dataset() -> Dataset {
    let p = SynthParams {
        entities: 80,
        dangling: 0.2,
        ..SynthParams::default()
    };
    synth_kg_pair(&p, 3).unwrap().0
}

fn config(extra: &str) -> ExperimentConfig {
    let base = "embed.dim_e = 16\nembed.dim_c = 8\nembed.epochs = 10\njoint.epochs = 10\nloop.finetune_epochs = 3\n\
                select.budget = 6\nloop.labels = 12\nloop.selector = daakg_greedy\n";
    ExperimentConfig::from_text(&format!("{base}{extra}")).unwrap()
}

fn json<T: serde::Serialize>(x: &T) -> String {
    serde_json::to_string(x).unwrap()
}

fn answer(s: &ActiveSession, oracle: &mut Oracle) -> Vec<(String, Label)> {
    let batch = s.pending().unwrap();
    batch
        .items
        .iter()
        .map(|it| (it.pair_id.clone(), oracle.label(&it.pair_id.parse::<kgalign::session::PairId>().unwrap().0)))
        .collect()
}

#[test]
fn config_text_round_trips() {
    let cfg = config("select.rho = 0.7\nloop.infer_labels = true\n");
    let back = ExperimentConfig::from_text(&cfg.to_text()).unwrap();
    assert_eq!(back.to_text(), cfg.to_text());
    assert!(ExperimentConfig::from_text("no.such.key = 1\n").is_err());
}

#[test]
fn zero_budget_gives_one_record() {
    let ds = dataset();
    let mut s = ActiveSession::new(config("loop.labels = 0\n"), ds.clone()).unwrap();
    s.run_simulated(&mut Oracle::new(&ds.links)).unwrap();
    assert_eq!(s.records().len(), 1);
    assert!(matches!(s.select_batch(), Err(SessionError::BudgetExhausted)));
}

#[test]
fn batches_respect_budgets() {
    let ds = dataset();
    let mut s = ActiveSession::new(config("loop.labels = 10\n"), ds.clone()).unwrap();
    s.run_simulated(&mut Oracle::new(&ds.links)).unwrap();
    let sizes: Vec<usize> = s.records().iter().map(|r| r.batch_size).collect();
    assert_eq!(sizes, vec![0, 6, 4]);
    assert_eq!(s.labels_used(), 10);
}

#[test]
fn duplicates_are_noops_and_conflicts_fail() {
    let ds = dataset();
    let mut oracle = Oracle::new(&ds.links);
    let mut s = ActiveSession::new(config(""), ds).unwrap();
    s.select_batch().unwrap();
    let answers = answer(&s, &mut oracle);
    let first = s.record_labels(&answers[..1]).unwrap();
    assert_eq!((first.accepted, first.duplicates), (1, 0));
    let again = s.record_labels(&answers[..1]).unwrap();
    assert_eq!((again.accepted, again.duplicates), (0, 1));
    assert_eq!(s.events().len(), 1);

    let (id, label) = &answers[0];
    let flipped = if *label == Label::Match { Label::NonMatch } else { Label::Match };
    let err = s.record_labels(&[(id.clone(), flipped), answers[1].clone()]).unwrap_err();
    assert!(matches!(err, SessionError::Conflict(..)));
    // nothing from the rejected call is applied
    assert_eq!(s.pending().unwrap().missing(), answers.len() - 1);

    assert!(matches!(s.train_round(), Err(SessionError::Incomplete(_))));
    assert!(matches!(s.record_labels(&[("entity:9999:9999".into(), Label::Match)]), Err(SessionError::NotPending(_))));
    assert!(s.record_labels(&[("garbage".into(), Label::Match)]).is_err());
}

#[test]
fn train_without_batch_fails() {
    let mut s = ActiveSession::new(config(""), dataset()).unwrap();
    assert!(matches!(s.train_round(), Err(SessionError::NoBatch)));
}

#[test]
fn restart_reproduces_the_next_batch() {
    let ds = dataset();
    let mut oracle = Oracle::new(&ds.links);
    let mut s = ActiveSession::new(config("loop.labels = 18\n"), ds.clone()).unwrap();
    s.select_batch().unwrap();
    let a = answer(&s, &mut oracle);
    s.record_labels(&a).unwrap();
    s.train_round().unwrap();

    let mut buf = Vec::new();
    s.save(&mut buf).unwrap();
    let mut restored = ActiveSession::load(&buf[..], ds).unwrap();
    assert_eq!(restored.round(), s.round());
    let want = json(&s.select_batch().unwrap().items);
    let got = json(&restored.select_batch().unwrap().items);
    assert_eq!(got, want);
}

#[test]
fn snapshot_with_bad_header_is_rejected() {
    let err = ActiveSession::load(&b"something else\n{}\n"[..], dataset()).unwrap_err();
    assert!(matches!(err, SessionError::Snapshot(_)));
}

#[test]
fn replay_matches_the_original_run() {
    let ds = dataset();
    let cfg = config("");
    let mut s = ActiveSession::new(cfg, ds.clone()).unwrap();
    s.run_simulated(&mut Oracle::new(&ds.links)).unwrap();
    let r = ActiveSession::replay(cfg, ds, s.events()).unwrap();
    assert_eq!(json(&r.records()), json(&s.records()));
    assert_eq!(json(&r.labels()), json(&s.labels()));
}

#[test]
fn selectors_share_the_pretrained_start() {
    let ds = dataset();
    let base = ActiveSession::new(config(""), ds.clone()).unwrap();
    for sel in [Selector::Random, Selector::Degree, Selector::Pagerank, Selector::Uncertainty, Selector::DaakgPartition] {
        let mut s = base.with_selector(sel);
        s.run_simulated(&mut Oracle::new(&ds.links)).unwrap();
        assert_eq!(s.records()[0].metrics.entity.hits1, base.records()[0].metrics.entity.hits1);
        assert!(s.records().iter().all(|r| r.selector == sel));
        assert_eq!(s.labels_used(), 12);
    }
}

#[test]
fn pair_context_lists_neighbors() {
    let mut s = ActiveSession::new(config(""), dataset()).unwrap();
    let id = s.select_batch().unwrap().items[0].pair_id.clone();
    let ctx = s.pair_context(&id).unwrap();
    assert_eq!(ctx.pair_id, id);
    assert!(s.pair_context("entity:9999:9999").is_err());
}
