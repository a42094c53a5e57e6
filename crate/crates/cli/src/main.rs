use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Arg, ArgAction, ArgMatches, Command};
use kgalign::align::{match_probability, write_predictions, AlignError, PredictionRow, SimCache};
use kgalign::checkpoint::{Checkpoint, CheckpointError};
use kgalign::config::{ConfigError, ExperimentConfig};
use kgalign::embed::EmbedError;
use kgalign::harness::{evaluate, EvalSplit, Oracle};
use kgalign::kg::{load_dataset, synth_kg_pair, write_dataset, Dataset, ElementKind, LoadError, SynthParams};
use kgalign::session::{
    pretrain_model, split_links, write_batch_tsv, write_curves_csv, write_jsonl, ActiveSession, SessionError,
};
use kgalign_cli::server::{self, AppState};

#[derive(Debug)]
enum Failure {
    Missing(PathBuf),
    Config(String),
    Diverged(String),
    Other(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Missing(_) => 3,
            Failure::Config(_) => 4,
            Failure::Diverged(_) => 5,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Missing(p) => write!(f, "missing file {}", p.display()),
            Failure::Config(m) => write!(f, "{m}"),
            Failure::Diverged(m) => write!(f, "{m}"),
            Failure::Other(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.into())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<LoadError> for Failure {
    fn from(e: LoadError) -> Self {
        match e {
            LoadError::MissingFile(p) => Failure::Missing(p),
            e => Failure::Other(e.into()),
        }
    }
}

impl From<AlignError> for Failure {
    fn from(e: AlignError) -> Self {
        match e {
            AlignError::Diverged { .. } | AlignError::Embed(EmbedError::Diverged { .. }) => Failure::Diverged(e.to_string()),
        }
    }
}

impl From<SessionError> for Failure {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Train(e) => e.into(),
            e => Failure::Other(e.into()),
        }
    }
}

impl From<CheckpointError> for Failure {
    fn from(e: CheckpointError) -> Self {
        Failure::Other(e.into())
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn config_args() -> Vec<Arg> {
    let mut args = vec![Arg::new("config").long("config").value_name("FILE").help("Read `key = value` settings from FILE")];
    for key in ExperimentConfig::keys() {
        let mut a = Arg::new(key).long(key).value_name("VALUE").help(format!("Set config key `{key}`"));
        match key {
            "loop.selector" => a = a.visible_alias("selector"),
            "loop.labels" => a = a.visible_alias("budget"),
            _ => {}
        }
        args.push(a);
    }
    args
}

fn data_arg() -> Arg {
    Arg::new("data").long("data").value_name("DIR").required(true).help("Dataset directory")
}

fn checkpoint_arg(required: bool) -> Arg {
    Arg::new("checkpoint")
        .long("checkpoint")
        .value_name("FILE")
        .required(required)
        .help("Model checkpoint")
}

fn cli() -> Command {
    Command::new("kgalign")
        .about("Joint entity, relation and class alignment of knowledge graphs with batch active learning")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(
            Command::new("synth")
                .about("Generate a synthetic dataset pair with exact gold links")
                .arg(Arg::new("out").long("out").value_name("DIR").required(true))
                .arg(Arg::new("entities").long("entities").default_value("200"))
                .arg(Arg::new("relations").long("relations").default_value("12"))
                .arg(Arg::new("classes").long("classes").default_value("6"))
                .arg(Arg::new("density").long("density").default_value("2.0"))
                .arg(Arg::new("noise").long("noise").default_value("0.0"))
                .arg(Arg::new("dangling").long("dangling").default_value("0.0"))
                .arg(Arg::new("seed").long("seed").default_value("1")),
        )
        .subcommand(
            Command::new("train")
                .about("Pretrain embeddings and the alignment on the seed labels")
                .arg(data_arg())
                .arg(Arg::new("out").long("out").value_name("FILE").required(true).help("Checkpoint to write"))
                .args(config_args()),
        )
        .subcommand(
            Command::new("eval")
                .about("Evaluate a checkpoint on the held-out split")
                .arg(data_arg())
                .arg(checkpoint_arg(true))
                .arg(Arg::new("out").long("out").value_name("FILE").help("Write the metrics JSON here"))
                .arg(Arg::new("predictions").long("predictions").value_name("FILE").help("Write top-1 predictions as TSV"))
                .args(config_args()),
        )
        .subcommand(
            Command::new("select")
                .about("Select one batch of pairs to label")
                .arg(data_arg())
                .arg(checkpoint_arg(true))
                .arg(Arg::new("out").long("out").value_name("FILE").help("Write the batch TSV here instead of stdout"))
                .args(config_args()),
        )
        .subcommand(
            Command::new("loop")
                .about("Run the active loop against the gold links")
                .arg(data_arg())
                .arg(checkpoint_arg(false))
                .arg(Arg::new("out").long("out").value_name("DIR").required(true).help("Report directory"))
                .arg(
                    Arg::new("timings")
                        .long("timings")
                        .action(ArgAction::SetTrue)
                        .help("Record wall-clock seconds per round"),
                )
                .args(config_args()),
        )
        .subcommand(
            Command::new("serve")
                .about("Serve an active session over HTTP")
                .arg(data_arg())
                .arg(checkpoint_arg(true))
                .arg(Arg::new("state").long("state").value_name("FILE").help("Session snapshot to resume from and keep updated"))
                .arg(Arg::new("addr").long("addr").default_value("127.0.0.1:7878"))
                .arg(Arg::new("assets").long("assets").value_name("DIR").help("Static files served next to the API"))
                .args(config_args()),
        )
}

fn path_of(m: &ArgMatches, id: &str) -> Option<PathBuf> {
    m.get_one::<String>(id).map(PathBuf::from)
}

fn existing(p: PathBuf) -> Result<PathBuf> {
    if p.exists() {
        Ok(p)
    } else {
        Err(Failure::Missing(p))
    }
}

fn resolve_config(m: &ArgMatches, base: ExperimentConfig) -> Result<ExperimentConfig> {
    let mut cfg = base;
    if let Some(p) = path_of(m, "config") {
        let text = fs::read_to_string(existing(p)?)?;
        cfg.apply_text(&text)?;
    }
    for key in ExperimentConfig::keys() {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_num<T: std::str::FromStr>(m: &ArgMatches, id: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let v = m.get_one::<String>(id).expect("has default");
    v.parse().map_err(|e| Failure::Config(format!("--{id} {v}: {e}")))
}

fn load_data(m: &ArgMatches) -> Result<Dataset> {
    let dir = existing(path_of(m, "data").expect("required"))?;
    Ok(load_dataset(&dir)?)
}

fn load_checkpoint(p: PathBuf) -> Result<Checkpoint> {
    let f = fs::File::open(existing(p)?)?;
    Ok(Checkpoint::read(BufReader::new(f))?)
}

fn create(p: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?))
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v).map_err(|e| Failure::Other(e.into()))?;
    writeln!(out)?;
    Ok(())
}

/// Top-1 counterpart of every left element, with its match probability
/// against all candidates.
fn predictions(cache: &SimCache, ds: &Dataset, cfg: &ExperimentConfig) -> Vec<PredictionRow> {
    let mut rows = Vec::new();
    for kind in ElementKind::ALL {
        let left = ds.kg1.candidates(kind);
        let right = ds.kg2.candidates(kind);
        let sim = |l: usize, r: usize| cache.sim(kind, l, r);
        let z = cfg.align.temperature(kind);
        for &l in &left {
            let Some(&r) = right.iter().max_by(|&&a, &&b| sim(l, a).total_cmp(&sim(l, b)).then(b.cmp(&a))) else {
                continue;
            };
            let pair = kgalign::kg::ElementPair { kind, left: l, right: r };
            rows.push(PredictionRow {
                kind,
                left: ds.kg1.element_name(kind, l),
                right: ds.kg2.element_name(kind, r),
                similarity: sim(l, r),
                probability: match_probability(sim, &pair, &right, &left, z),
            });
        }
    }
    rows
}

fn cmd_synth(m: &ArgMatches) -> Result<()> {
    let params = SynthParams {
        entities: parse_num(m, "entities")?,
        relations: parse_num(m, "relations")?,
        classes: parse_num(m, "classes")?,
        density: parse_num(m, "density")?,
        noise: parse_num(m, "noise")?,
        dangling: parse_num(m, "dangling")?,
    };
    let seed: u64 = parse_num(m, "seed")?;
    let (ds, stats) = synth_kg_pair(&params, seed).map_err(|e| Failure::Config(e.to_string()))?;
    write_dataset(&path_of(m, "out").expect("required"), &ds)?;
    print_json(&stats)
}

fn cmd_train(m: &ArgMatches) -> Result<()> {
    let ds = load_data(m)?;
    let cfg = resolve_config(m, ExperimentConfig::default())?;
    let splits = split_links(&ds.links, cfg.run.seed_fraction, cfg.run.test_fraction, cfg.seed);
    let (model, features) = pretrain_model(&cfg, &ds, &splits)?;
    Checkpoint::new(cfg, model, features).write(create(&path_of(m, "out").expect("required"))?)?;
    Ok(())
}

fn checkpoint_config(m: &ArgMatches) -> Result<(Checkpoint, ExperimentConfig)> {
    let ck = load_checkpoint(path_of(m, "checkpoint").expect("required"))?;
    let cfg = resolve_config(m, ck.config)?;
    Ok((ck, cfg))
}

fn cmd_eval(m: &ArgMatches) -> Result<()> {
    let ds = load_data(m)?;
    let (ck, cfg) = checkpoint_config(m)?;
    let splits = split_links(&ds.links, cfg.run.seed_fraction, cfg.run.test_fraction, cfg.seed);
    let split = EvalSplit {
        entity: splits.test,
        relation: ds.links.relations.clone(),
        class: ds.links.classes.clone(),
    };
    let cache = SimCache::new(&ck.model, &ck.features);
    let report = evaluate(&cache, &ds, &split, cfg.run.eval_floor, cfg.exec).map_err(|e| Failure::Other(e.into()))?;
    if let Some(p) = path_of(m, "out") {
        let mut w = create(&p)?;
        serde_json::to_writer_pretty(&mut w, &report).map_err(|e| Failure::Other(e.into()))?;
        writeln!(w)?;
    }
    if let Some(p) = path_of(m, "predictions") {
        write_predictions(create(&p)?, &predictions(&cache, &ds, &cfg))?;
    }
    print_json(&report)
}

fn cmd_select(m: &ArgMatches) -> Result<()> {
    let ds = load_data(m)?;
    let (ck, cfg) = checkpoint_config(m)?;
    let mut s = ActiveSession::from_model(cfg, ds, ck.model, ck.features)?;
    let batch = s.select_batch()?;
    match path_of(m, "out") {
        Some(p) => write_batch_tsv(create(&p)?, batch)?,
        None => write_batch_tsv(std::io::stdout().lock(), batch)?,
    }
    Ok(())
}

fn cmd_loop(m: &ArgMatches) -> Result<()> {
    let ds = load_data(m)?;
    let mut s = match path_of(m, "checkpoint") {
        Some(p) => {
            let ck = load_checkpoint(p)?;
            let cfg = resolve_config(m, ck.config)?;
            ActiveSession::from_model(cfg, ds.clone(), ck.model, ck.features)?
        }
        None => ActiveSession::new(resolve_config(m, ExperimentConfig::default())?, ds.clone())?,
    };
    s.timings = m.get_flag("timings");
    let mut oracle = Oracle::new(&ds.links);
    s.run_simulated(&mut oracle)?;
    let out = path_of(m, "out").expect("required");
    fs::create_dir_all(&out)?;
    write_jsonl(create(&out.join("rounds.jsonl"))?, s.records())?;
    write_curves_csv(create(&out.join("curves.csv"))?, s.records())?;
    write_jsonl(create(&out.join("events.jsonl"))?, s.events())?;
    s.graph().write_tsv(&ds, create(&out.join("graph.tsv"))?)?;
    let cache = SimCache::new(s.model(), s.features());
    write_predictions(create(&out.join("predictions.tsv"))?, &predictions(&cache, &ds, s.config()))?;
    Checkpoint::new(*s.config(), s.model().clone(), s.features().clone()).write(create(&out.join("final.ckpt"))?)?;
    print_json(s.records().last().expect("round 0 is always recorded"))
}

fn cmd_serve(m: &ArgMatches) -> Result<()> {
    let ds = load_data(m)?;
    let state = path_of(m, "state");
    let session = match &state {
        Some(p) if p.exists() => ActiveSession::load(BufReader::new(fs::File::open(p)?), ds)?,
        _ => {
            let (ck, cfg) = checkpoint_config(m)?;
            ActiveSession::from_model(cfg, ds, ck.model, ck.features)?
        }
    };
    let addr = m.get_one::<String>("addr").expect("has default").clone();
    let assets = path_of(m, "assets");
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(server::serve(AppState::new(session, state), &addr, assets))?;
    Ok(())
}

fn main() -> ExitCode {
    let m = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let res = match m.subcommand() {
        Some(("synth", a)) => cmd_synth(a),
        Some(("train", a)) => cmd_train(a),
        Some(("eval", a)) => cmd_eval(a),
        Some(("select", a)) => cmd_select(a),
        Some(("loop", a)) => cmd_loop(a),
        Some(("serve", a)) => cmd_serve(a),
        _ => unreachable!("subcommand required"),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
