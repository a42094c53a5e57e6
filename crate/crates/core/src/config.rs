//! Experiment configuration as flat `key = value` text.
//!
//! Blank lines and lines starting with `#` are ignored. Every key has a
//! default, so a file only needs the keys it changes.

use std::fmt::Display;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{AlignConfig, JointOptions, PretrainOptions};
use crate::embed::{EmbedConfig, ModelKind, TrainOptions};
use crate::infer::{BoundMode, InferConfig, PathMap};
use crate::par::Exec;
use crate::select::{GreedyMode, SelectConfig};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    Random,
    Degree,
    Pagerank,
    Uncertainty,
    DaakgGreedy,
    DaakgPartition,
}

impl Selector {
    pub const ALL: [Selector; 6] = [
        Selector::Random,
        Selector::Degree,
        Selector::Pagerank,
        Selector::Uncertainty,
        Selector::DaakgGreedy,
        Selector::DaakgPartition,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Selector::Random => "random",
            Selector::Degree => "degree",
            Selector::Pagerank => "pagerank",
            Selector::Uncertainty => "uncertainty",
            Selector::DaakgGreedy => "daakg_greedy",
            Selector::DaakgPartition => "daakg_partition",
        }
    }
}

impl FromStr for Selector {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Selector::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| format!("unknown selector `{s}`"))
    }
}

impl Display for Selector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub selector: Selector,
    /// Total oracle queries over the whole loop.
    pub labels: usize,
    /// Share of gold entity matches given as seed labels.
    pub seed_fraction: f64,
    /// Share of gold entity matches held out for evaluation.
    pub test_fraction: f64,
    pub finetune_epochs: usize,
    pub semi: bool,
    /// Train on pairs the labeled matches infer above kappa, weighted by
    /// their inference power.
    pub infer_labels: bool,
    pub greedy: GreedyMode,
    /// Similarity floor of the greedy matching behind precision and recall.
    pub eval_floor: f64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            selector: Selector::DaakgGreedy,
            labels: 500,
            seed_fraction: 0.1,
            test_fraction: 0.3,
            finetune_epochs: 20,
            semi: true,
            infer_labels: true,
            greedy: GreedyMode::Lazy,
            eval_floor: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub embed: EmbedConfig,
    pub embed_train: TrainOptions,
    pub align: AlignConfig,
    pub joint: JointOptions,
    pub pretrain_phases: usize,
    pub infer: InferConfig,
    pub select: SelectConfig,
    pub run: LoopConfig,
    pub exec: Exec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            embed: EmbedConfig::default(),
            embed_train: TrainOptions::default(),
            align: AlignConfig::default(),
            joint: JointOptions::default(),
            pretrain_phases: 2,
            infer: InferConfig::default(),
            select: SelectConfig::default(),
            run: LoopConfig::default(),
            exec: Exec::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: Display,
{
    value.parse::<T>().map_err(|e| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn parse_opt(key: &str, value: &str) -> Result<Option<f64>, ConfigError> {
    if value == "none" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn opt_str(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

fn enum_value<T: Copy>(key: &str, value: &str, table: &[(&str, T)]) -> Result<T, ConfigError> {
    table
        .iter()
        .find(|(n, _)| *n == value)
        .map(|x| x.1)
        .ok_or_else(|| ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: format!("expected one of {}", table.iter().map(|x| x.0).collect::<Vec<_>>().join(", ")),
        })
}

const EXEC: [(&str, Exec); 2] = [("parallel", Exec::Parallel), ("sequential", Exec::Sequential)];
const BOUNDS: [(&str, BoundMode); 2] = [("closed", BoundMode::Closed), ("generic", BoundMode::Generic)];
const PATH_MAP: [(&str, PathMap); 2] = [("relation", PathMap::Relation), ("entity", PathMap::Entity)];
const GREEDY: [(&str, GreedyMode); 2] = [("lazy", GreedyMode::Lazy), ("plain", GreedyMode::Plain)];

fn name_of<T: PartialEq + Copy>(table: &[(&'static str, T)], v: T) -> &'static str {
    table.iter().find(|x| x.1 == v).map(|x| x.0).unwrap_or("?")
}

impl ExperimentConfig {
    /// Every key with its current value, in file order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let kind = match self.embed.kind {
            ModelKind::TransE => "transe",
            ModelKind::RotatE => "rotate",
        };
        vec![
            ("seed", self.seed.to_string()),
            ("exec", name_of(&EXEC, self.exec).to_string()),
            ("embed.model", kind.to_string()),
            ("embed.dim_e", self.embed.dim_e.to_string()),
            ("embed.dim_c", self.embed.dim_c.to_string()),
            ("embed.margin_er", self.embed.margin_er.to_string()),
            ("embed.margin_ec", self.embed.margin_ec.to_string()),
            ("embed.epochs", self.embed_train.epochs.to_string()),
            ("embed.batch_size", self.embed_train.batch_size.to_string()),
            ("embed.lr", self.embed_train.lr.to_string()),
            ("embed.negatives", self.embed_train.negatives.to_string()),
            ("embed.clip", opt_str(self.embed_train.clip)),
            ("embed.mean_reduction", self.embed_train.mean_reduction.to_string()),
            ("embed.max_entity_norm", opt_str(self.embed_train.max_entity_norm)),
            ("align.z_ent", self.align.z_ent.to_string()),
            ("align.z_rel", self.align.z_rel.to_string()),
            ("align.z_cls", self.align.z_cls.to_string()),
            ("align.tau", self.align.tau.to_string()),
            ("align.gamma", self.align.gamma.to_string()),
            ("align.init_noise", self.align.init_noise.to_string()),
            ("joint.epochs", self.joint.epochs.to_string()),
            ("joint.batch_size", self.joint.batch_size.to_string()),
            ("joint.lr", self.joint.lr.to_string()),
            ("joint.negatives", self.joint.negatives.to_string()),
            ("joint.align_negatives", self.joint.align_negatives.to_string()),
            ("joint.clip", opt_str(self.joint.clip)),
            ("joint.mean_reduction", self.joint.mean_reduction.to_string()),
            ("joint.max_entity_norm", opt_str(self.joint.max_entity_norm)),
            ("joint.structure_weight", self.joint.structure_weight.to_string()),
            ("joint.semi_weight", self.joint.semi_weight.to_string()),
            ("joint.phases", self.pretrain_phases.to_string()),
            ("infer.mu", self.infer.mu.to_string()),
            ("infer.beam", self.infer.beam.map_or_else(|| "none".to_string(), |b| b.to_string())),
            ("infer.kappa", self.infer.kappa.to_string()),
            ("infer.samples", self.infer.samples.to_string()),
            ("infer.bounds", name_of(&BOUNDS, self.infer.bounds).to_string()),
            ("infer.path_map", name_of(&PATH_MAP, self.infer.path_map).to_string()),
            ("select.budget", self.select.budget.to_string()),
            ("select.rho", self.select.rho.to_string()),
            ("select.neighbors", self.select.neighbors.to_string()),
            ("loop.selector", self.run.selector.to_string()),
            ("loop.labels", self.run.labels.to_string()),
            ("loop.seed_fraction", self.run.seed_fraction.to_string()),
            ("loop.test_fraction", self.run.test_fraction.to_string()),
            ("loop.finetune_epochs", self.run.finetune_epochs.to_string()),
            ("loop.semi", self.run.semi.to_string()),
            ("loop.infer_labels", self.run.infer_labels.to_string()),
            ("loop.greedy", name_of(&GREEDY, self.run.greedy).to_string()),
            ("loop.eval_floor", self.run.eval_floor.to_string()),
        ]
    }

    pub fn keys() -> Vec<&'static str> {
        ExperimentConfig::default().entries().into_iter().map(|x| x.0).collect()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse(key, v)?,
            "exec" => self.exec = enum_value(key, v, &EXEC)?,
            "embed.model" => self.embed.kind = parse(key, v)?,
            "embed.dim_e" => self.embed.dim_e = parse(key, v)?,
            "embed.dim_c" => self.embed.dim_c = parse(key, v)?,
            "embed.margin_er" => self.embed.margin_er = parse(key, v)?,
            "embed.margin_ec" => self.embed.margin_ec = parse(key, v)?,
            "embed.epochs" => self.embed_train.epochs = parse(key, v)?,
            "embed.batch_size" => self.embed_train.batch_size = parse(key, v)?,
            "embed.lr" => self.embed_train.lr = parse(key, v)?,
            "embed.negatives" => self.embed_train.negatives = parse(key, v)?,
            "embed.clip" => self.embed_train.clip = parse_opt(key, v)?,
            "embed.mean_reduction" => self.embed_train.mean_reduction = parse(key, v)?,
            "embed.max_entity_norm" => self.embed_train.max_entity_norm = parse_opt(key, v)?,
            "align.z_ent" => self.align.z_ent = parse(key, v)?,
            "align.z_rel" => self.align.z_rel = parse(key, v)?,
            "align.z_cls" => self.align.z_cls = parse(key, v)?,
            "align.tau" => self.align.tau = parse(key, v)?,
            "align.gamma" => self.align.gamma = parse(key, v)?,
            "align.init_noise" => self.align.init_noise = parse(key, v)?,
            "joint.epochs" => self.joint.epochs = parse(key, v)?,
            "joint.batch_size" => self.joint.batch_size = parse(key, v)?,
            "joint.lr" => self.joint.lr = parse(key, v)?,
            "joint.negatives" => self.joint.negatives = parse(key, v)?,
            "joint.align_negatives" => self.joint.align_negatives = parse(key, v)?,
            "joint.clip" => self.joint.clip = parse_opt(key, v)?,
            "joint.mean_reduction" => self.joint.mean_reduction = parse(key, v)?,
            "joint.max_entity_norm" => self.joint.max_entity_norm = parse_opt(key, v)?,
            "joint.structure_weight" => self.joint.structure_weight = parse(key, v)?,
            "joint.semi_weight" => self.joint.semi_weight = parse(key, v)?,
            "joint.phases" => self.pretrain_phases = parse(key, v)?,
            "infer.mu" => self.infer.mu = parse(key, v)?,
            "infer.beam" => self.infer.beam = if v == "none" { None } else { Some(parse(key, v)?) },
            "infer.kappa" => self.infer.kappa = parse(key, v)?,
            "infer.samples" => self.infer.samples = parse(key, v)?,
            "infer.bounds" => self.infer.bounds = enum_value(key, v, &BOUNDS)?,
            "infer.path_map" => self.infer.path_map = enum_value(key, v, &PATH_MAP)?,
            "select.budget" => self.select.budget = parse(key, v)?,
            "select.rho" => self.select.rho = parse(key, v)?,
            "select.neighbors" => self.select.neighbors = parse(key, v)?,
            "loop.selector" => self.run.selector = parse(key, v)?,
            "loop.labels" => self.run.labels = parse(key, v)?,
            "loop.seed_fraction" => self.run.seed_fraction = parse(key, v)?,
            "loop.test_fraction" => self.run.test_fraction = parse(key, v)?,
            "loop.finetune_epochs" => self.run.finetune_epochs = parse(key, v)?,
            "loop.semi" => self.run.semi = parse(key, v)?,
            "loop.infer_labels" => self.run.infer_labels = parse(key, v)?,
            "loop.greedy" => self.run.greedy = enum_value(key, v, &GREEDY)?,
            "loop.eval_floor" => self.run.eval_floor = parse(key, v)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Applies the `key = value` lines of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut c = ExperimentConfig::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn pretrain_options(&self) -> PretrainOptions {
        PretrainOptions {
            embed: TrainOptions { exec: self.exec, ..self.embed_train },
            joint: JointOptions { exec: self.exec, ..self.joint },
            semi: false,
            phases: self.pretrain_phases,
        }
    }

    pub fn finetune_options(&self) -> JointOptions {
        JointOptions {
            epochs: self.run.finetune_epochs,
            exec: self.exec,
            ..self.joint
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = ConfigError::Invalid;
        self.embed.validate().map_err(inv)?;
        self.align.validate().map_err(inv)?;
        self.infer.validate().map_err(inv)?;
        self.select.validate().map_err(inv)?;
        let r = &self.run;
        let frac = |x: f64| (0.0..=1.0).contains(&x);
        if !frac(r.seed_fraction) || !frac(r.test_fraction) || r.seed_fraction + r.test_fraction > 1.0 {
            return Err(inv(format!(
                "seed and test fractions must lie in [0, 1] and sum to at most 1, got {} and {}",
                r.seed_fraction, r.test_fraction
            )));
        }
        for (name, lr) in [("embed.lr", self.embed_train.lr), ("joint.lr", self.joint.lr)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(inv(format!("{name} must be positive, got {lr}")));
            }
        }
        if self.embed_train.batch_size == 0 || self.joint.batch_size == 0 {
            return Err(inv("batch sizes must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut c = ExperimentConfig::default();
        c.seed = 7;
        c.infer.beam = None;
        c.run.selector = Selector::Uncertainty;
        c.embed_train.clip = Some(5.0);
        let back = ExperimentConfig::from_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn errors() {
        assert_eq!(
            ExperimentConfig::from_text("nope = 1"),
            Err(ConfigError::UnknownKey("nope".into()))
        );
        assert_eq!(ExperimentConfig::from_text("seed"), Err(ConfigError::Syntax { line: 1 }));
        assert!(matches!(
            ExperimentConfig::from_text("select.rho = 1.5"),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            ExperimentConfig::from_text("loop.selector = best"),
            Err(ConfigError::BadValue { .. })
        ));
    }
}
