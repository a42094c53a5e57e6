//! Model checkpoints: a version line followed by one JSON document holding
//! both embedding spaces, the mapping matrices, the derived features and the
//! configuration they were trained under.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{DerivedFeatures, JointModel};
use crate::config::ExperimentConfig;
use crate::embed::ModelKind;

pub const CHECKPOINT_HEADER: &str = "kgalign-checkpoint 1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (header `{0}`)")]
    Header(String),
    #[error("checkpoint body: {0}")]
    Body(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model_kind: ModelKind,
    pub dim_e: usize,
    pub dim_c: usize,
    pub config: ExperimentConfig,
    pub model: JointModel,
    pub features: DerivedFeatures,
}

impl Checkpoint {
    pub fn new(config: ExperimentConfig, model: JointModel, features: DerivedFeatures) -> Self {
        Checkpoint {
            model_kind: model.kind(),
            dim_e: model.dim_e(),
            dim_c: model.dim_c(),
            config,
            model,
            features,
        }
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<(), CheckpointError> {
        writeln!(out, "{CHECKPOINT_HEADER}")?;
        serde_json::to_writer(&mut out, self)?;
        writeln!(out)?;
        out.flush()?;
        Ok(())
    }

    pub fn read<R: BufRead>(mut input: R) -> Result<Self, CheckpointError> {
        let mut header = String::new();
        input.read_line(&mut header)?;
        if header.trim_end() != CHECKPOINT_HEADER {
            return Err(CheckpointError::Header(header.trim_end().to_string()));
        }
        Ok(serde_json::from_reader(input)?)
    }
}
