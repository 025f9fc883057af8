//! Checkpoint file: head config, parameters, batch-norm running stats,
//! optimizer state and the global seed, in one versioned JSON document.

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

use super::adam::AdamState;
use super::{HeadConfig, HeadParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: HeadConfig,
    pub params: HeadParams,
    pub adam: Option<AdamState>,
    pub seed: u64,
}

impl Checkpoint {
    pub fn new(config: HeadConfig, params: HeadParams, adam: Option<AdamState>, seed: u64) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config,
            params,
            adam,
            seed,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact {
                path: path.to_path_buf(),
                hint: "train".into(),
            });
        }
        let ckpt: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        if !ckpt.params.matches(&ckpt.config) {
            return Err(Error::Config(
                "checkpoint parameters do not match its config".into(),
            ));
        }
        Ok(ckpt)
    }
}
