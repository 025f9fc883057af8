//! Experiment configuration: one JSON document drives every command.
//! Any field can be overridden from the command line with dotted keys
//! (`--set train.margin=0.3`).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use crate::anomaly::AnomalyConfig;
use crate::error::{Error, Result};
use crate::eval::{DEFAULT_EPS, DEFAULT_K};
use crate::seqdata::GeneratorConfig;
use crate::train::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub train_sequences: usize,
    pub test_sequences: usize,
    /// Template for every generated sequence; seeds and anomalies are
    /// filled in per sequence.
    pub generator: GeneratorConfig,
    /// Fraction of sequences that carry one injected anomaly.
    pub anomalous_fraction: f64,
    /// Frames per injected anomaly.
    pub anomaly_length: usize,
    /// Output channels of the frozen encoder.
    pub encoder_channels: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        // the benchmark generator adds the nuisance structure real
        // recordings have: lighting drift, contrast flicker and
        // background machinery unrelated to the cycle
        let generator = GeneratorConfig {
            drift_sigma: 0.6,
            gain_sigma: 0.25,
            distractor_amplitude: 0.8,
            ..GeneratorConfig::default()
        };
        DatasetConfig {
            train_sequences: 40,
            test_sequences: 20,
            generator,
            anomalous_fraction: 0.6,
            anomaly_length: 66,
            encoder_channels: 12,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub k: usize,
    pub eps: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: DEFAULT_K,
            eps: DEFAULT_EPS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub anomaly: AnomalyConfig,
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            anomaly: AnomalyConfig::default(),
            output_dir: PathBuf::from("cyclerep-out"),
            seeds: vec![1, 2, 3],
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be non-empty".into()));
        }
        if self.dataset.train_sequences == 0 || self.dataset.test_sequences < 2 {
            return Err(Error::Config(
                "need >= 1 train and >= 2 test sequences".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.dataset.anomalous_fraction) {
            return Err(Error::Config("anomalous_fraction must be in [0, 1]".into()));
        }
        let g = &self.dataset.generator;
        if self.dataset.anomaly_length + 2 * g.period as usize >= g.num_frames {
            return Err(Error::Config(format!(
                "anomaly_length {} does not fit in {} frames with a {}-frame border",
                self.dataset.anomaly_length, g.num_frames, g.period
            )));
        }
        g.validate()?;
        self.train.validate()?;
        self.anomaly.validate()?;
        if self.eval.k == 0 {
            return Err(Error::Config("eval.k must be >= 1".into()));
        }
        Ok(())
    }

    /// Load from JSON, then apply dotted-key overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value = match path {
            Some(p) => {
                if !p.exists() {
                    return Err(Error::Config(format!("config file {} not found", p.display())));
                }
                serde_json::from_str(&std::fs::read_to_string(p)?)?
            }
            None => serde_json::to_value(ExperimentConfig::default())?,
        };
        for ov in overrides {
            apply_json_override(&mut value, ov)?;
        }
        let cfg: ExperimentConfig = serde_json::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        hex_string(&hasher.finalize())
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.output_dir.join(format!("seed_{seed}"))
    }
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Apply one `path.to.key=value` override onto a JSON tree. The value is
/// parsed as JSON when possible, else taken as a string.
pub fn apply_json_override(root: &mut serde_json::Value, spec: &str) -> Result<()> {
    let (path, raw) = spec.split_once('=').ok_or_else(|| {
        Error::Config(format!("override {spec:?} is not of the form key.path=value"))
    })?;
    let parsed: serde_json::Value = match serde_json::from_str(raw) {
        Ok(v) => v,
        Err(_) => serde_json::Value::String(raw.to_string()),
    };
    let mut node = root;
    let segments: Vec<&str> = path.split('.').collect();
    for (i, seg) in segments.iter().enumerate() {
        if seg.is_empty() {
            return Err(Error::Config(format!("override {spec:?} has an empty key")));
        }
        let obj = node.as_object_mut().ok_or_else(|| {
            Error::Config(format!("override path {path:?}: {seg:?} is not an object"))
        })?;
        if i + 1 == segments.len() {
            obj.insert((*seg).to_string(), parsed);
            return Ok(());
        }
        node = obj
            .entry((*seg).to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    unreachable!("segments is non-empty")
}
