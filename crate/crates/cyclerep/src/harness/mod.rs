//! Experiment runner: dataset generation, training, embedding,
//! evaluation, anomaly detection, ablation grids and diagnostic dumps,
//! all driven by one [`ExperimentConfig`] and written as JSON/CSV under
//! the configured output directory.
//!
//! Every command is deterministic per (config, seed): run seeds fan out
//! into independent stream seeds for data, encoder, head init and clip
//! sampling, and no output carries a timestamp.

pub mod config;

pub use config::{DatasetConfig, EvalConfig, ExperimentConfig};

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::anomaly::{run_anomaly_pipeline, AnomalyConfig, AnomalyOutcome};
use crate::error::{Error, Result};
use crate::eval::{evaluate_knn, labeled_embeddings, MetricsReport};
use crate::head::checkpoint::Checkpoint;
use crate::head::{l2_normalize, EmbeddingSequence, HeadParams, Pooling};
use crate::mining::{AugmentMode, Strategy};
use crate::rng::derive_seed;
use crate::seqdata::{
    encode, generate_sequence, io as dataset_io, AnomalyKind, AnomalySpec, EncoderParams,
    FeatureSequence, FrameLabel, FrameSequence,
};
use crate::train::{train_with_state, TrainReport};
use crate::tsm::{autocorrelation, compute_tsm, pca_project_1d};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Stream tags for deriving independent seeds from one run seed.
mod streams {
    pub const DATASET: u64 = 11;
    pub const ENCODER: u64 = 22;
    pub const TRAIN: u64 = 33;
    pub const RANDOM_BASELINE: u64 = 44;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn tag(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Test => 2,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Where one run seed keeps its artifacts.
pub struct SeedPaths {
    pub root: PathBuf,
    pub data_train: PathBuf,
    pub data_test: PathBuf,
    pub checkpoint: PathBuf,
    pub train_log: PathBuf,
    pub embeddings: PathBuf,
    pub eval_dir: PathBuf,
    pub anomaly_dir: PathBuf,
    pub diag_dir: PathBuf,
}

impl SeedPaths {
    pub fn new(cfg: &ExperimentConfig, seed: u64) -> Self {
        let root = cfg.seed_dir(seed);
        SeedPaths {
            data_train: root.join("data").join("train"),
            data_test: root.join("data").join("test"),
            checkpoint: root.join("checkpoint.json"),
            train_log: root.join("train_log.csv"),
            embeddings: root.join("embeddings"),
            eval_dir: root.join("eval"),
            anomaly_dir: root.join("anomaly"),
            diag_dir: root.join("diag"),
            root,
        }
    }
}

/// Build one split of the synthetic benchmark for a run seed.
///
/// Sequences are seeded independently; a fixed fraction carries one
/// anomaly with the kind cycling through freeze, amplitude drop and
/// period change. Fully periodic sequences double as the normal
/// reference pool for anomaly scoring.
pub fn build_split(ds: &DatasetConfig, run_seed: u64, split: Split) -> Result<Vec<FrameSequence>> {
    let count = match split {
        Split::Train => ds.train_sequences,
        Split::Test => ds.test_sequences,
    };
    let dataset_stream = derive_seed(run_seed, streams::DATASET);
    // one process for the whole benchmark: every video records the same
    // cyclic signal from a different phase, with its own noise
    let process_seed = derive_seed(dataset_stream, 999);
    let base = derive_seed(dataset_stream, split.tag());
    let kinds = [
        AnomalyKind::Freeze,
        AnomalyKind::AmplitudeDrop,
        AnomalyKind::PeriodChange,
    ];
    let per_ten = (ds.anomalous_fraction * 10.0).round() as usize;
    let mut sequences = Vec::with_capacity(count);
    let mut anomalous_rank = 0usize;
    for idx in 0..count {
        let seq_seed = derive_seed(base, idx as u64);
        let mut gen = ds.generator.clone();
        gen.seed = seq_seed;
        gen.process_seed = Some(gen.process_seed.unwrap_or(process_seed));
        gen.anomalies.clear();
        let mut place = StdRng::seed_from_u64(derive_seed(seq_seed, 7));
        gen.initial_phase = place.gen_range(0.0..1.0);
        if idx % 10 < per_ten {
            let kind = kinds[anomalous_rank % kinds.len()];
            anomalous_rank += 1;
            let p = gen.period as usize;
            let start = place.gen_range(p..gen.num_frames - ds.anomaly_length - p);
            let magnitude = match kind {
                AnomalyKind::Freeze => 0.0,
                AnomalyKind::AmplitudeDrop => 0.25,
                AnomalyKind::PeriodChange => (gen.period as f64 * 1.65).round(),
                AnomalyKind::PhaseJump => std::f64::consts::PI,
            };
            gen.anomalies.push(AnomalySpec {
                kind,
                start,
                length: ds.anomaly_length,
                magnitude,
            });
        }
        let mut seq = generate_sequence(&gen)?;
        seq.video_id = format!("{}-{idx:03}", split.name());
        sequences.push(seq);
    }
    Ok(sequences)
}

pub fn encoder_for(cfg: &ExperimentConfig, run_seed: u64) -> EncoderParams {
    EncoderParams::from_seed(
        derive_seed(run_seed, streams::ENCODER),
        cfg.dataset.generator.raw_channels,
        cfg.dataset.encoder_channels,
    )
}

/// In-memory benchmark for one run seed: encoded train/test features.
pub struct Bench {
    pub train_features: Vec<FeatureSequence>,
    pub test_features: Vec<FeatureSequence>,
    pub encoder: EncoderParams,
}

pub fn prepare_bench(cfg: &ExperimentConfig, run_seed: u64) -> Result<Bench> {
    let encoder = encoder_for(cfg, run_seed);
    let train_seqs = build_split(&cfg.dataset, run_seed, Split::Train)?;
    let test_seqs = build_split(&cfg.dataset, run_seed, Split::Test)?;
    let train_features = train_seqs
        .iter()
        .map(|s| encode(s, &encoder))
        .collect::<Result<_>>()?;
    let test_features = test_seqs
        .iter()
        .map(|s| encode(s, &encoder))
        .collect::<Result<_>>()?;
    Ok(Bench {
        train_features,
        test_features,
        encoder,
    })
}

/// Train on the bench's train split (seeds derived from `run_seed`) and
/// return the trained parameters with the training report.
pub fn train_on_bench(
    cfg: &ExperimentConfig,
    bench: &Bench,
    run_seed: u64,
) -> Result<(HeadParams, crate::head::adam::AdamState, TrainReport)> {
    let mut tc = cfg.train.clone();
    tc.seed = derive_seed(run_seed, streams::TRAIN);
    tc.head.in_channels = cfg.dataset.encoder_channels;
    train_with_state(&bench.train_features, &tc)
}

/// Embed the bench's test split with the given parameters.
pub fn embed_test(
    cfg: &ExperimentConfig,
    bench: &Bench,
    params: &HeadParams,
) -> Result<Vec<EmbeddingSequence>> {
    let mut head = cfg.train.head.clone();
    head.in_channels = cfg.dataset.encoder_channels;
    crate::train::embed_dataset(&bench.test_features, params, &head)
}

pub fn test_labels(bench: &Bench) -> Vec<Vec<FrameLabel>> {
    bench
        .test_features
        .iter()
        .map(|s| s.frame_labels.clone())
        .collect()
}

/// Evaluate embeddings of the test split with the leave-one-video-out
/// weighted k-NN.
pub fn eval_embeddings(
    cfg: &ExperimentConfig,
    embeddings: &[EmbeddingSequence],
    labels: &[Vec<FrameLabel>],
) -> Result<MetricsReport> {
    let frames = labeled_embeddings(embeddings, labels)?;
    evaluate_knn(&frames, cfg.eval.k, cfg.eval.eps)
}

/// Frozen-encoder baseline embeddings: per-frame region-major features,
/// flattened and L2-normalized.
pub fn frozen_baseline_embeddings(features: &[FeatureSequence]) -> Vec<EmbeddingSequence> {
    features
        .iter()
        .map(|seq| {
            let mut embeddings = Vec::with_capacity(seq.len());
            let mut degenerate = Vec::with_capacity(seq.len());
            for frame in &seq.features {
                let (unit, degen) = l2_normalize(frame.as_slice());
                embeddings.push(unit);
                degenerate.push(degen);
            }
            EmbeddingSequence {
                video_id: seq.video_id.clone(),
                embeddings,
                clip_offset: 0,
                degenerate,
            }
        })
        .collect()
}

/// Random unit-vector baseline embeddings.
pub fn random_baseline_embeddings(
    features: &[FeatureSequence],
    dim: usize,
    seed: u64,
) -> Vec<EmbeddingSequence> {
    let mut rng = StdRng::seed_from_u64(seed);
    features
        .iter()
        .map(|seq| {
            let mut embeddings = Vec::with_capacity(seq.len());
            for _ in 0..seq.len() {
                let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                embeddings.push(l2_normalize(&v).0);
            }
            EmbeddingSequence {
                video_id: seq.video_id.clone(),
                embeddings,
                clip_offset: 0,
                degenerate: vec![false; seq.len()],
            }
        })
        .collect()
}

/// Split test embeddings into anomaly queries (videos containing any
/// non-periodic frame) and the normal reference pool.
pub fn split_queries_reference(
    embeddings: &[EmbeddingSequence],
    labels: &[Vec<FrameLabel>],
) -> (Vec<EmbeddingSequence>, Vec<EmbeddingSequence>, Vec<Vec<FrameLabel>>) {
    let mut queries = Vec::new();
    let mut reference = Vec::new();
    let mut query_labels = Vec::new();
    for (emb, labs) in embeddings.iter().zip(labels) {
        if labs.iter().any(|l| *l == FrameLabel::NonPeriodic) {
            queries.push(emb.clone());
            query_labels.push(labs.clone());
        } else {
            reference.push(emb.clone());
        }
    }
    (queries, reference, query_labels)
}

/// Anomaly pipeline over the test split embeddings.
pub fn anomaly_on_embeddings(
    embeddings: &[EmbeddingSequence],
    labels: &[Vec<FrameLabel>],
    cfg: &AnomalyConfig,
) -> Result<AnomalyOutcome> {
    let (queries, reference, query_labels) = split_queries_reference(embeddings, labels);
    run_anomaly_pipeline(&queries, &reference, &query_labels, cfg)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RunManifest {
    command: String,
    config_hash: String,
    seed: u64,
    version: String,
}

fn write_manifest(dir: &Path, command: &str, cfg: &ExperimentConfig, seed: u64) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = RunManifest {
        command: command.to_string(),
        config_hash: cfg.hash(),
        seed,
        version: VERSION.to_string(),
    };
    fs::write(
        dir.join("run_manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

fn write_metrics(path: &Path, report: &MetricsReport) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_string_pretty(report)?)?;
    Ok(())
}

/// `gen`: write the train/test datasets for every seed.
pub fn cmd_gen(cfg: &ExperimentConfig) -> Result<()> {
    for &seed in &cfg.seeds {
        let paths = SeedPaths::new(cfg, seed);
        let train = build_split(&cfg.dataset, seed, Split::Train)?;
        let test = build_split(&cfg.dataset, seed, Split::Test)?;
        dataset_io::save_dataset(&train, &paths.data_train)?;
        dataset_io::save_dataset(&test, &paths.data_test)?;
        write_manifest(&paths.root, "gen", cfg, seed)?;
        log::info!(
            "seed {seed}: wrote {} train / {} test sequences",
            train.len(),
            test.len()
        );
    }
    Ok(())
}

fn load_features(
    cfg: &ExperimentConfig,
    run_seed: u64,
    dir: &Path,
) -> Result<Vec<FeatureSequence>> {
    let sequences = dataset_io::load_dataset(dir)?;
    if sequences.is_empty() {
        return Err(Error::MissingArtifact {
            path: dir.to_path_buf(),
            hint: "gen".into(),
        });
    }
    let encoder = encoder_for(cfg, run_seed);
    sequences.iter().map(|s| encode(s, &encoder)).collect()
}

/// `train`: train one head per seed from the on-disk dataset.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<()> {
    for &seed in &cfg.seeds {
        let paths = SeedPaths::new(cfg, seed);
        let features = load_features(cfg, seed, &paths.data_train)?;
        let mut tc = cfg.train.clone();
        tc.seed = derive_seed(seed, streams::TRAIN);
        tc.head.in_channels = cfg.dataset.encoder_channels;
        let (params, adam, mut report) = train_with_state(&features, &tc)?;
        let ckpt = Checkpoint::new(tc.head.clone(), params, Some(adam), tc.seed);
        ckpt.save(&paths.checkpoint)?;
        report.checkpoint = Some(paths.checkpoint.clone());
        fs::write(&paths.train_log, report.to_csv())?;
        write_manifest(&paths.root, "train", cfg, seed)?;
        log::info!(
            "seed {seed}: {:?} after {} epochs ({} iterations, {} skipped)",
            report.stop_reason,
            report.epochs_run,
            report.records.len(),
            report.skipped_iterations
        );
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct EmbeddingsManifestEntry {
    video_id: String,
    file: String,
    frames: usize,
    dim: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct EmbeddingsManifest {
    version: u32,
    sequences: Vec<EmbeddingsManifestEntry>,
}

pub fn save_embeddings(embeddings: &[EmbeddingSequence], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(embeddings.len());
    for emb in embeddings {
        let file = format!("{}.emb.csv", emb.video_id);
        let mut out = String::new();
        for row in &emb.embeddings {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        fs::write(dir.join(&file), out)?;
        entries.push(EmbeddingsManifestEntry {
            video_id: emb.video_id.clone(),
            file,
            frames: emb.len(),
            dim: emb.dim(),
        });
    }
    let manifest = EmbeddingsManifest {
        version: 1,
        sequences: entries,
    };
    fs::write(
        dir.join("embeddings.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

pub fn load_embeddings(dir: &Path) -> Result<Vec<EmbeddingSequence>> {
    let manifest_path = dir.join("embeddings.json");
    if !manifest_path.exists() {
        return Err(Error::MissingArtifact {
            path: manifest_path,
            hint: "embed".into(),
        });
    }
    let manifest: EmbeddingsManifest =
        serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
    let mut out = Vec::with_capacity(manifest.sequences.len());
    for entry in &manifest.sequences {
        let path = dir.join(&entry.file);
        if !path.exists() {
            return Err(Error::MissingArtifact {
                path,
                hint: "embed".into(),
            });
        }
        let text = fs::read_to_string(&path)?;
        let mut embeddings = Vec::with_capacity(entry.frames);
        for (i, line) in text.lines().enumerate() {
            let row: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|f| f.trim().parse::<f64>()).collect();
            let row = row.map_err(|_| Error::Parse {
                file: path.clone(),
                line: i + 1,
                msg: "not a number".into(),
            })?;
            if row.len() != entry.dim {
                return Err(Error::Parse {
                    file: path.clone(),
                    line: i + 1,
                    msg: format!("expected {} columns, got {}", entry.dim, row.len()),
                });
            }
            embeddings.push(row);
        }
        if embeddings.len() != entry.frames {
            return Err(Error::Parse {
                file: path.clone(),
                line: embeddings.len() + 1,
                msg: format!("expected {} rows, got {}", entry.frames, embeddings.len()),
            });
        }
        let n = embeddings.len();
        out.push(EmbeddingSequence {
            video_id: entry.video_id.clone(),
            embeddings,
            clip_offset: 0,
            degenerate: vec![false; n],
        });
    }
    Ok(out)
}

/// `embed`: run the trained head over the test split and persist the
/// per-frame embeddings.
pub fn cmd_embed(cfg: &ExperimentConfig) -> Result<()> {
    for &seed in &cfg.seeds {
        let paths = SeedPaths::new(cfg, seed);
        let features = load_features(cfg, seed, &paths.data_test)?;
        let ckpt = Checkpoint::load(&paths.checkpoint)?;
        let embeddings = crate::train::embed_dataset(&features, &ckpt.params, &ckpt.config)?;
        save_embeddings(&embeddings, &paths.embeddings)?;
        write_manifest(&paths.root, "embed", cfg, seed)?;
        log::info!("seed {seed}: embedded {} sequences", embeddings.len());
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmbeddingSource {
    Trained,
    Frozen,
    Random,
}

impl EmbeddingSource {
    pub fn metrics_file(self) -> &'static str {
        match self {
            EmbeddingSource::Trained => "metrics.json",
            EmbeddingSource::Frozen => "metrics_frozen.json",
            EmbeddingSource::Random => "metrics_random.json",
        }
    }
}

/// `eval`: weighted k-NN metrics over the chosen embedding source.
pub fn cmd_eval(cfg: &ExperimentConfig, source: EmbeddingSource) -> Result<()> {
    for &seed in &cfg.seeds {
        let paths = SeedPaths::new(cfg, seed);
        let features = load_features(cfg, seed, &paths.data_test)?;
        let labels: Vec<Vec<FrameLabel>> =
            features.iter().map(|s| s.frame_labels.clone()).collect();
        let embeddings = match source {
            EmbeddingSource::Trained => load_embeddings(&paths.embeddings)?,
            EmbeddingSource::Frozen => frozen_baseline_embeddings(&features),
            EmbeddingSource::Random => random_baseline_embeddings(
                &features,
                cfg.train.head.out_dim,
                derive_seed(seed, streams::RANDOM_BASELINE),
            ),
        };
        let report = eval_embeddings(cfg, &embeddings, &labels)?;
        write_metrics(&paths.eval_dir.join(source.metrics_file()), &report)?;
        fs::write(
            paths.eval_dir.join(format!(
                "pr_curve_{}.csv",
                source.metrics_file().trim_end_matches(".json")
            )),
            report.pr_curve.to_csv(),
        )?;
        write_manifest(&paths.eval_dir, "eval", cfg, seed)?;
        log::info!(
            "seed {seed} ({source:?}): AP {:.4} F1 {:.4} oracle {:.4}",
            report.ap,
            report.f1,
            report.oracle_f1
        );
    }
    Ok(())
}

/// `anomaly`: unsupervised scoring of the anomalous test videos.
pub fn cmd_anomaly(cfg: &ExperimentConfig) -> Result<()> {
    for &seed in &cfg.seeds {
        let paths = SeedPaths::new(cfg, seed);
        let features = load_features(cfg, seed, &paths.data_test)?;
        let labels: Vec<Vec<FrameLabel>> =
            features.iter().map(|s| s.frame_labels.clone()).collect();
        let embeddings = load_embeddings(&paths.embeddings)?;
        let outcome = anomaly_on_embeddings(&embeddings, &labels, &cfg.anomaly)?;
        write_metrics(&paths.anomaly_dir.join("metrics.json"), &outcome.report)?;
        fs::write(
            paths.anomaly_dir.join("scores.csv"),
            outcome.report.scores_csv(),
        )?;
        write_manifest(&paths.anomaly_dir, "anomaly", cfg, seed)?;
        log::info!(
            "seed {seed}: anomaly AP {:.4} oracle F1 {:.4}{}",
            outcome.report.ap,
            outcome.report.oracle_f1,
            if outcome.reference_fallback {
                " (leave-one-video-out fallback)"
            } else {
                ""
            }
        );
    }
    Ok(())
}

/// `diag`: TSM, autocorrelation, PCA and NN-distance traces for one
/// normal and one anomalous test video.
pub fn cmd_diag(cfg: &ExperimentConfig) -> Result<()> {
    for &seed in &cfg.seeds {
        let paths = SeedPaths::new(cfg, seed);
        let features = load_features(cfg, seed, &paths.data_test)?;
        let ckpt = Checkpoint::load(&paths.checkpoint)?;
        let embeddings = crate::train::embed_dataset(&features, &ckpt.params, &ckpt.config)?;
        fs::create_dir_all(&paths.diag_dir)?;

        let normal_idx = features.iter().position(FeatureSequence::is_fully_periodic);
        let anomalous_idx = features
            .iter()
            .position(|s| !s.is_fully_periodic());

        let max_lag = (cfg.dataset.generator.period as usize * 3).min(
            features.first().map_or(1, FeatureSequence::len) - 1,
        );
        let mut chosen: Vec<usize> = Vec::new();
        chosen.extend(normal_idx);
        chosen.extend(anomalous_idx);
        for idx in chosen {
            let emb = &embeddings[idx];
            let id = &emb.video_id;

            let tsm = compute_tsm(emb)?;
            let mut tsm_csv = String::new();
            for i in 0..tsm.len() {
                let row: Vec<String> = tsm.row(i).iter().map(|v| format!("{v}")).collect();
                tsm_csv.push_str(&row.join(","));
                tsm_csv.push('\n');
            }
            fs::write(paths.diag_dir.join(format!("tsm_{id}.csv")), tsm_csv)?;

            let r = autocorrelation(emb, max_lag)?;
            let mut ac_csv = String::from("lag,r\n");
            for (lag, v) in r.iter().enumerate() {
                ac_csv.push_str(&format!("{lag},{v}\n"));
            }
            fs::write(paths.diag_dir.join(format!("autocorr_{id}.csv")), ac_csv)?;

            let (proj, _) = pca_project_1d(&emb.embeddings)?;
            let mut pca_csv = String::from("frame,value\n");
            for (i, v) in proj.iter().enumerate() {
                pca_csv.push_str(&format!("{i},{v}\n"));
            }
            fs::write(paths.diag_dir.join(format!("pca_{id}.csv")), pca_csv)?;
        }

        // NN-distance trace of the anomalous video against the normal one
        if let (Some(ni), Some(ai)) = (normal_idx, anomalous_idx) {
            let scores = crate::anomaly::nn_distance_score(
                &embeddings[ai].embeddings,
                &embeddings[ni].embeddings,
                1,
            )?;
            let mut csv = String::from("frame,score,label\n");
            for (i, s) in scores.iter().enumerate() {
                let label = match features[ai].frame_labels[i] {
                    FrameLabel::NonPeriodic => 1,
                    FrameLabel::Periodic => 0,
                };
                csv.push_str(&format!("{i},{s},{label}\n"));
            }
            fs::write(
                paths
                    .diag_dir
                    .join(format!("nn_distance_{}.csv", embeddings[ai].video_id)),
                csv,
            )?;
        }
        write_manifest(&paths.diag_dir, "diag", cfg, seed)?;
    }
    Ok(())
}

/// `run`: the full chain per seed.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<()> {
    cmd_gen(cfg)?;
    cmd_train(cfg)?;
    cmd_embed(cfg)?;
    cmd_eval(cfg, EmbeddingSource::Trained)?;
    cmd_eval(cfg, EmbeddingSource::Frozen)?;
    cmd_anomaly(cfg)?;
    cmd_diag(cfg)?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblationAxis {
    SamplingStrategy,
    AugmentMode,
    SequenceLength,
    OutputDim,
    HeadVariant,
    L2norm,
    DataFraction,
}

impl AblationAxis {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "sampling_strategy" => AblationAxis::SamplingStrategy,
            "augment_mode" => AblationAxis::AugmentMode,
            "sequence_length" => AblationAxis::SequenceLength,
            "output_dim" => AblationAxis::OutputDim,
            "head_variant" => AblationAxis::HeadVariant,
            "l2norm" => AblationAxis::L2norm,
            "data_fraction" => AblationAxis::DataFraction,
            other => {
                return Err(Error::Config(format!(
                    "unknown ablation axis {other:?} (expected sampling_strategy, augment_mode, \
                     sequence_length, output_dim, head_variant, l2norm or data_fraction)"
                )))
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            AblationAxis::SamplingStrategy => "sampling_strategy",
            AblationAxis::AugmentMode => "augment_mode",
            AblationAxis::SequenceLength => "sequence_length",
            AblationAxis::OutputDim => "output_dim",
            AblationAxis::HeadVariant => "head_variant",
            AblationAxis::L2norm => "l2norm",
            AblationAxis::DataFraction => "data_fraction",
        }
    }
}

/// Apply one ablation value onto a copy of the experiment config.
pub fn apply_axis(cfg: &mut ExperimentConfig, axis: AblationAxis, value: &str) -> Result<()> {
    match axis {
        AblationAxis::SamplingStrategy => {
            cfg.train.miner.strategy = match value {
                "mean_threshold" => Strategy::MeanThreshold,
                "topk" => Strategy::Topk,
                "adjacent" => Strategy::Adjacent,
                v => return Err(Error::Config(format!("unknown sampling strategy {v:?}"))),
            };
        }
        AblationAxis::AugmentMode => {
            cfg.train.augment.mode = match value {
                "positives_only" => AugmentMode::PositivesOnly,
                "all" => AugmentMode::All,
                "none" => AugmentMode::None,
                v => return Err(Error::Config(format!("unknown augment mode {v:?}"))),
            };
        }
        AblationAxis::SequenceLength => {
            cfg.train.clip_length = value
                .parse()
                .map_err(|_| Error::Config(format!("bad sequence length {value:?}")))?;
        }
        AblationAxis::OutputDim => {
            cfg.train.head.out_dim = value
                .parse()
                .map_err(|_| Error::Config(format!("bad output dim {value:?}")))?;
        }
        AblationAxis::HeadVariant => {
            let (kernel, pooling) = match value {
                "conv3_max" => (3, Pooling::Max),
                "conv3_mean" => (3, Pooling::Mean),
                "conv1_max" => (1, Pooling::Max),
                "conv1_mean" => (1, Pooling::Mean),
                v => {
                    return Err(Error::Config(format!(
                        "unknown head variant {v:?} (conv{{1,3}}_{{max,mean}})"
                    )))
                }
            };
            cfg.train.head.kernel_size = kernel;
            cfg.train.head.pooling = pooling;
        }
        AblationAxis::L2norm => {
            cfg.train.head.use_l2norm = value
                .parse()
                .map_err(|_| Error::Config(format!("bad l2norm flag {value:?}")))?;
        }
        AblationAxis::DataFraction => {
            let frac: f64 = value
                .parse()
                .map_err(|_| Error::Config(format!("bad data fraction {value:?}")))?;
            if !(0.0..=1.0).contains(&frac) || frac <= 0.0 {
                return Err(Error::Config(format!(
                    "data fraction must be in (0, 1], got {frac}"
                )));
            }
            let keep = ((cfg.dataset.train_sequences as f64 * frac).round() as usize).max(1);
            cfg.dataset.train_sequences = keep;
        }
    }
    cfg.validate()
}

#[derive(Clone, Debug, Serialize)]
pub struct AblationCell {
    pub axis: &'static str,
    pub value: String,
    pub seed: u64,
    pub ap: f64,
    pub f1: f64,
    pub oracle_f1: f64,
    pub status: String,
}

/// One full in-memory pipeline run: data -> train -> embed -> eval.
pub fn run_cell(cfg: &ExperimentConfig, seed: u64) -> Result<(TrainReport, MetricsReport)> {
    let bench = prepare_bench(cfg, seed)?;
    let (params, _, report) = train_on_bench(cfg, &bench, seed)?;
    let embeddings = embed_test(cfg, &bench, &params)?;
    let metrics = eval_embeddings(cfg, &embeddings, &test_labels(&bench))?;
    Ok((report, metrics))
}

/// `ablate`: run the full pipeline per (value, seed) and tabulate.
pub fn cmd_ablate(cfg: &ExperimentConfig, axis: AblationAxis, values: &[String]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Config("ablation needs at least one value".into()));
    }
    let mut cells: Vec<AblationCell> = Vec::new();
    for value in values {
        for &seed in &cfg.seeds {
            let mut cell_cfg = cfg.clone();
            match apply_axis(&mut cell_cfg, axis, value) {
                Ok(()) => {}
                Err(e) => {
                    cells.push(AblationCell {
                        axis: axis.name(),
                        value: value.clone(),
                        seed,
                        ap: f64::NAN,
                        f1: f64::NAN,
                        oracle_f1: f64::NAN,
                        status: format!("config error: {e}"),
                    });
                    continue;
                }
            }
            match run_cell(&cell_cfg, seed) {
                Ok((_, metrics)) => {
                    log::info!(
                        "{} = {value} seed {seed}: AP {:.4} F1 {:.4}",
                        axis.name(),
                        metrics.ap,
                        metrics.f1
                    );
                    cells.push(AblationCell {
                        axis: axis.name(),
                        value: value.clone(),
                        seed,
                        ap: metrics.ap,
                        f1: metrics.f1,
                        oracle_f1: metrics.oracle_f1,
                        status: "ok".into(),
                    });
                }
                Err(e) => {
                    log::error!("{} = {value} seed {seed} failed: {e}", axis.name());
                    cells.push(AblationCell {
                        axis: axis.name(),
                        value: value.clone(),
                        seed,
                        ap: f64::NAN,
                        f1: f64::NAN,
                        oracle_f1: f64::NAN,
                        status: format!("error: {e}"),
                    });
                }
            }
        }
    }

    fs::create_dir_all(&cfg.output_dir)?;
    let mut csv = String::from("axis,value,seed,ap,f1,oracle_f1,status\n");
    for c in &cells {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.axis, c.value, c.seed, c.ap, c.f1, c.oracle_f1, c.status
        ));
    }
    fs::write(cfg.output_dir.join("ablation.csv"), csv)?;

    // median / min / max per value over the seeds that succeeded
    let mut summary = String::from("axis,value,f1_median,f1_min,f1_max,ap_median,ap_min,ap_max\n");
    for value in values {
        let mut f1s: Vec<f64> = cells
            .iter()
            .filter(|c| c.value == *value && c.status == "ok")
            .map(|c| c.f1)
            .collect();
        let mut aps: Vec<f64> = cells
            .iter()
            .filter(|c| c.value == *value && c.status == "ok")
            .map(|c| c.ap)
            .collect();
        if f1s.is_empty() {
            summary.push_str(&format!("{},{value},,,,,,\n", axis.name()));
            continue;
        }
        f1s.sort_by(f64::total_cmp);
        aps.sort_by(f64::total_cmp);
        summary.push_str(&format!(
            "{},{value},{},{},{},{},{},{}\n",
            axis.name(),
            median_sorted(&f1s),
            f1s[0],
            f1s[f1s.len() - 1],
            median_sorted(&aps),
            aps[0],
            aps[aps.len() - 1]
        ));
    }
    fs::write(cfg.output_dir.join("ablation_summary.csv"), summary)?;
    Ok(())
}

pub fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Median over an unsorted slice (convenience for small vectors).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    median_sorted(&v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.dataset.train_sequences = 4;
        cfg.dataset.test_sequences = 4;
        cfg.dataset.generator.num_frames = 240;
        cfg.train.clip_length = 60;
        cfg.train.epochs_max = 1;
        cfg.seeds = vec![1];
        cfg
    }

    #[test]
    fn build_split_is_deterministic_and_labeled() {
        let cfg = small_cfg();
        let a = build_split(&cfg.dataset, 1, Split::Test).unwrap();
        let b = build_split(&cfg.dataset, 1, Split::Test).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        // 60% anomalous via idx % 10 < 6: indices 0..3 are all < 6
        let anomalous = a
            .iter()
            .filter(|s| !s.is_fully_periodic())
            .count();
        assert_eq!(anomalous, 4);
        let c = build_split(&cfg.dataset, 2, Split::Test).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn split_respects_anomalous_fraction_on_round_counts() {
        let mut ds = DatasetConfig::default();
        ds.test_sequences = 20;
        ds.generator.num_frames = 400;
        let seqs = build_split(&ds, 9, Split::Test).unwrap();
        let anomalous = seqs.iter().filter(|s| !s.is_fully_periodic()).count();
        assert_eq!(anomalous, 12);
        // every anomalous sequence has exactly anomaly_length bad frames
        for s in &seqs {
            let bad = s
                .frame_labels
                .iter()
                .filter(|l| **l == FrameLabel::NonPeriodic)
                .count();
            assert!(bad == 0 || bad == ds.anomaly_length);
        }
    }

    #[test]
    fn frozen_baseline_is_unit_norm() {
        let cfg = small_cfg();
        let bench = prepare_bench(&cfg, 1).unwrap();
        let embs = frozen_baseline_embeddings(&bench.test_features);
        for e in &embs {
            for row in &e.embeddings {
                let n: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!((n - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn queries_and_reference_split_by_ground_truth() {
        let cfg = small_cfg();
        let bench = prepare_bench(&cfg, 3).unwrap();
        let labels = test_labels(&bench);
        let embs = frozen_baseline_embeddings(&bench.test_features);
        let (queries, reference, qlabels) = split_queries_reference(&embs, &labels);
        assert_eq!(queries.len() + reference.len(), embs.len());
        assert_eq!(queries.len(), qlabels.len());
        for labs in &qlabels {
            assert!(labs.iter().any(|l| *l == FrameLabel::NonPeriodic));
        }
    }

    #[test]
    fn apply_axis_round_trips_values() {
        let mut cfg = ExperimentConfig::default();
        apply_axis(&mut cfg, AblationAxis::HeadVariant, "conv1_mean").unwrap();
        assert_eq!(cfg.train.head.kernel_size, 1);
        assert_eq!(cfg.train.head.pooling, Pooling::Mean);
        apply_axis(&mut cfg, AblationAxis::L2norm, "false").unwrap();
        assert!(!cfg.train.head.use_l2norm);
        apply_axis(&mut cfg, AblationAxis::DataFraction, "0.5").unwrap();
        assert_eq!(cfg.dataset.train_sequences, 20);
        assert!(apply_axis(&mut cfg, AblationAxis::SamplingStrategy, "bogus").is_err());
    }
}
