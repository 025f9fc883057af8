//! Triplet-loss training loop: sample clips, embed them in eval mode,
//! mine triplets from each clip's TSM, re-embed (possibly augmented)
//! clips in train mode, and take an Adam step on the mean triplet loss.
//! Training stops when the loss stays below tolerance for a configured
//! number of consecutive iterations.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::head::adam::{adam_step, AdamState};
use crate::head::{
    backward_batch, forward_batch, forward_eval, Clip, EmbeddingSequence, HeadConfig, HeadParams,
    Mode,
};
use crate::mining::{self, AugmentConfig, MinerConfig, Role, TripletSet};
use crate::rng::derive_seed;
use crate::seqdata::FeatureSequence;
use crate::tsm::compute_tsm;

/// Chunk length used when embedding whole sequences.
pub const EMBED_CHUNK: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub margin: f64,
    pub clip_length: usize,
    pub temporal_stride: usize,
    pub batch_clips: usize,
    pub epochs_max: usize,
    /// Consecutive sub-tolerance iterations required to stop.
    pub zero_loss_patience: usize,
    pub loss_tol: f64,
    pub miner: MinerConfig,
    pub augment: AugmentConfig,
    pub head: HeadConfig,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            margin: 0.5,
            clip_length: 100,
            temporal_stride: 2,
            batch_clips: 4,
            epochs_max: 100,
            zero_loss_patience: 20,
            loss_tol: 1e-4,
            miner: MinerConfig::default(),
            augment: AugmentConfig::default(),
            head: HeadConfig::default(),
            lr: 1e-4,
            weight_decay: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) {
            return Err(Error::Config(format!(
                "margin must be > 0, got {}",
                self.margin
            )));
        }
        if self.clip_length < self.head.kernel_size {
            return Err(Error::Config(format!(
                "clip_length {} shorter than kernel {}",
                self.clip_length, self.head.kernel_size
            )));
        }
        if self.batch_clips < 1 {
            return Err(Error::Config("batch_clips must be >= 1".into()));
        }
        if self.temporal_stride < 1 {
            return Err(Error::Config("temporal_stride must be >= 1".into()));
        }
        if self.zero_loss_patience < 1 {
            return Err(Error::Config("zero_loss_patience must be >= 1".into()));
        }
        self.head.validate()?;
        self.miner.validate()?;
        self.augment.validate()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxEpochs,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub epoch: usize,
    pub loss: f64,
    pub triplet_count: usize,
    pub skipped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub records: Vec<IterationRecord>,
    pub epochs_run: usize,
    pub stop_reason: StopReason,
    pub skipped_iterations: usize,
    /// Where the final parameters were checkpointed, when they were.
    pub checkpoint: Option<PathBuf>,
}

impl TrainReport {
    pub fn loss_history(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    /// Training-log CSV: `iter,epoch,loss,triplet_count,skipped`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,epoch,loss,triplet_count,skipped\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.iter,
                r.epoch,
                r.loss,
                r.triplet_count,
                if r.skipped { 1 } else { 0 }
            ));
        }
        out
    }
}

/// Squared-distance triplet hinge loss and its exact gradients.
///
/// `L = max(0, ||a-p||^2 - ||a-n||^2 + margin)`; in the inactive branch
/// (including the hinge point itself) all gradients are zero.
pub fn triplet_loss(
    a: &[f64],
    p: &[f64],
    n: &[f64],
    margin: f64,
) -> (f64, Vec<f64>, Vec<f64>, Vec<f64>) {
    let d = a.len();
    debug_assert!(p.len() == d && n.len() == d);
    let mut d_ap = 0.0;
    let mut d_an = 0.0;
    for i in 0..d {
        d_ap += (a[i] - p[i]) * (a[i] - p[i]);
        d_an += (a[i] - n[i]) * (a[i] - n[i]);
    }
    let loss = d_ap - d_an + margin;
    if loss > 0.0 {
        let mut ga = vec![0.0; d];
        let mut gp = vec![0.0; d];
        let mut gn = vec![0.0; d];
        for i in 0..d {
            ga[i] = 2.0 * (n[i] - p[i]);
            gp[i] = 2.0 * (p[i] - a[i]);
            gn[i] = 2.0 * (a[i] - n[i]);
        }
        (loss, ga, gp, gn)
    } else {
        (0.0, vec![0.0; d], vec![0.0; d], vec![0.0; d])
    }
}

/// Cut a strided window of `len` frames starting at `start` from a
/// feature sequence, flattened for the head.
pub fn clip_from_features(
    seq: &FeatureSequence,
    start: usize,
    len: usize,
    stride: usize,
) -> Result<Clip> {
    let needed = start + (len - 1) * stride;
    if len == 0 || needed >= seq.len() {
        return Err(Error::Config(format!(
            "clip [{start}, +{len} x{stride}] out of bounds for {} frames",
            seq.len()
        )));
    }
    let (s_len, c_len) = (seq.num_regions(), seq.channels());
    let mut data = Vec::with_capacity(len * s_len * c_len);
    for i in 0..len {
        data.extend_from_slice(seq.features[start + i * stride].as_slice());
    }
    Clip::new(seq.video_id.clone(), start, len, s_len, c_len, data)
}

struct RoleVariants {
    /// Clip variant index per role, into the shared variant batch.
    anchor: usize,
    positive: usize,
    negative: usize,
}

/// Train a fresh head on the dataset. Deterministic given `cfg.seed`.
pub fn train(dataset: &[FeatureSequence], cfg: &TrainConfig) -> Result<(HeadParams, TrainReport)> {
    let (params, _adam, report) = train_with_state(dataset, cfg)?;
    Ok((params, report))
}

/// Like [`train`], additionally returning the optimizer state for
/// checkpointing.
pub fn train_with_state(
    dataset: &[FeatureSequence],
    cfg: &TrainConfig,
) -> Result<(HeadParams, AdamState, TrainReport)> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("empty training dataset".into()));
    }
    for seq in dataset {
        if seq.len() < cfg.clip_length * cfg.temporal_stride {
            return Err(Error::Config(format!(
                "sequence {} has {} frames, need clip_length*stride = {}",
                seq.video_id,
                seq.len(),
                cfg.clip_length * cfg.temporal_stride
            )));
        }
        if seq.channels() != cfg.head.in_channels {
            return Err(Error::Dim(format!(
                "sequence {} has {} channels, head expects {}",
                seq.video_id,
                seq.channels(),
                cfg.head.in_channels
            )));
        }
    }

    let mut params = HeadParams::init(&cfg.head, derive_seed(cfg.seed, 1))?;
    // center the fresh head on the data before any mining happens
    let calib_clips: Vec<Clip> = dataset
        .iter()
        .take(cfg.batch_clips.max(4))
        .map(|seq| clip_from_features(seq, 0, cfg.clip_length, cfg.temporal_stride))
        .collect::<Result<_>>()?;
    crate::head::calibrate(&mut params, &calib_clips, &cfg.head)?;

    let mut adam = AdamState::new(&params, cfg.lr, cfg.weight_decay);
    let mut sampler = StdRng::seed_from_u64(derive_seed(cfg.seed, 2));
    let miner_base = derive_seed(cfg.seed, cfg.miner.rng_seed.wrapping_add(3));
    let augment_base = derive_seed(cfg.seed, cfg.augment.rng_seed.wrapping_add(4));

    let total_frames: usize = dataset.iter().map(FeatureSequence::len).sum();
    let iters_per_epoch =
        (total_frames + cfg.batch_clips * cfg.clip_length - 1) / (cfg.batch_clips * cfg.clip_length);
    let max_iters = cfg.epochs_max * iters_per_epoch;

    let mut records = Vec::new();
    let mut skipped_total = 0usize;
    let mut streak = 0usize;
    let mut stop_reason = StopReason::MaxEpochs;
    let mut epochs_run = 0usize;

    for it in 0..max_iters {
        let epoch = it / iters_per_epoch;
        epochs_run = epoch + 1;

        // (1) sample clips
        let clips: Vec<Clip> = (0..cfg.batch_clips)
            .map(|_| {
                let seq = &dataset[sampler.gen_range(0..dataset.len())];
                let max_start = seq.len() - 1 - (cfg.clip_length - 1) * cfg.temporal_stride;
                let start = sampler.gen_range(0..=max_start);
                clip_from_features(seq, start, cfg.clip_length, cfg.temporal_stride)
            })
            .collect::<Result<_>>()?;

        // (2) eval-mode embeddings and TSMs, (3) mining
        let mining_embs = forward_eval(&clips, &params, &cfg.head)?;
        let mut triplet_sets: Vec<TripletSet> = Vec::with_capacity(clips.len());
        for (ci, emb) in mining_embs.iter().enumerate() {
            let tsm = compute_tsm(emb)?;
            let mut mcfg = cfg.miner.clone();
            mcfg.rng_seed = derive_seed(miner_base, (it * cfg.batch_clips + ci) as u64);
            triplet_sets.push(mining::mine(&tsm, &mcfg)?);
        }
        let total_triplets: usize = triplet_sets.iter().map(TripletSet::len).sum();
        if total_triplets == 0 {
            log::warn!("iteration {it}: no triplets mined, skipping");
            skipped_total += 1;
            streak = 0; // a skipped iteration is not evidence of convergence
            records.push(IterationRecord {
                iter: it,
                epoch,
                loss: 0.0,
                triplet_count: 0,
                skipped: true,
            });
            continue;
        }

        // (4) role variants; unaugmented roles share one copy of the
        // original clip so the train batch contains only clips the loss
        // actually consumes
        let mut variants: Vec<Clip> = Vec::new();
        let mut roles: Vec<RoleVariants> = Vec::with_capacity(clips.len());
        for (ci, clip) in clips.iter().enumerate() {
            let mut original: Option<usize> = None;
            let mut indices = [0usize; 3];
            for (role_no, role) in [Role::Anchor, Role::Positive, Role::Negative]
                .into_iter()
                .enumerate()
            {
                indices[role_no] = if cfg.augment.applies_to(role) {
                    let call = (it as u64) * (cfg.batch_clips as u64) * 3
                        + (ci as u64) * 3
                        + role_no as u64;
                    let mut acfg = cfg.augment.clone();
                    acfg.rng_seed = augment_base;
                    variants.push(mining::augment(clip, &acfg, role, call)?);
                    variants.len() - 1
                } else {
                    *original.get_or_insert_with(|| {
                        variants.push(clip.clone());
                        variants.len() - 1
                    })
                };
            }
            roles.push(RoleVariants {
                anchor: indices[0],
                positive: indices[1],
                negative: indices[2],
            });
        }

        // (5) train-mode forward of all variants, joint BN statistics
        let (var_embs, cache) = forward_batch(&variants, &mut params, &cfg.head, Mode::Train)?;

        // (6) mean triplet loss and embedding gradients
        let d_dim = cfg.head.out_dim;
        let mut grad_embs: Vec<Vec<Vec<f64>>> = var_embs
            .iter()
            .map(|e| vec![vec![0.0; d_dim]; e.len()])
            .collect();
        let mut loss_sum = 0.0;
        for (ci, set) in triplet_sets.iter().enumerate() {
            let rv = &roles[ci];
            for t in &set.triplets {
                let a = &var_embs[rv.anchor].embeddings[t.anchor];
                let p = &var_embs[rv.positive].embeddings[t.positive];
                let n = &var_embs[rv.negative].embeddings[t.negative];
                let (l, ga, gp, gn) = triplet_loss(a, p, n, cfg.margin);
                loss_sum += l;
                for d in 0..d_dim {
                    grad_embs[rv.anchor][t.anchor][d] += ga[d];
                    grad_embs[rv.positive][t.positive][d] += gp[d];
                    grad_embs[rv.negative][t.negative][d] += gn[d];
                }
            }
        }
        let inv = 1.0 / total_triplets as f64;
        for clip_grads in grad_embs.iter_mut() {
            for row in clip_grads.iter_mut() {
                for g in row.iter_mut() {
                    *g *= inv;
                }
            }
        }
        let mean_loss = loss_sum * inv;

        // (7) backward + optimizer step
        let grads = backward_batch(&grad_embs, &cache, &params, &cfg.head)?;
        adam_step(&mut params, &grads, &mut adam)?;
        if !params.all_finite() {
            return Err(Error::Numeric(format!(
                "parameters diverged at iteration {it}"
            )));
        }

        records.push(IterationRecord {
            iter: it,
            epoch,
            loss: mean_loss,
            triplet_count: total_triplets,
            skipped: false,
        });

        if mean_loss < cfg.loss_tol {
            streak += 1;
            if streak >= cfg.zero_loss_patience {
                stop_reason = StopReason::Converged;
                break;
            }
        } else {
            streak = 0;
        }
    }

    let report = TrainReport {
        records,
        epochs_run,
        stop_reason,
        skipped_iterations: skipped_total,
        checkpoint: None,
    };
    Ok((params, adam, report))
}

/// Embed every sequence in eval mode over non-overlapping
/// [`EMBED_CHUNK`]-frame chunks (stride 1), one embedding per frame.
pub fn embed_dataset(
    dataset: &[FeatureSequence],
    params: &HeadParams,
    head: &HeadConfig,
) -> Result<Vec<EmbeddingSequence>> {
    embed_dataset_chunked(dataset, params, head, EMBED_CHUNK)
}

pub fn embed_dataset_chunked(
    dataset: &[FeatureSequence],
    params: &HeadParams,
    head: &HeadConfig,
    chunk: usize,
) -> Result<Vec<EmbeddingSequence>> {
    if chunk == 0 {
        return Err(Error::Config("chunk must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(dataset.len());
    for seq in dataset {
        if seq.is_empty() {
            return Err(Error::Config(format!("sequence {} is empty", seq.video_id)));
        }
        let mut clips = Vec::new();
        let mut start = 0;
        while start < seq.len() {
            let len = chunk.min(seq.len() - start);
            clips.push(clip_from_features(seq, start, len, 1)?);
            start += len;
        }
        let chunk_embs = forward_eval(&clips, params, head)?;
        let mut embeddings = Vec::with_capacity(seq.len());
        let mut degenerate = Vec::with_capacity(seq.len());
        for e in chunk_embs {
            embeddings.extend(e.embeddings);
            degenerate.extend(e.degenerate);
        }
        debug_assert_eq!(embeddings.len(), seq.len());
        out.push(EmbeddingSequence {
            video_id: seq.video_id.clone(),
            embeddings,
            clip_offset: 0,
            degenerate,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqdata::{encode, generate_sequence, EncoderParams, GeneratorConfig};

    fn tiny_dataset(n_seqs: usize, frames: usize) -> Vec<FeatureSequence> {
        let enc = EncoderParams::from_seed(99, 6, 12);
        (0..n_seqs)
            .map(|i| {
                let cfg = GeneratorConfig {
                    num_frames: frames,
                    seed: 1000 + i as u64,
                    ..GeneratorConfig::default()
                };
                encode(&generate_sequence(&cfg).unwrap(), &enc).unwrap()
            })
            .collect()
    }

    fn fast_cfg() -> TrainConfig {
        TrainConfig {
            clip_length: 40,
            temporal_stride: 2,
            batch_clips: 2,
            epochs_max: 2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn triplet_loss_spec_values() {
        // a == p, n orthogonal
        let a = vec![1.0, 0.0];
        let n = vec![0.0, 1.0];
        let (l, ..) = triplet_loss(&a, &a, &n, 0.5);
        assert_eq!(l, 0.0);

        // fully active hinge
        let (l, ..) = triplet_loss(&a, &a, &a, 0.5);
        assert!((l - 0.5).abs() < 1e-15);

        // cos(a,p)=0.5, cos(a,n)=0.8 on unit vectors
        let p = vec![0.5, 0.75_f64.sqrt()];
        let n = vec![0.8, 0.36_f64.sqrt()];
        let (l, ..) = triplet_loss(&a, &p, &n, 0.5);
        assert!((l - 1.1).abs() < 1e-12, "{l}");
    }

    #[test]
    fn triplet_loss_gradients_match_finite_differences() {
        let a = vec![0.6, 0.8, 0.0];
        let p = vec![0.0, 0.6, 0.8];
        let n = vec![0.8, 0.0, 0.6];
        let (_, ga, gp, gn) = triplet_loss(&a, &p, &n, 0.7);
        let h = 1e-6;
        for i in 0..3 {
            for (which, grad) in [(0, &ga), (1, &gp), (2, &gn)] {
                let mut pa = a.clone();
                let mut pp = p.clone();
                let mut pn = n.clone();
                let target = match which {
                    0 => &mut pa,
                    1 => &mut pp,
                    _ => &mut pn,
                };
                target[i] += h;
                let (lp, ..) = triplet_loss(&pa, &pp, &pn, 0.7);
                let mut ma = a.clone();
                let mut mp = p.clone();
                let mut mn = n.clone();
                let target = match which {
                    0 => &mut ma,
                    1 => &mut mp,
                    _ => &mut mn,
                };
                target[i] -= h;
                let (lm, ..) = triplet_loss(&ma, &mp, &mn, 0.7);
                let fd = (lp - lm) / (2.0 * h);
                assert!((grad[i] - fd).abs() < 1e-6, "{which}[{i}]");
            }
        }
    }

    #[test]
    fn loss_zero_iff_all_triplets_satisfied() {
        // satisfied: d_ap^2 + margin <= d_an^2
        let a = vec![1.0, 0.0];
        let p = vec![1.0, 0.0];
        let n = vec![-1.0, 0.0];
        assert_eq!(triplet_loss(&a, &p, &n, 0.5).0, 0.0);
        // violated by exactly the margin at equality handled as zero
        let n2 = vec![(0.75_f64).sqrt(), 0.5];
        let (l, ..) = triplet_loss(&a, &p, &n2, 0.5);
        assert!(l > 0.0);
    }

    #[test]
    fn training_is_deterministic() {
        let data = tiny_dataset(3, 100);
        let cfg = fast_cfg();
        let (p1, r1) = train(&data, &cfg).unwrap();
        let (p2, r2) = train(&data, &cfg).unwrap();
        assert_eq!(r1.loss_history(), r2.loss_history());
        assert_eq!(p1, p2);
    }

    #[test]
    fn constant_sequences_skip_every_iteration() {
        use crate::mat::Mat;
        let frames = 90;
        let seq = FeatureSequence {
            video_id: "flat".into(),
            features: vec![Mat::from_vec(2, 12, vec![0.3; 24]).unwrap(); frames],
            frame_labels: vec![crate::seqdata::FrameLabel::Periodic; frames],
            sample_period: 10.0,
            seed: 0,
        };
        let cfg = fast_cfg();
        let (_, report) = train(&[seq], &cfg).unwrap();
        assert_eq!(report.stop_reason, StopReason::MaxEpochs);
        assert!(report.records.iter().all(|r| r.skipped));
        assert_eq!(report.skipped_iterations, report.records.len());
    }

    #[test]
    fn empty_dataset_is_a_config_error() {
        assert!(matches!(
            train(&[], &fast_cfg()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn short_sequences_are_a_config_error() {
        let data = tiny_dataset(1, 50); // 50 < 40*2
        assert!(matches!(
            train(&data, &fast_cfg()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn mining_does_not_depend_on_augment_mode() {
        use crate::mining::AugmentMode;
        let data = tiny_dataset(2, 100);
        let mut counts = Vec::new();
        for mode in [AugmentMode::None, AugmentMode::PositivesOnly, AugmentMode::All] {
            let mut cfg = fast_cfg();
            cfg.epochs_max = 1;
            cfg.augment.mode = mode;
            let (_, report) = train(&data, &cfg).unwrap();
            // triplet counts are produced before augmentation is applied
            counts.push(
                report
                    .records
                    .iter()
                    .map(|r| r.triplet_count)
                    .collect::<Vec<_>>(),
            );
        }
        // first iteration sees identical (untrained-params) mining in all
        // modes; later iterations may drift as the learned weights differ
        assert_eq!(counts[0][0], counts[1][0]);
        assert_eq!(counts[0][0], counts[2][0]);
    }

    #[test]
    fn embed_dataset_covers_every_frame() {
        let data = tiny_dataset(2, 150);
        let cfg = fast_cfg();
        let params = HeadParams::init(&cfg.head, 7).unwrap();
        let embs = embed_dataset(&data, &params, &cfg.head).unwrap();
        for (seq, emb) in data.iter().zip(&embs) {
            assert_eq!(emb.len(), seq.len());
            assert_eq!(emb.video_id, seq.video_id);
        }
        let again = embed_dataset(&data, &params, &cfg.head).unwrap();
        assert_eq!(embs, again);
    }
}
