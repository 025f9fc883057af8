//! The trainable projection head: temporal convolution shared across
//! regions, optional batch norm, Leaky ReLU, spatial pooling, a linear
//! layer and optional L2 normalization — with exact hand-derived
//! gradients for every stage.
//!
//! Forward/backward operate on a *batch* of clips at once because batch
//! norm statistics in train mode are computed jointly over every
//! (clip, frame, region) position of the batch.

pub mod adam;
pub mod checkpoint;

use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::gauss;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    Max,
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub in_channels: usize,
    pub hidden_channels: usize,
    pub out_dim: usize,
    /// Temporal kernel width; odd so padding preserves clip length.
    pub kernel_size: usize,
    pub pooling: Pooling,
    pub leaky_slope: f64,
    pub use_batchnorm: bool,
    pub use_l2norm: bool,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            in_channels: 12,
            hidden_channels: 32,
            out_dim: 16,
            kernel_size: 3,
            pooling: Pooling::Max,
            leaky_slope: 0.1,
            use_batchnorm: true,
            use_l2norm: true,
        }
    }
}

impl HeadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel_size % 2 == 0 {
            return Err(Error::Config(format!(
                "kernel_size must be odd, got {}",
                self.kernel_size
            )));
        }
        if self.out_dim < 2 {
            return Err(Error::Config(format!(
                "out_dim must be >= 2, got {}",
                self.out_dim
            )));
        }
        if self.in_channels == 0 || self.hidden_channels == 0 {
            return Err(Error::Config("channel counts must be >= 1".into()));
        }
        Ok(())
    }

    /// Temporal zero-padding on each side; keeps output length == input length.
    pub fn padding(&self) -> usize {
        (self.kernel_size - 1) / 2
    }
}

/// Trainable parameters plus batch-norm running statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    /// `[kernel][in_channel][hidden]`, flattened `(k*C + c)*H + h`.
    pub conv_w: Vec<f64>,
    pub conv_b: Vec<f64>,
    pub bn_gamma: Vec<f64>,
    pub bn_beta: Vec<f64>,
    pub bn_running_mean: Vec<f64>,
    pub bn_running_var: Vec<f64>,
    /// `[hidden][out]`, flattened `h*D + d`.
    pub fc_w: Vec<f64>,
    pub fc_b: Vec<f64>,
}

impl HeadParams {
    /// Seeded He/Glorot-style initialization.
    pub fn init(cfg: &HeadConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = StdRng::seed_from_u64(seed);
        let (k, c, h, d) = (
            cfg.kernel_size,
            cfg.in_channels,
            cfg.hidden_channels,
            cfg.out_dim,
        );
        let conv_scale = (2.0 / (k * c) as f64).sqrt();
        let conv_w = (0..k * c * h).map(|_| gauss(&mut rng) * conv_scale).collect();
        let fc_scale = (1.0 / h as f64).sqrt();
        let fc_w = (0..h * d).map(|_| gauss(&mut rng) * fc_scale).collect();
        Ok(HeadParams {
            conv_w,
            conv_b: vec![0.0; h],
            bn_gamma: vec![1.0; h],
            bn_beta: vec![0.0; h],
            bn_running_mean: vec![0.0; h],
            bn_running_var: vec![1.0; h],
            fc_w,
            fc_b: vec![0.0; d],
        })
    }

    pub fn matches(&self, cfg: &HeadConfig) -> bool {
        let (k, c, h, d) = (
            cfg.kernel_size,
            cfg.in_channels,
            cfg.hidden_channels,
            cfg.out_dim,
        );
        self.conv_w.len() == k * c * h
            && self.conv_b.len() == h
            && self.bn_gamma.len() == h
            && self.bn_beta.len() == h
            && self.bn_running_mean.len() == h
            && self.bn_running_var.len() == h
            && self.fc_w.len() == h * d
            && self.fc_b.len() == d
    }

    pub fn all_finite(&self) -> bool {
        self.trainable()
            .iter()
            .all(|(_, v)| v.iter().all(|x| x.is_finite()))
            && self.bn_running_mean.iter().all(|x| x.is_finite())
            && self.bn_running_var.iter().all(|x| x.is_finite() && *x > 0.0)
    }

    /// Named views of the trainable tensors, in a fixed order shared with
    /// [`HeadGrads`] and the optimizer.
    pub fn trainable(&self) -> [(&'static str, &Vec<f64>); 6] {
        [
            ("conv_w", &self.conv_w),
            ("conv_b", &self.conv_b),
            ("bn_gamma", &self.bn_gamma),
            ("bn_beta", &self.bn_beta),
            ("fc_w", &self.fc_w),
            ("fc_b", &self.fc_b),
        ]
    }

    pub fn trainable_mut(&mut self) -> [(&'static str, &mut Vec<f64>); 6] {
        [
            ("conv_w", &mut self.conv_w),
            ("conv_b", &mut self.conv_b),
            ("bn_gamma", &mut self.bn_gamma),
            ("bn_beta", &mut self.bn_beta),
            ("fc_w", &mut self.fc_w),
            ("fc_b", &mut self.fc_b),
        ]
    }
}

/// Gradients w.r.t. every trainable tensor of [`HeadParams`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadGrads {
    pub conv_w: Vec<f64>,
    pub conv_b: Vec<f64>,
    pub bn_gamma: Vec<f64>,
    pub bn_beta: Vec<f64>,
    pub fc_w: Vec<f64>,
    pub fc_b: Vec<f64>,
}

impl HeadGrads {
    pub fn zeros_like(params: &HeadParams) -> Self {
        HeadGrads {
            conv_w: vec![0.0; params.conv_w.len()],
            conv_b: vec![0.0; params.conv_b.len()],
            bn_gamma: vec![0.0; params.bn_gamma.len()],
            bn_beta: vec![0.0; params.bn_beta.len()],
            fc_w: vec![0.0; params.fc_w.len()],
            fc_b: vec![0.0; params.fc_b.len()],
        }
    }

    pub fn tensors(&self) -> [(&'static str, &Vec<f64>); 6] {
        [
            ("conv_w", &self.conv_w),
            ("conv_b", &self.conv_b),
            ("bn_gamma", &self.bn_gamma),
            ("bn_beta", &self.bn_beta),
            ("fc_w", &self.fc_w),
            ("fc_b", &self.fc_b),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Vec<f64>); 6] {
        [
            ("conv_w", &mut self.conv_w),
            ("conv_b", &mut self.conv_b),
            ("bn_gamma", &mut self.bn_gamma),
            ("bn_beta", &mut self.bn_beta),
            ("fc_w", &mut self.fc_w),
            ("fc_b", &mut self.fc_b),
        ]
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.tensors_mut() {
            for v in t.iter_mut() {
                *v *= factor;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// A contiguous `T x S x C` feature window cut from one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    pub video_id: String,
    /// Index of the first source frame this clip covers.
    pub offset: usize,
    pub frames: usize,
    pub regions: usize,
    pub channels: usize,
    /// `(t*S + s)*C + c`
    pub data: Vec<f64>,
}

impl Clip {
    pub fn new(
        video_id: impl Into<String>,
        offset: usize,
        frames: usize,
        regions: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if data.len() != frames * regions * channels {
            return Err(Error::Dim(format!(
                "clip data length {} != {}x{}x{}",
                data.len(),
                frames,
                regions,
                channels
            )));
        }
        Ok(Clip {
            video_id: video_id.into(),
            offset,
            frames,
            regions,
            channels,
            data,
        })
    }

    #[inline]
    pub fn at(&self, t: usize, s: usize, c: usize) -> f64 {
        self.data[(t * self.regions + s) * self.channels + c]
    }
}

/// Per-frame output embeddings for one clip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSequence {
    pub video_id: String,
    pub embeddings: Vec<Vec<f64>>,
    /// Frame index of the first embedded frame in the source sequence.
    pub clip_offset: usize,
    /// True where L2 normalization hit a zero-norm input.
    pub degenerate: Vec<bool>,
}

impl EmbeddingSequence {
    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.first().map_or(0, Vec::len)
    }
}

/// `x / ||x||` with a floor: inputs with norm below [`NORM_FLOOR`] come
/// back as the zero vector with the degenerate flag set.
pub fn l2_normalize(x: &[f64]) -> (Vec<f64>, bool) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > NORM_FLOOR {
        (x.iter().map(|v| v / norm).collect(), false)
    } else {
        (vec![0.0; x.len()], true)
    }
}

/// Everything backward needs, captured during a train-mode forward.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    mode: Mode,
    clips: Vec<ClipCache>,
    /// Batch-norm batch variance (train mode, BN enabled); the mean is
    /// already folded into the cached normalized activations.
    bn_var: Vec<f64>,
    dims: (usize, usize, usize, usize), // C, H, D, kernel
}

#[derive(Clone, Debug)]
struct ClipCache {
    frames: usize,
    regions: usize,
    /// Input window, `(t*S+s)*C + c`.
    x: Vec<f64>,
    /// Pre-BN conv output, `(t*S+s)*H + h`.
    z: Vec<f64>,
    /// Normalized activations (BN enabled only), same layout as `z`.
    xhat: Vec<f64>,
    /// Pre-LeakyReLU activations (post-BN), same layout as `z`.
    y: Vec<f64>,
    /// Post-LeakyReLU activations, same layout as `z`.
    a: Vec<f64>,
    /// Max-pool argmax region per `(t, h)` (max pooling only).
    argmax: Vec<usize>,
    /// Pooled activations, `t*H + h`.
    pooled: Vec<f64>,
    /// Pre-normalization outputs, `t*D + d`.
    f: Vec<f64>,
    /// L2 norms of `f` rows.
    norms: Vec<f64>,
    /// Final embeddings, `t*D + d`.
    e: Vec<f64>,
}

/// Forward one clip. Convenience wrapper over [`forward_batch`].
pub fn forward(
    clip: &Clip,
    params: &mut HeadParams,
    cfg: &HeadConfig,
    mode: Mode,
) -> Result<(EmbeddingSequence, ForwardCache)> {
    let (mut embs, cache) = forward_batch(std::slice::from_ref(clip), params, cfg, mode)?;
    Ok((embs.pop().expect("one clip in, one embedding out"), cache))
}

/// Eval-mode forward without touching the running statistics.
pub fn forward_eval(
    clips: &[Clip],
    params: &HeadParams,
    cfg: &HeadConfig,
) -> Result<Vec<EmbeddingSequence>> {
    let mut scratch = params.clone();
    let (embs, _) = forward_batch(clips, &mut scratch, cfg, Mode::Eval)?;
    Ok(embs)
}

/// Data-dependent initialization pass, run once before training.
///
/// Freshly initialized parameters put every embedding into a narrow cone:
/// spatial max pooling adds a large activation component shared by all
/// frames, which pushes pairwise cosine similarities toward 1 and
/// starves similarity-threshold mining. This pass (1) seeds the BN
/// running statistics with the conv output statistics of the
/// calibration clips, and (2) shifts the linear layer's bias by the mean
/// pooled activation so initial embeddings are centered before L2
/// normalization. Both are pure init policy: no gradient step happens.
pub fn calibrate(params: &mut HeadParams, clips: &[Clip], cfg: &HeadConfig) -> Result<()> {
    cfg.validate()?;
    if clips.is_empty() {
        return Err(Error::Config("calibration needs at least one clip".into()));
    }
    let h_dim = cfg.hidden_channels;

    if cfg.use_batchnorm {
        let mut mean = vec![0.0; h_dim];
        let mut var = vec![0.0; h_dim];
        let mut total = 0usize;
        let mut conv_outputs = Vec::with_capacity(clips.len());
        for clip in clips {
            let z = conv_stage(clip, params, cfg)?;
            total += z.len() / h_dim;
            conv_outputs.push(z);
        }
        for z in &conv_outputs {
            for pos in 0..z.len() / h_dim {
                for h in 0..h_dim {
                    mean[h] += z[pos * h_dim + h];
                }
            }
        }
        for m in mean.iter_mut() {
            *m /= total as f64;
        }
        for z in &conv_outputs {
            for pos in 0..z.len() / h_dim {
                for h in 0..h_dim {
                    let d = z[pos * h_dim + h] - mean[h];
                    var[h] += d * d;
                }
            }
        }
        let denom = if total > 1 { total - 1 } else { 1 } as f64;
        for v in var.iter_mut() {
            *v = (*v / denom).max(1e-12);
        }
        params.bn_running_mean = mean;
        params.bn_running_var = var;
    }

    // mean pooled activation under the calibrated statistics
    let (_, cache) = forward_batch(clips, params, cfg, Mode::Eval)?;
    let mut pooled_mean = vec![0.0; h_dim];
    let mut frames = 0usize;
    for cc in &cache.clips {
        frames += cc.frames;
        for t in 0..cc.frames {
            for h in 0..h_dim {
                pooled_mean[h] += cc.pooled[t * h_dim + h];
            }
        }
    }
    for p in pooled_mean.iter_mut() {
        *p /= frames as f64;
    }
    for d in 0..cfg.out_dim {
        let mut shift = 0.0;
        for h in 0..h_dim {
            shift += pooled_mean[h] * params.fc_w[h * cfg.out_dim + d];
        }
        params.fc_b[d] -= shift;
    }
    Ok(())
}

/// Stage 1 of the forward pass: zero-padded temporal convolution shared
/// across regions. Returns `(t*S+s)*H + h`-indexed activations.
fn conv_stage(clip: &Clip, params: &HeadParams, cfg: &HeadConfig) -> Result<Vec<f64>> {
    let (c_in, h_dim, kernel) = (cfg.in_channels, cfg.hidden_channels, cfg.kernel_size);
    if clip.channels != c_in {
        return Err(Error::Dim(format!(
            "clip has {} channels, head expects {}",
            clip.channels, c_in
        )));
    }
    let pad = cfg.padding() as isize;
    let (t_len, s_len) = (clip.frames, clip.regions);
    let mut z = vec![0.0; t_len * s_len * h_dim];
    for t in 0..t_len {
        for s in 0..s_len {
            let out_base = (t * s_len + s) * h_dim;
            z[out_base..out_base + h_dim].copy_from_slice(&params.conv_b);
            for k in 0..kernel {
                let src_t = t as isize + k as isize - pad;
                if src_t < 0 || src_t >= t_len as isize {
                    continue;
                }
                let in_base = (src_t as usize * s_len + s) * c_in;
                for c in 0..c_in {
                    let x = clip.data[in_base + c];
                    if x == 0.0 {
                        continue;
                    }
                    let w_base = (k * c_in + c) * h_dim;
                    for h in 0..h_dim {
                        z[out_base + h] += x * params.conv_w[w_base + h];
                    }
                }
            }
        }
    }
    Ok(z)
}

/// Forward a batch of clips through the head.
///
/// In train mode batch-norm statistics are computed jointly over every
/// (clip, frame, region) position and the running statistics are
/// updated; in eval mode running statistics are used and `params` is
/// left untouched (eval is a pure function of its inputs).
pub fn forward_batch(
    clips: &[Clip],
    params: &mut HeadParams,
    cfg: &HeadConfig,
    mode: Mode,
) -> Result<(Vec<EmbeddingSequence>, ForwardCache)> {
    cfg.validate()?;
    if clips.is_empty() {
        return Err(Error::Config("empty clip batch".into()));
    }
    if !params.matches(cfg) {
        return Err(Error::Dim("parameters do not match head config".into()));
    }
    let (c_in, h_dim, d_dim, kernel) = (
        cfg.in_channels,
        cfg.hidden_channels,
        cfg.out_dim,
        cfg.kernel_size,
    );
    for clip in clips {
        if clip.frames == 0 {
            return Err(Error::Config(format!(
                "empty clip from {}",
                clip.video_id
            )));
        }
        if clip.channels != c_in {
            return Err(Error::Dim(format!(
                "clip has {} channels, head expects {}",
                clip.channels, c_in
            )));
        }
        if clip.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite input in clip from {}",
                clip.video_id
            )));
        }
    }

    // Stage 1: temporal convolution, shared across regions.
    let mut caches: Vec<ClipCache> = Vec::with_capacity(clips.len());
    for clip in clips {
        let (t_len, s_len) = (clip.frames, clip.regions);
        let z = conv_stage(clip, params, cfg)?;
        caches.push(ClipCache {
            frames: t_len,
            regions: s_len,
            x: clip.data.clone(),
            z,
            xhat: Vec::new(),
            y: Vec::new(),
            a: Vec::new(),
            argmax: Vec::new(),
            pooled: Vec::new(),
            f: Vec::new(),
            norms: Vec::new(),
            e: Vec::new(),
        });
    }

    // Stage 2: batch norm.
    let mut bn_mean = vec![0.0; h_dim];
    let mut bn_var = vec![1.0; h_dim];
    if cfg.use_batchnorm {
        match mode {
            Mode::Train => {
                let total: usize = caches.iter().map(|c| c.frames * c.regions).sum();
                let mut mean = vec![0.0; h_dim];
                for cc in &caches {
                    for pos in 0..cc.frames * cc.regions {
                        for h in 0..h_dim {
                            mean[h] += cc.z[pos * h_dim + h];
                        }
                    }
                }
                for m in mean.iter_mut() {
                    *m /= total as f64;
                }
                let mut var = vec![0.0; h_dim];
                for cc in &caches {
                    for pos in 0..cc.frames * cc.regions {
                        for h in 0..h_dim {
                            let d = cc.z[pos * h_dim + h] - mean[h];
                            var[h] += d * d;
                        }
                    }
                }
                for v in var.iter_mut() {
                    *v /= total as f64;
                }
                // Running stats use the unbiased variance when possible.
                let unbias = if total > 1 {
                    total as f64 / (total - 1) as f64
                } else {
                    1.0
                };
                for h in 0..h_dim {
                    params.bn_running_mean[h] =
                        BN_MOMENTUM * params.bn_running_mean[h] + (1.0 - BN_MOMENTUM) * mean[h];
                    params.bn_running_var[h] = BN_MOMENTUM * params.bn_running_var[h]
                        + (1.0 - BN_MOMENTUM) * var[h] * unbias;
                }
                bn_mean = mean;
                bn_var = var;
            }
            Mode::Eval => {
                bn_mean.copy_from_slice(&params.bn_running_mean);
                bn_var.copy_from_slice(&params.bn_running_var);
            }
        }
        for cc in caches.iter_mut() {
            let n = cc.z.len();
            let mut xhat = vec![0.0; n];
            let mut y = vec![0.0; n];
            for pos in 0..cc.frames * cc.regions {
                for h in 0..h_dim {
                    let idx = pos * h_dim + h;
                    let inv = 1.0 / (bn_var[h] + BN_EPS).sqrt();
                    let xh = (cc.z[idx] - bn_mean[h]) * inv;
                    xhat[idx] = xh;
                    y[idx] = params.bn_gamma[h] * xh + params.bn_beta[h];
                }
            }
            cc.xhat = xhat;
            cc.y = y;
        }
    } else {
        for cc in caches.iter_mut() {
            cc.y = cc.z.clone();
        }
    }

    // Stages 3-6: Leaky ReLU, spatial pooling, linear, L2 norm.
    let slope = cfg.leaky_slope;
    let mut outputs = Vec::with_capacity(clips.len());
    for (cc, clip) in caches.iter_mut().zip(clips) {
        let (t_len, s_len) = (cc.frames, cc.regions);
        cc.a = cc
            .y
            .iter()
            .map(|&v| if v > 0.0 { v } else { slope * v })
            .collect();

        let mut pooled = vec![0.0; t_len * h_dim];
        let mut argmax = Vec::new();
        match cfg.pooling {
            Pooling::Max => {
                argmax = vec![0usize; t_len * h_dim];
                for t in 0..t_len {
                    for h in 0..h_dim {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_s = 0;
                        for s in 0..s_len {
                            let v = cc.a[(t * s_len + s) * h_dim + h];
                            if v > best {
                                best = v;
                                best_s = s;
                            }
                        }
                        pooled[t * h_dim + h] = best;
                        argmax[t * h_dim + h] = best_s;
                    }
                }
            }
            Pooling::Mean => {
                for t in 0..t_len {
                    for h in 0..h_dim {
                        let mut sum = 0.0;
                        for s in 0..s_len {
                            sum += cc.a[(t * s_len + s) * h_dim + h];
                        }
                        pooled[t * h_dim + h] = sum / s_len as f64;
                    }
                }
            }
        }
        cc.pooled = pooled;
        cc.argmax = argmax;

        let mut f = vec![0.0; t_len * d_dim];
        for t in 0..t_len {
            let out_base = t * d_dim;
            f[out_base..out_base + d_dim].copy_from_slice(&params.fc_b);
            for h in 0..h_dim {
                let p = cc.pooled[t * h_dim + h];
                if p == 0.0 {
                    continue;
                }
                let w_base = h * d_dim;
                for d in 0..d_dim {
                    f[out_base + d] += p * params.fc_w[w_base + d];
                }
            }
        }

        let mut e = vec![0.0; t_len * d_dim];
        let mut norms = vec![0.0; t_len];
        let mut degenerate = vec![false; t_len];
        let mut embeddings = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let row = &f[t * d_dim..(t + 1) * d_dim];
            if cfg.use_l2norm {
                let (unit, degen) = l2_normalize(row);
                norms[t] = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                degenerate[t] = degen;
                e[t * d_dim..(t + 1) * d_dim].copy_from_slice(&unit);
                embeddings.push(unit);
            } else {
                norms[t] = 1.0;
                e[t * d_dim..(t + 1) * d_dim].copy_from_slice(row);
                embeddings.push(row.to_vec());
            }
        }
        cc.f = f;
        cc.norms = norms;
        cc.e = e;

        outputs.push(EmbeddingSequence {
            video_id: clip.video_id.clone(),
            embeddings,
            clip_offset: clip.offset,
            degenerate,
        });
    }

    let cache = ForwardCache {
        mode,
        clips: caches,
        bn_var,
        dims: (c_in, h_dim, d_dim, kernel),
    };
    Ok((outputs, cache))
}

/// Backpropagate `grad_embeddings` (one `T x D` grid per clip, matching
/// the forward batch) to gradients w.r.t. every trainable parameter.
pub fn backward_batch(
    grad_embeddings: &[Vec<Vec<f64>>],
    cache: &ForwardCache,
    params: &HeadParams,
    cfg: &HeadConfig,
) -> Result<HeadGrads> {
    if cache.mode != Mode::Train {
        return Err(Error::Config(
            "backward requires a cache from a train-mode forward".into(),
        ));
    }
    let (c_in, h_dim, d_dim, kernel) = cache.dims;
    if (c_in, h_dim, d_dim, kernel)
        != (
            cfg.in_channels,
            cfg.hidden_channels,
            cfg.out_dim,
            cfg.kernel_size,
        )
        || !params.matches(cfg)
    {
        return Err(Error::Dim("cache/params/config mismatch".into()));
    }
    if grad_embeddings.len() != cache.clips.len() {
        return Err(Error::Dim(format!(
            "{} gradient grids for {} cached clips",
            grad_embeddings.len(),
            cache.clips.len()
        )));
    }

    let mut grads = HeadGrads::zeros_like(params);
    let pad = cfg.padding() as isize;

    // Stages 6'..3' per clip, holding on to g_y for the joint BN stage.
    let mut g_y_all: Vec<Vec<f64>> = Vec::with_capacity(cache.clips.len());
    for (cc, g_emb) in cache.clips.iter().zip(grad_embeddings) {
        let (t_len, s_len) = (cc.frames, cc.regions);
        if g_emb.len() != t_len {
            return Err(Error::Dim("gradient grid length != clip length".into()));
        }

        // 6': L2 normalization Jacobian (I - e e^T) / ||f||.
        let mut g_f = vec![0.0; t_len * d_dim];
        for t in 0..t_len {
            let g = &g_emb[t];
            if g.len() != d_dim {
                return Err(Error::Dim("gradient row width != out_dim".into()));
            }
            let base = t * d_dim;
            if cfg.use_l2norm {
                let norm = cc.norms[t];
                if norm > NORM_FLOOR {
                    let e_row = &cc.e[base..base + d_dim];
                    let g_dot_e: f64 = g.iter().zip(e_row).map(|(a, b)| a * b).sum();
                    for d in 0..d_dim {
                        g_f[base + d] = (g[d] - g_dot_e * e_row[d]) / norm;
                    }
                }
                // degenerate rows emitted a constant zero: no gradient
            } else {
                g_f[base..base + d_dim].copy_from_slice(g);
            }
        }

        // 5': linear layer.
        let mut g_pool = vec![0.0; t_len * h_dim];
        for t in 0..t_len {
            for d in 0..d_dim {
                let g = g_f[t * d_dim + d];
                if g == 0.0 {
                    continue;
                }
                grads.fc_b[d] += g;
                for h in 0..h_dim {
                    grads.fc_w[h * d_dim + d] += cc.pooled[t * h_dim + h] * g;
                    g_pool[t * h_dim + h] += params.fc_w[h * d_dim + d] * g;
                }
            }
        }

        // 4': pooling.
        let mut g_a = vec![0.0; t_len * s_len * h_dim];
        match cfg.pooling {
            Pooling::Max => {
                for t in 0..t_len {
                    for h in 0..h_dim {
                        let s = cc.argmax[t * h_dim + h];
                        g_a[(t * s_len + s) * h_dim + h] = g_pool[t * h_dim + h];
                    }
                }
            }
            Pooling::Mean => {
                let inv = 1.0 / s_len as f64;
                for t in 0..t_len {
                    for h in 0..h_dim {
                        let g = g_pool[t * h_dim + h] * inv;
                        for s in 0..s_len {
                            g_a[(t * s_len + s) * h_dim + h] = g;
                        }
                    }
                }
            }
        }

        // 3': Leaky ReLU.
        let slope = cfg.leaky_slope;
        let g_y: Vec<f64> = g_a
            .iter()
            .zip(&cc.y)
            .map(|(&g, &y)| if y > 0.0 { g } else { slope * g })
            .collect();
        g_y_all.push(g_y);
    }

    // 2': batch norm backward over the joint batch statistics.
    let g_z_all: Vec<Vec<f64>> = if cfg.use_batchnorm {
        let total: usize = cache.clips.iter().map(|c| c.frames * c.regions).sum();
        let total_f = total as f64;
        let mut sum_gy = vec![0.0; h_dim];
        let mut sum_gy_xhat = vec![0.0; h_dim];
        for (cc, g_y) in cache.clips.iter().zip(&g_y_all) {
            for pos in 0..cc.frames * cc.regions {
                for h in 0..h_dim {
                    let idx = pos * h_dim + h;
                    sum_gy[h] += g_y[idx];
                    sum_gy_xhat[h] += g_y[idx] * cc.xhat[idx];
                }
            }
        }
        for h in 0..h_dim {
            grads.bn_beta[h] = sum_gy[h];
            grads.bn_gamma[h] = sum_gy_xhat[h];
        }
        cache
            .clips
            .iter()
            .zip(&g_y_all)
            .map(|(cc, g_y)| {
                let mut g_z = vec![0.0; g_y.len()];
                for pos in 0..cc.frames * cc.regions {
                    for h in 0..h_dim {
                        let idx = pos * h_dim + h;
                        let inv = 1.0 / (cache.bn_var[h] + BN_EPS).sqrt();
                        g_z[idx] = params.bn_gamma[h]
                            * inv
                            * (g_y[idx]
                                - sum_gy[h] / total_f
                                - cc.xhat[idx] * sum_gy_xhat[h] / total_f);
                    }
                }
                g_z
            })
            .collect()
    } else {
        g_y_all
    };

    // 1': temporal convolution.
    for (cc, g_z) in cache.clips.iter().zip(&g_z_all) {
        let (t_len, s_len) = (cc.frames, cc.regions);
        for t in 0..t_len {
            for s in 0..s_len {
                let out_base = (t * s_len + s) * h_dim;
                for h in 0..h_dim {
                    let g = g_z[out_base + h];
                    if g == 0.0 {
                        continue;
                    }
                    grads.conv_b[h] += g;
                    for k in 0..kernel {
                        let src_t = t as isize + k as isize - pad;
                        if src_t < 0 || src_t >= t_len as isize {
                            continue;
                        }
                        let in_base = (src_t as usize * s_len + s) * c_in;
                        for c in 0..c_in {
                            grads.conv_w[(k * c_in + c) * h_dim + h] +=
                                g * cc.x[in_base + c];
                        }
                    }
                }
            }
        }
    }

    Ok(grads)
}
