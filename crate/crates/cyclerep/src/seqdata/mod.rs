//! Synthetic periodic sequences with injected anomalies, plus the frozen
//! per-frame encoder that stands in for a pretrained backbone.
//!
//! A sequence is a list of frames; each frame is an S x C_raw grid of
//! intensities. The first `num_periodic_regions` regions carry a random
//! K-harmonic function of the cycle phase, the rest are constant
//! background. Anomalies perturb the phase dynamics or the amplitude and
//! mark the affected frames non-periodic.

pub mod io;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::rng::gauss;

/// One observation frame: `num_regions x raw_channels` intensities.
pub type ObservationFrame = Mat;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameLabel {
    Periodic,
    NonPeriodic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    /// Phase stops advancing for the duration of the interval.
    Freeze,
    /// Phase is offset by `magnitude` radians inside the interval.
    PhaseJump,
    /// Periodic signal scaled by `magnitude` (a factor in [0, 1]).
    AmplitudeDrop,
    /// Phase advances at 1/`magnitude` cycles per frame (a new period).
    PeriodChange,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnomalySpec {
    pub kind: AnomalyKind,
    pub start: usize,
    pub length: usize,
    pub magnitude: f64,
}

impl AnomalySpec {
    #[inline]
    pub fn contains(&self, t: usize) -> bool {
        t >= self.start && t < self.start + self.length
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub num_frames: usize,
    /// Frames per cycle.
    pub period: u32,
    pub num_regions: usize,
    pub raw_channels: usize,
    pub num_periodic_regions: usize,
    /// Harmonics per periodic region channel.
    pub harmonics_per_region: usize,
    pub noise_sigma: f64,
    #[serde(default)]
    pub anomalies: Vec<AnomalySpec>,
    pub seed: u64,
    /// Seed of the underlying process (harmonics and background). When
    /// set, several sequences can record the same process — different
    /// noise, phase and anomalies — the way multiple videos capture one
    /// production line. Defaults to `seed` (every sequence its own
    /// process).
    #[serde(default)]
    pub process_seed: Option<u64>,
    /// Phase of frame 0, as a fraction of a cycle in [0, 1).
    #[serde(default)]
    pub initial_phase: f64,
    /// Amplitude of a slow additive drift (lighting analog). The drift
    /// path is per recording; how strongly each cell responds to it is a
    /// fixed property of the process.
    #[serde(default)]
    pub drift_sigma: f64,
    /// Amplitude of a slow multiplicative gain flicker on the periodic
    /// signal (contrast analog), per recording.
    #[serde(default)]
    pub gain_sigma: f64,
    /// Amplitude of unrelated oscillations in the background regions
    /// (background-machinery analog); their period and phase are drawn
    /// per recording and never match the process period. The last
    /// background region stays distractor-free.
    #[serde(default)]
    pub distractor_amplitude: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            num_frames: 400,
            period: 20,
            num_regions: 8,
            raw_channels: 6,
            num_periodic_regions: 5,
            harmonics_per_region: 3,
            noise_sigma: 0.05,
            anomalies: Vec::new(),
            seed: 0,
            process_seed: None,
            initial_phase: 0.0,
            drift_sigma: 0.0,
            gain_sigma: 0.0,
            distractor_amplitude: 0.0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_frames == 0 {
            return Err(Error::Config("num_frames must be >= 1".into()));
        }
        if self.period < 2 {
            return Err(Error::Config(format!(
                "period must be >= 2, got {}",
                self.period
            )));
        }
        if self.num_periodic_regions < 1 || self.num_periodic_regions > self.num_regions {
            return Err(Error::Config(format!(
                "num_periodic_regions must be in [1, num_regions={}], got {}",
                self.num_regions, self.num_periodic_regions
            )));
        }
        if self.raw_channels == 0 || self.harmonics_per_region == 0 {
            return Err(Error::Config(
                "raw_channels and harmonics_per_region must be >= 1".into(),
            ));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        if !(0.0..1.0).contains(&self.initial_phase) {
            return Err(Error::Config(format!(
                "initial_phase must be in [0, 1), got {}",
                self.initial_phase
            )));
        }
        if self.drift_sigma < 0.0 || self.gain_sigma < 0.0 || self.distractor_amplitude < 0.0 {
            return Err(Error::Config(
                "drift_sigma, gain_sigma and distractor_amplitude must be >= 0".into(),
            ));
        }
        let mut spans: Vec<(usize, usize)> = Vec::new();
        for a in &self.anomalies {
            if a.length == 0 {
                return Err(Error::Config("anomaly length must be >= 1".into()));
            }
            if a.start + a.length > self.num_frames {
                return Err(Error::Config(format!(
                    "anomaly [{}, {}) out of bounds for {} frames",
                    a.start,
                    a.start + a.length,
                    self.num_frames
                )));
            }
            match a.kind {
                AnomalyKind::AmplitudeDrop => {
                    if !(0.0..=1.0).contains(&a.magnitude) {
                        return Err(Error::Config(format!(
                            "amplitude_drop magnitude must be in [0, 1], got {}",
                            a.magnitude
                        )));
                    }
                }
                AnomalyKind::PeriodChange => {
                    if !(a.magnitude >= 2.0) {
                        return Err(Error::Config(format!(
                            "period_change magnitude (new period) must be >= 2, got {}",
                            a.magnitude
                        )));
                    }
                }
                AnomalyKind::PhaseJump => {
                    if !a.magnitude.is_finite() {
                        return Err(Error::Config("phase_jump magnitude must be finite".into()));
                    }
                }
                AnomalyKind::Freeze => {}
            }
            spans.push((a.start, a.start + a.length));
        }
        spans.sort_unstable();
        for w in spans.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(Error::Config(format!(
                    "anomalies overlap: [{}, {}) and [{}, {})",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        Ok(())
    }
}

/// One synthetic "video": frames plus per-frame periodicity labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameSequence {
    pub video_id: String,
    pub frames: Vec<ObservationFrame>,
    pub frame_labels: Vec<FrameLabel>,
    /// Ground-truth frames per cycle (metadata, not used by training).
    pub sample_period: f64,
    pub seed: u64,
}

impl FrameSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn num_regions(&self) -> usize {
        self.frames.first().map_or(0, Mat::rows)
    }

    pub fn raw_channels(&self) -> usize {
        self.frames.first().map_or(0, Mat::cols)
    }

    /// True when no frame is labeled non-periodic.
    pub fn is_fully_periodic(&self) -> bool {
        self.frame_labels.iter().all(|l| *l == FrameLabel::Periodic)
    }
}

/// Encoded counterpart of [`FrameSequence`]: per-frame S x C feature grids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSequence {
    pub video_id: String,
    pub features: Vec<Mat>,
    pub frame_labels: Vec<FrameLabel>,
    pub sample_period: f64,
    pub seed: u64,
}

impl FeatureSequence {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn num_regions(&self) -> usize {
        self.features.first().map_or(0, Mat::rows)
    }

    pub fn channels(&self) -> usize {
        self.features.first().map_or(0, Mat::cols)
    }

    pub fn is_fully_periodic(&self) -> bool {
        self.frame_labels.iter().all(|l| *l == FrameLabel::Periodic)
    }
}

/// Frozen random per-region encoder: `tanh(x . projection + bias)`.
///
/// Parameters are a pure function of the seed and never train.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    projection: Mat,
    bias: Vec<f64>,
    seed: u64,
}

impl EncoderParams {
    pub fn from_seed(seed: u64, raw_channels: usize, out_channels: usize) -> Self {
        let mut rng = StdRng::seed_from_u64(seed.wrapping_add(0x5ea1_ed00));
        let scale = 1.0 / (raw_channels as f64).sqrt();
        let mut projection = Mat::zeros(raw_channels, out_channels);
        for r in 0..raw_channels {
            for c in 0..out_channels {
                projection.set(r, c, gauss(&mut rng) * scale);
            }
        }
        let bias = (0..out_channels).map(|_| gauss(&mut rng) * 0.1).collect();
        EncoderParams {
            projection,
            bias,
            seed,
        }
    }

    pub fn raw_channels(&self) -> usize {
        self.projection.rows()
    }

    pub fn out_channels(&self) -> usize {
        self.projection.cols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Stationary AR(1) path with standard deviation `sigma`, or all zeros
/// when `sigma` is zero (no RNG draws consumed).
fn ar1_path(rng: &mut StdRng, n: usize, rho: f64, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![0.0; n];
    }
    let innovation = (1.0 - rho * rho).sqrt() * sigma;
    let mut x = sigma * gauss(rng);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(x);
        x = rho * x + innovation * gauss(rng);
    }
    out
}

/// Per-(region, channel) harmonic coefficients of the periodic signal.
struct HarmonicTable {
    /// [region][channel][harmonic] -> (cos coeff, sin coeff)
    coeffs: Vec<Vec<Vec<(f64, f64)>>>,
    /// [region][channel] DC offset
    offsets: Vec<Vec<f64>>,
}

impl HarmonicTable {
    /// Per-cell waveform RMS; fixed so the signal-to-nuisance ratio does
    /// not depend on the luck of the coefficient draw.
    const RMS: f64 = 0.75;

    fn sample(rng: &mut StdRng, regions: usize, channels: usize, harmonics: usize) -> Self {
        let mut coeffs = Vec::with_capacity(regions);
        let mut offsets = Vec::with_capacity(regions);
        for _ in 0..regions {
            let mut per_channel = Vec::with_capacity(channels);
            let mut per_channel_off = Vec::with_capacity(channels);
            for _ in 0..channels {
                let mut ks: Vec<(f64, f64)> = (1..=harmonics)
                    .map(|k| {
                        let a = rng.gen_range(-1.0..1.0) / k as f64;
                        let b = rng.gen_range(-1.0..1.0) / k as f64;
                        (a, b)
                    })
                    .collect();
                // normalize the waveform energy: rms^2 = sum(a^2+b^2)/2
                let energy: f64 = ks.iter().map(|(a, b)| a * a + b * b).sum::<f64>() / 2.0;
                if energy > 0.0 {
                    let scale = Self::RMS / energy.sqrt();
                    for (a, b) in ks.iter_mut() {
                        *a *= scale;
                        *b *= scale;
                    }
                }
                per_channel.push(ks);
                per_channel_off.push(rng.gen_range(-0.5..0.5));
            }
            coeffs.push(per_channel);
            offsets.push(per_channel_off);
        }
        HarmonicTable { coeffs, offsets }
    }

    #[inline]
    fn eval(&self, region: usize, channel: usize, theta: f64) -> f64 {
        let mut v = self.offsets[region][channel];
        for (k, (a, b)) in self.coeffs[region][channel].iter().enumerate() {
            let kt = (k + 1) as f64 * theta;
            v += a * kt.cos() + b * kt.sin();
        }
        v
    }
}

/// Generate one synthetic sequence. Deterministic given `cfg.seed`.
///
/// Phase advances by one period-th of a cycle per frame; anomaly
/// intervals freeze it, offset it, rescale the signal, or change the
/// advance rate, and their frames are labeled non-periodic. While the
/// dynamics are untouched the phase is recomputed from the frame index
/// so anomaly-free zero-noise sequences close their cycles bit-exactly.
pub fn generate_sequence(cfg: &GeneratorConfig) -> Result<FrameSequence> {
    cfg.validate()?;
    // the observed process (harmonics, background scene) and the
    // recording (noise) come from independent streams so sequences can
    // share a process while differing in everything else
    let mut process_rng = StdRng::seed_from_u64(crate::rng::derive_seed(
        cfg.process_seed.unwrap_or(cfg.seed),
        0x9d0c,
    ));
    let mut rng = StdRng::seed_from_u64(crate::rng::derive_seed(cfg.seed, 0x4015e));

    let table = HarmonicTable::sample(
        &mut process_rng,
        cfg.num_periodic_regions,
        cfg.raw_channels,
        cfg.harmonics_per_region,
    );
    let background: Vec<Vec<f64>> = (cfg.num_periodic_regions..cfg.num_regions)
        .map(|_| {
            (0..cfg.raw_channels)
                .map(|_| process_rng.gen_range(-1.0..1.0))
                .collect()
        })
        .collect();
    // fixed scene responses to the nuisances
    let drift_coupling: Vec<Vec<f64>> = (0..cfg.num_regions)
        .map(|_| {
            (0..cfg.raw_channels)
                .map(|_| process_rng.gen_range(0.4..1.2))
                .collect()
        })
        .collect();
    let distractor_coupling: Vec<Vec<f64>> = (cfg.num_periodic_regions..cfg.num_regions)
        .map(|_| {
            (0..cfg.raw_channels)
                .map(|_| process_rng.gen_range(-1.0..1.0))
                .collect()
        })
        .collect();

    // recording-level nuisance paths; correlation times are long
    // relative to a training clip, so a clip sees a near-constant
    // nuisance level while different clips see very different ones
    let drift_path = ar1_path(&mut rng, cfg.num_frames, 0.997, cfg.drift_sigma);
    let gain_path = ar1_path(&mut rng, cfg.num_frames, 0.995, cfg.gain_sigma);
    // distractor oscillators: every background region except the last,
    // with periods kept away from the process period
    let n_distractors = (cfg.num_regions - cfg.num_periodic_regions).saturating_sub(1);
    let distractors: Vec<(f64, f64)> = (0..n_distractors)
        .map(|_| {
            let u: f64 = rng.gen_range(0.0..1.0);
            let factor = if u < 0.5 {
                0.3 + u * 0.9
            } else {
                1.3 + (u - 0.5) * 3.4
            };
            let period_d = f64::from(cfg.period) * factor;
            let phase_d: f64 = rng.gen_range(0.0..TAU);
            (period_d, phase_d)
        })
        .collect();

    let period = f64::from(cfg.period);
    let base_inc = 1.0 / period;
    let mut phase = cfg.initial_phase; // current phase, in cycles, [0, 1)
    let mut exact = true; // phase still equals initial_phase + (t mod P)/P

    let mut frames = Vec::with_capacity(cfg.num_frames);
    let mut labels = Vec::with_capacity(cfg.num_frames);

    for t in 0..cfg.num_frames {
        let active = cfg.anomalies.iter().find(|a| a.contains(t));
        let mut theta_cycles = phase;
        let mut amplitude = 1.0;
        if let Some(a) = active {
            match a.kind {
                AnomalyKind::PhaseJump => {
                    theta_cycles = (phase + a.magnitude / TAU).rem_euclid(1.0);
                }
                AnomalyKind::AmplitudeDrop => amplitude = a.magnitude,
                AnomalyKind::Freeze | AnomalyKind::PeriodChange => {}
            }
        }
        let theta = TAU * theta_cycles;

        let gain = if cfg.gain_sigma > 0.0 {
            (1.0 + gain_path[t]).max(0.1)
        } else {
            1.0
        };
        let mut frame = Mat::zeros(cfg.num_regions, cfg.raw_channels);
        for s in 0..cfg.num_regions {
            let bg = s.checked_sub(cfg.num_periodic_regions);
            for c in 0..cfg.raw_channels {
                let mut v = match bg {
                    None => amplitude * gain * table.eval(s, c, theta),
                    Some(b) => {
                        let mut v = background[b][c];
                        if cfg.distractor_amplitude > 0.0 && b < distractors.len() {
                            let (period_d, phase_d) = distractors[b];
                            v += cfg.distractor_amplitude
                                * distractor_coupling[b][c]
                                * (TAU * t as f64 / period_d + phase_d).sin();
                        }
                        v
                    }
                };
                if cfg.drift_sigma > 0.0 {
                    v += drift_coupling[s][c] * drift_path[t];
                }
                if cfg.noise_sigma > 0.0 {
                    v += cfg.noise_sigma * gauss(&mut rng);
                }
                frame.set(s, c, v);
            }
        }
        frames.push(frame);
        labels.push(if active.is_some() {
            FrameLabel::NonPeriodic
        } else {
            FrameLabel::Periodic
        });

        // Advance phase for frame t+1. A transition is governed by an
        // anomaly only when both endpoints lie inside its interval.
        let both = cfg
            .anomalies
            .iter()
            .find(|a| a.contains(t) && a.contains(t + 1));
        let inc = match both.map(|a| a.kind) {
            Some(AnomalyKind::Freeze) => 0.0,
            Some(AnomalyKind::PeriodChange) => 1.0 / both.unwrap().magnitude,
            _ => base_inc,
        };
        #[allow(clippy::float_cmp)]
        if exact && inc == base_inc {
            phase = (cfg.initial_phase + ((t + 1) % cfg.period as usize) as f64 / period).fract();
        } else {
            exact = false;
            phase = (phase + inc).fract();
        }
    }

    Ok(FrameSequence {
        video_id: format!("seq-{:08x}", cfg.seed),
        frames,
        frame_labels: labels,
        sample_period: period,
        seed: cfg.seed,
    })
}

/// Run the frozen encoder over every frame. Pure and label-preserving.
pub fn encode(seq: &FrameSequence, enc: &EncoderParams) -> Result<FeatureSequence> {
    if seq.raw_channels() != enc.raw_channels() {
        return Err(Error::Dim(format!(
            "sequence has {} raw channels, encoder expects {}",
            seq.raw_channels(),
            enc.raw_channels()
        )));
    }
    let c_out = enc.out_channels();
    let mut features = Vec::with_capacity(seq.len());
    for frame in &seq.frames {
        if !frame.all_finite() {
            return Err(Error::Numeric(format!(
                "non-finite observation in {}",
                seq.video_id
            )));
        }
        let mut out = Mat::zeros(frame.rows(), c_out);
        for s in 0..frame.rows() {
            let row = frame.row(s);
            for c in 0..c_out {
                let mut acc = enc.bias[c];
                for (r, &x) in row.iter().enumerate() {
                    acc += x * enc.projection.get(r, c);
                }
                out.set(s, c, acc.tanh());
            }
        }
        features.push(out);
    }
    Ok(FeatureSequence {
        video_id: seq.video_id.clone(),
        features,
        frame_labels: seq.frame_labels.clone(),
        sample_period: seq.sample_period,
        seed: seq.seed,
    })
}
