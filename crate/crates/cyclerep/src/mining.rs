//! Triplet mining from the self-similarity matrix, and the feature-space
//! augmentation chain applied per triplet role at loss time.
//!
//! Mining always runs on the un-augmented embeddings: none of the mining
//! entry points accept an [`AugmentConfig`], so the triplet set cannot
//! depend on augmentation by construction.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::head::Clip;
use crate::rng::{derive_seed, gauss};
use crate::tsm::SimilarityMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TripletSet {
    pub triplets: Vec<Triplet>,
}

impl TripletSet {
    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    /// Debug dump: `clip_id,anchor,positive,negative,s_ap,s_an` rows.
    pub fn to_csv(&self, clip_id: &str, tsm: &SimilarityMatrix) -> String {
        let mut out = String::from("clip_id,anchor,positive,negative,s_ap,s_an\n");
        for t in &self.triplets {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                clip_id,
                t.anchor,
                t.positive,
                t.negative,
                tsm.get(t.anchor, t.positive),
                tsm.get(t.anchor, t.negative)
            ));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    MeanThreshold,
    Topk,
    Adjacent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinerConfig {
    pub strategy: Strategy,
    /// Mean-threshold margin on cosine similarity.
    pub beta: f64,
    /// Positives/negatives per anchor for top-k mining.
    pub k: usize,
    pub max_triplets_per_anchor: usize,
    pub rng_seed: u64,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            strategy: Strategy::MeanThreshold,
            beta: 0.3,
            k: 10,
            max_triplets_per_anchor: 16,
            rng_seed: 0,
        }
    }
}

impl MinerConfig {
    pub fn validate(&self) -> Result<()> {
        match self.strategy {
            Strategy::MeanThreshold => {
                if !(self.beta > 0.0) {
                    return Err(Error::Config(format!(
                        "mean_threshold requires beta > 0, got {}",
                        self.beta
                    )));
                }
            }
            Strategy::Topk => {
                if self.k < 1 {
                    return Err(Error::Config("topk requires k >= 1".into()));
                }
            }
            Strategy::Adjacent => {}
        }
        if self.max_triplets_per_anchor == 0 {
            return Err(Error::Config("max_triplets_per_anchor must be >= 1".into()));
        }
        Ok(())
    }
}

/// Mine triplets with the configured strategy. Deterministic given
/// `(tsm, cfg)`; subsampling uses `cfg.rng_seed`.
pub fn mine(tsm: &SimilarityMatrix, cfg: &MinerConfig) -> Result<TripletSet> {
    cfg.validate()?;
    match cfg.strategy {
        Strategy::MeanThreshold => mine_mean_threshold(tsm, cfg),
        Strategy::Topk => mine_topk(tsm, cfg),
        Strategy::Adjacent => mine_adjacent(tsm),
    }
}

/// Positives are frames at least `beta` above the anchor's off-diagonal
/// row mean, negatives at least `beta` below; the triplet count per
/// anchor is data-dependent. Anchors missing either side yield nothing.
pub fn mine_mean_threshold(tsm: &SimilarityMatrix, cfg: &MinerConfig) -> Result<TripletSet> {
    if !(cfg.beta > 0.0) {
        return Err(Error::Config("beta must be > 0".into()));
    }
    let n = tsm.len();
    let mut rng = StdRng::seed_from_u64(cfg.rng_seed);
    let mut triplets = Vec::new();
    for a in 0..n {
        let mu = tsm.row_mean_excluding_self(a);
        let row = tsm.row(a);
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for (j, &s) in row.iter().enumerate() {
            if j == a {
                continue;
            }
            if s >= mu + cfg.beta {
                pos.push(j);
            } else if s <= mu - cfg.beta {
                neg.push(j);
            }
        }
        push_cross_product(
            &mut triplets,
            a,
            &pos,
            &neg,
            cfg.max_triplets_per_anchor,
            &mut rng,
        );
    }
    Ok(TripletSet { triplets })
}

/// Per anchor, the `k` most similar frames are positives and the `k`
/// least similar are negatives (ties broken by lower index).
pub fn mine_topk(tsm: &SimilarityMatrix, cfg: &MinerConfig) -> Result<TripletSet> {
    let n = tsm.len();
    if cfg.k >= n {
        return Err(Error::Config(format!(
            "topk k={} needs at least k+1={} frames, clip has {n}",
            cfg.k,
            cfg.k + 1
        )));
    }
    let mut rng = StdRng::seed_from_u64(cfg.rng_seed);
    let mut triplets = Vec::new();
    for a in 0..n {
        let row = tsm.row(a);
        let mut order: Vec<usize> = (0..n).filter(|j| *j != a).collect();
        // descending similarity, ties toward the lower index
        order.sort_by(|&x, &y| {
            row[y]
                .partial_cmp(&row[x])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(x.cmp(&y))
        });
        let pos: Vec<usize> = order[..cfg.k].to_vec();
        // ascending similarity, ties toward the lower index
        let mut tail: Vec<usize> = order.clone();
        tail.sort_by(|&x, &y| {
            row[x]
                .partial_cmp(&row[y])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(x.cmp(&y))
        });
        let neg: Vec<usize> = tail[..cfg.k].to_vec();
        push_cross_product(
            &mut triplets,
            a,
            &pos,
            &neg,
            cfg.max_triplets_per_anchor,
            &mut rng,
        );
    }
    Ok(TripletSet { triplets })
}

/// One triplet per anchor: nearest frame as positive, second nearest as
/// negative.
pub fn mine_adjacent(tsm: &SimilarityMatrix) -> Result<TripletSet> {
    let n = tsm.len();
    if n < 3 {
        return Err(Error::Config(format!(
            "adjacent mining needs at least 3 frames, clip has {n}"
        )));
    }
    let mut triplets = Vec::with_capacity(n);
    for a in 0..n {
        let row = tsm.row(a);
        let mut order: Vec<usize> = (0..n).filter(|j| *j != a).collect();
        order.sort_by(|&x, &y| {
            row[y]
                .partial_cmp(&row[x])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(x.cmp(&y))
        });
        triplets.push(Triplet {
            anchor: a,
            positive: order[0],
            negative: order[1],
        });
    }
    Ok(TripletSet { triplets })
}

/// Cross product of positives and negatives (skipping degenerate pairs),
/// uniformly subsampled to `cap` per anchor.
fn push_cross_product(
    out: &mut Vec<Triplet>,
    anchor: usize,
    pos: &[usize],
    neg: &[usize],
    cap: usize,
    rng: &mut StdRng,
) {
    if pos.is_empty() || neg.is_empty() {
        return;
    }
    let mut pairs: Vec<Triplet> = Vec::with_capacity(pos.len() * neg.len());
    for &p in pos {
        for &n in neg {
            if p != n {
                pairs.push(Triplet {
                    anchor,
                    positive: p,
                    negative: n,
                });
            }
        }
    }
    if pairs.len() <= cap {
        out.extend(pairs);
        return;
    }
    let mut chosen = rand::seq::index::sample(rng, pairs.len(), cap).into_vec();
    chosen.sort_unstable();
    out.extend(chosen.into_iter().map(|i| pairs[i]));
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentMode {
    PositivesOnly,
    All,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Anchor,
    Positive,
    Negative,
}

/// Feature-space analogs of image augmentations: additive noise
/// (brightness), global scale (contrast), per-channel offsets (color
/// jitter), temporal smoothing (blur) and region masking (crop).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub mode: AugmentMode,
    pub noise_sigma: f64,
    pub scale_range: [f64; 2],
    pub channel_jitter_sigma: f64,
    pub smooth_window: usize,
    pub region_mask_prob: f64,
    pub rng_seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            mode: AugmentMode::PositivesOnly,
            noise_sigma: 0.05,
            scale_range: [0.8, 1.2],
            channel_jitter_sigma: 0.05,
            smooth_window: 3,
            region_mask_prob: 0.2,
            rng_seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.scale_range;
        if !(lo > 0.0) || lo > hi {
            return Err(Error::Config(format!(
                "scale_range must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
            )));
        }
        if self.smooth_window == 0 {
            return Err(Error::Config("smooth_window must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.region_mask_prob) {
            return Err(Error::Config("region_mask_prob must be in [0, 1]".into()));
        }
        if self.noise_sigma < 0.0 || self.channel_jitter_sigma < 0.0 {
            return Err(Error::Config("augment sigmas must be >= 0".into()));
        }
        Ok(())
    }

    pub fn applies_to(&self, role: Role) -> bool {
        match self.mode {
            AugmentMode::None => false,
            AugmentMode::All => true,
            AugmentMode::PositivesOnly => role == Role::Positive,
        }
    }
}

/// Apply the augmentation chain to a clip window if the mode selects the
/// role; otherwise the input comes back unchanged. Deterministic given
/// `(cfg.rng_seed, call_index)`.
pub fn augment(clip: &Clip, cfg: &AugmentConfig, role: Role, call_index: u64) -> Result<Clip> {
    cfg.validate()?;
    if !cfg.applies_to(role) {
        return Ok(clip.clone());
    }
    let mut rng = StdRng::seed_from_u64(derive_seed(cfg.rng_seed, call_index));
    let (t_len, s_len, c_len) = (clip.frames, clip.regions, clip.channels);
    let mut data = clip.data.clone();

    if cfg.noise_sigma > 0.0 {
        for v in data.iter_mut() {
            *v += cfg.noise_sigma * gauss(&mut rng);
        }
    }

    let scale = rng.gen_range(cfg.scale_range[0]..=cfg.scale_range[1]);
    if scale != 1.0 {
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    if cfg.channel_jitter_sigma > 0.0 {
        let offsets: Vec<f64> = (0..c_len)
            .map(|_| cfg.channel_jitter_sigma * gauss(&mut rng))
            .collect();
        for pos in 0..t_len * s_len {
            for c in 0..c_len {
                data[pos * c_len + c] += offsets[c];
            }
        }
    }

    if cfg.smooth_window > 1 {
        let r1 = (cfg.smooth_window - 1) / 2;
        let r2 = cfg.smooth_window / 2;
        let src = data.clone();
        for t in 0..t_len {
            let lo = t.saturating_sub(r1);
            let hi = (t + r2).min(t_len - 1);
            let count = (hi - lo + 1) as f64;
            for s in 0..s_len {
                for c in 0..c_len {
                    let mut sum = 0.0;
                    for u in lo..=hi {
                        sum += src[(u * s_len + s) * c_len + c];
                    }
                    data[(t * s_len + s) * c_len + c] = sum / count;
                }
            }
        }
    }

    if cfg.region_mask_prob > 0.0 {
        for s in 0..s_len {
            if rng.gen::<f64>() < cfg.region_mask_prob {
                for t in 0..t_len {
                    for c in 0..c_len {
                        data[(t * s_len + s) * c_len + c] = 0.0;
                    }
                }
            }
        }
    }

    Clip::new(
        clip.video_id.clone(),
        clip.offset,
        t_len,
        s_len,
        c_len,
        data,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::head::EmbeddingSequence;
    use crate::tsm::compute_tsm;

    /// Build a TSM directly from raw similarity rows (unit 2-D vectors
    /// whose pairwise dot products we control are overkill here; tests
    /// construct matrices through embeddings instead).
    fn tsm_from_angles(angles: &[f64]) -> SimilarityMatrix {
        let emb = EmbeddingSequence {
            video_id: "t".into(),
            embeddings: angles.iter().map(|a| vec![a.cos(), a.sin()]).collect(),
            clip_offset: 0,
            degenerate: vec![false; angles.len()],
        };
        compute_tsm(&emb).unwrap()
    }

    #[test]
    fn mean_threshold_picks_the_spec_example() {
        // anchor row to others: [0.9, 0.0, -0.9], mean 0, beta 0.3
        let angles = [0.0_f64, 0.9_f64.acos(), std::f64::consts::FRAC_PI_2, (-0.9_f64).acos()];
        let tsm = tsm_from_angles(&angles);
        let cfg = MinerConfig::default();
        let set = mine_mean_threshold(&tsm, &cfg).unwrap();
        let from_anchor0: Vec<_> = set.triplets.iter().filter(|t| t.anchor == 0).collect();
        assert_eq!(from_anchor0.len(), 1);
        assert_eq!(from_anchor0[0].positive, 1);
        assert_eq!(from_anchor0[0].negative, 3);
    }

    #[test]
    fn constant_rows_yield_no_mean_threshold_triplets() {
        let tsm = tsm_from_angles(&[0.3; 6]);
        let set = mine_mean_threshold(&tsm, &MinerConfig::default()).unwrap();
        assert!(set.is_empty());
    }

    #[test]
    fn mean_threshold_gap_is_at_least_two_beta() {
        let angles: Vec<f64> = (0..24)
            .map(|i| std::f64::consts::TAU * i as f64 / 8.0)
            .collect();
        let tsm = tsm_from_angles(&angles);
        let cfg = MinerConfig {
            beta: 0.3,
            ..MinerConfig::default()
        };
        let set = mine_mean_threshold(&tsm, &cfg).unwrap();
        assert!(!set.is_empty());
        for t in &set.triplets {
            let gap = tsm.get(t.anchor, t.positive) - tsm.get(t.anchor, t.negative);
            assert!(gap >= 2.0 * cfg.beta - 1e-12, "gap {gap}");
        }
    }

    #[test]
    fn topk_picks_extremes() {
        // anchor 0 row: [., 0.9, 0.0, -0.9]
        let angles = [0.0_f64, 0.9_f64.acos(), std::f64::consts::FRAC_PI_2, (-0.9_f64).acos()];
        let tsm = tsm_from_angles(&angles);
        let cfg = MinerConfig {
            strategy: Strategy::Topk,
            k: 1,
            ..MinerConfig::default()
        };
        let set = mine_topk(&tsm, &cfg).unwrap();
        let t0: Vec<_> = set.triplets.iter().filter(|t| t.anchor == 0).collect();
        assert_eq!(t0.len(), 1);
        assert_eq!((t0[0].positive, t0[0].negative), (1, 3));
    }

    #[test]
    fn topk_counts_are_k_squared_when_uncrowded() {
        let angles: Vec<f64> = (0..9).map(|i| i as f64 * 0.61).collect();
        let tsm = tsm_from_angles(&angles);
        let cfg = MinerConfig {
            strategy: Strategy::Topk,
            k: 2,
            max_triplets_per_anchor: 100,
            ..MinerConfig::default()
        };
        let set = mine_topk(&tsm, &cfg).unwrap();
        // N-1 = 8 >= 2k = 4: exactly k^2 per anchor
        assert_eq!(set.len(), 9 * 4);
    }

    #[test]
    fn topk_rejects_k_of_n() {
        let tsm = tsm_from_angles(&[0.0, 1.0, 2.0]);
        let cfg = MinerConfig {
            strategy: Strategy::Topk,
            k: 3,
            ..MinerConfig::default()
        };
        assert!(mine_topk(&tsm, &cfg).is_err());
    }

    #[test]
    fn topk_all_equal_rows_use_index_tie_break() {
        let tsm = tsm_from_angles(&[0.5; 5]);
        let cfg = MinerConfig {
            strategy: Strategy::Topk,
            k: 1,
            ..MinerConfig::default()
        };
        let set = mine_topk(&tsm, &cfg).unwrap();
        // anchor 0: both positive and negative resolve to index 1 -> p == n dropped
        assert!(set.triplets.iter().all(|t| t.positive != t.negative));
    }

    #[test]
    fn adjacent_takes_first_and_second_nearest() {
        // anchor 0 row: [., 0.9, 0.8, 0.1]
        let angles = [
            0.0_f64,
            0.9_f64.acos(),
            0.8_f64.acos(),
            0.1_f64.acos(),
        ];
        let tsm = tsm_from_angles(&angles);
        let set = mine_adjacent(&tsm).unwrap();
        assert_eq!(set.len(), 4);
        let t0 = set.triplets[0];
        assert_eq!((t0.anchor, t0.positive, t0.negative), (0, 1, 2));
        for t in &set.triplets {
            assert!(tsm.get(t.anchor, t.positive) >= tsm.get(t.anchor, t.negative));
        }
    }

    #[test]
    fn adjacent_needs_three_frames() {
        let tsm = tsm_from_angles(&[0.0, 1.0]);
        assert!(mine_adjacent(&tsm).is_err());
    }

    #[test]
    fn mining_is_deterministic() {
        let angles: Vec<f64> = (0..40).map(|i| (i as f64 * 1.7).sin() * 3.0).collect();
        let tsm = tsm_from_angles(&angles);
        for strategy in [Strategy::MeanThreshold, Strategy::Topk, Strategy::Adjacent] {
            let cfg = MinerConfig {
                strategy,
                k: 4,
                max_triplets_per_anchor: 5,
                rng_seed: 17,
                ..MinerConfig::default()
            };
            let a = mine(&tsm, &cfg).unwrap();
            let b = mine(&tsm, &cfg).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn all_strategies_respect_the_similarity_ordering() {
        let angles: Vec<f64> = (0..30).map(|i| (i as f64 * 0.73).cos() * 2.0).collect();
        let tsm = tsm_from_angles(&angles);
        for strategy in [Strategy::MeanThreshold, Strategy::Topk, Strategy::Adjacent] {
            let cfg = MinerConfig {
                strategy,
                k: 3,
                ..MinerConfig::default()
            };
            let set = mine(&tsm, &cfg).unwrap();
            for t in &set.triplets {
                assert!(
                    tsm.get(t.anchor, t.positive) >= tsm.get(t.anchor, t.negative),
                    "{strategy:?}: {t:?}"
                );
                assert!(t.anchor != t.positive && t.anchor != t.negative);
                assert!(t.positive != t.negative);
            }
        }
    }

    /// Exhaustive reference miners, straight from the definitions.
    mod reference {
        use super::*;

        pub fn mean_threshold(tsm: &SimilarityMatrix, beta: f64) -> Vec<Triplet> {
            let n = tsm.len();
            let mut out = Vec::new();
            for a in 0..n {
                let mut mu = 0.0;
                for j in 0..n {
                    if j != a {
                        mu += tsm.get(a, j);
                    }
                }
                mu /= (n - 1) as f64;
                for p in 0..n {
                    if p == a || !(tsm.get(a, p) >= mu + beta) {
                        continue;
                    }
                    for ng in 0..n {
                        if ng == a || ng == p || !(tsm.get(a, ng) <= mu - beta) {
                            continue;
                        }
                        out.push(Triplet {
                            anchor: a,
                            positive: p,
                            negative: ng,
                        });
                    }
                }
            }
            out
        }

        pub fn topk(tsm: &SimilarityMatrix, k: usize) -> Vec<Triplet> {
            let n = tsm.len();
            let mut out = Vec::new();
            for a in 0..n {
                let mut cand: Vec<usize> = (0..n).filter(|j| *j != a).collect();
                cand.sort_by(|&x, &y| {
                    tsm.get(a, y)
                        .partial_cmp(&tsm.get(a, x))
                        .unwrap()
                        .then(x.cmp(&y))
                });
                let pos = cand[..k].to_vec();
                let mut cand2: Vec<usize> = (0..n).filter(|j| *j != a).collect();
                cand2.sort_by(|&x, &y| {
                    tsm.get(a, x)
                        .partial_cmp(&tsm.get(a, y))
                        .unwrap()
                        .then(x.cmp(&y))
                });
                let neg = cand2[..k].to_vec();
                for &p in &pos {
                    for &ng in &neg {
                        if p != ng {
                            out.push(Triplet {
                                anchor: a,
                                positive: p,
                                negative: ng,
                            });
                        }
                    }
                }
            }
            out
        }
    }

    #[test]
    fn miners_match_the_exhaustive_reference_before_subsampling() {
        use std::collections::BTreeSet;
        for seed in 0..5u64 {
            let angles: Vec<f64> = (0..16)
                .map(|i| ((i as f64) * 1.37 + seed as f64 * 0.91).sin() * 2.7)
                .collect();
            let tsm = tsm_from_angles(&angles);
            let cfg = MinerConfig {
                max_triplets_per_anchor: usize::MAX / 2,
                k: 3,
                ..MinerConfig::default()
            };

            let got: BTreeSet<_> = mine_mean_threshold(&tsm, &cfg)
                .unwrap()
                .triplets
                .into_iter()
                .map(|t| (t.anchor, t.positive, t.negative))
                .collect();
            let want: BTreeSet<_> = reference::mean_threshold(&tsm, cfg.beta)
                .into_iter()
                .map(|t| (t.anchor, t.positive, t.negative))
                .collect();
            assert_eq!(got, want, "mean_threshold seed {seed}");

            let cfg_k = MinerConfig {
                strategy: Strategy::Topk,
                max_triplets_per_anchor: usize::MAX / 2,
                k: 3,
                ..MinerConfig::default()
            };
            let got: BTreeSet<_> = mine_topk(&tsm, &cfg_k)
                .unwrap()
                .triplets
                .into_iter()
                .map(|t| (t.anchor, t.positive, t.negative))
                .collect();
            let want: BTreeSet<_> = reference::topk(&tsm, 3)
                .into_iter()
                .map(|t| (t.anchor, t.positive, t.negative))
                .collect();
            assert_eq!(got, want, "topk seed {seed}");
        }
    }

    #[test]
    fn subsampling_caps_per_anchor() {
        let angles: Vec<f64> = (0..32)
            .map(|i| std::f64::consts::TAU * i as f64 / 8.0)
            .collect();
        let tsm = tsm_from_angles(&angles);
        let cfg = MinerConfig {
            max_triplets_per_anchor: 3,
            ..MinerConfig::default()
        };
        let set = mine_mean_threshold(&tsm, &cfg).unwrap();
        for a in 0..32 {
            let count = set.triplets.iter().filter(|t| t.anchor == a).count();
            assert!(count <= 3, "anchor {a} has {count} triplets");
        }
    }

    fn test_clip() -> Clip {
        let data: Vec<f64> = (0..6 * 3 * 4).map(|i| ((i as f64) * 0.37).sin()).collect();
        Clip::new("aug", 0, 6, 3, 4, data).unwrap()
    }

    #[test]
    fn augment_mode_none_is_identity() {
        let cfg = AugmentConfig {
            mode: AugmentMode::None,
            ..AugmentConfig::default()
        };
        let clip = test_clip();
        for role in [Role::Anchor, Role::Positive, Role::Negative] {
            assert_eq!(augment(&clip, &cfg, role, 3).unwrap(), clip);
        }
    }

    #[test]
    fn positives_only_leaves_other_roles_untouched() {
        let cfg = AugmentConfig::default();
        let clip = test_clip();
        assert_eq!(augment(&clip, &cfg, Role::Anchor, 0).unwrap(), clip);
        assert_eq!(augment(&clip, &cfg, Role::Negative, 0).unwrap(), clip);
        assert_ne!(augment(&clip, &cfg, Role::Positive, 0).unwrap(), clip);
    }

    #[test]
    fn neutral_parameters_are_identity_for_any_role() {
        let cfg = AugmentConfig {
            mode: AugmentMode::All,
            noise_sigma: 0.0,
            scale_range: [1.0, 1.0],
            channel_jitter_sigma: 0.0,
            smooth_window: 1,
            region_mask_prob: 0.0,
            rng_seed: 5,
        };
        let clip = test_clip();
        for role in [Role::Anchor, Role::Positive, Role::Negative] {
            assert_eq!(augment(&clip, &cfg, role, 9).unwrap(), clip);
        }
    }

    #[test]
    fn augment_is_deterministic_per_call_index() {
        let cfg = AugmentConfig {
            mode: AugmentMode::All,
            ..AugmentConfig::default()
        };
        let clip = test_clip();
        let a = augment(&clip, &cfg, Role::Positive, 7).unwrap();
        let b = augment(&clip, &cfg, Role::Positive, 7).unwrap();
        let c = augment(&clip, &cfg, Role::Positive, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
