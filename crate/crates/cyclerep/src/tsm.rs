//! Temporal self-similarity matrices and the diagnostic transforms built
//! on them: autocorrelation over lags, 1-D PCA projection, and per-frame
//! cycle features (a frame's similarity row within its window).

use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::head::{l2_normalize, EmbeddingSequence};
use crate::mat::{dot, Mat};
use crate::rng::gauss;

/// Default cycle-feature window, matching the embedding chunk length.
pub const DEFAULT_CYCLE_WINDOW: usize = 64;

/// Pairwise cosine similarities of one clip's embeddings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    values: Mat,
    pub frame_offset: usize,
    /// True when inputs were not unit-norm and had to be normalized.
    pub renormalized: bool,
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values.get(i, j)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    pub fn values(&self) -> &Mat {
        &self.values
    }

    /// Mean off-diagonal similarity of row `i` (the anchor's row mean
    /// used by mean-threshold mining; excludes the self-similarity).
    pub fn row_mean_excluding_self(&self, i: usize) -> f64 {
        let n = self.len();
        if n <= 1 {
            return 0.0;
        }
        let row = self.values.row(i);
        let sum: f64 = row.iter().sum();
        (sum - row[i]) / (n - 1) as f64
    }
}

/// `S_ij = e_i . e_j`. Inputs are expected unit-norm; anything else is
/// normalized first and flagged.
pub fn compute_tsm(emb: &EmbeddingSequence) -> Result<SimilarityMatrix> {
    if emb.is_empty() {
        return Err(Error::Config("cannot build a TSM from an empty sequence".into()));
    }
    let n = emb.len();
    let mut renormalized = false;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for row in &emb.embeddings {
        let norm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-5 {
            renormalized = true;
            rows.push(l2_normalize(row).0);
        } else {
            rows.push(row.clone());
        }
    }
    let mut values = Mat::zeros(n, n);
    for i in 0..n {
        values.set(i, i, dot(&rows[i], &rows[i]));
        for j in (i + 1)..n {
            let s = dot(&rows[i], &rows[j]);
            values.set(i, j, s);
            values.set(j, i, s);
        }
    }
    Ok(SimilarityMatrix {
        values,
        frame_offset: emb.clip_offset,
        renormalized,
    })
}

/// `r(lag)` = mean similarity of embedding pairs `lag` frames apart,
/// i.e. the mean of the lag-th superdiagonal of the TSM.
pub fn autocorrelation(emb: &EmbeddingSequence, max_lag: usize) -> Result<Vec<f64>> {
    let n = emb.len();
    if max_lag >= n {
        return Err(Error::Config(format!(
            "max_lag {max_lag} out of range for {n} frames"
        )));
    }
    let mut out = Vec::with_capacity(max_lag + 1);
    for lag in 0..=max_lag {
        let mut sum = 0.0;
        for t in 0..n - lag {
            sum += dot(&emb.embeddings[t], &emb.embeddings[t + lag]);
        }
        out.push(sum / (n - lag) as f64);
    }
    Ok(out)
}

/// Centered data projected onto the top principal component, computed by
/// power iteration on the covariance matrix. Sign convention: the first
/// nonzero coordinate of the eigenvector is positive. Identical inputs
/// (zero covariance) yield an all-zero projection with the flag set.
pub fn pca_project_1d(embs: &[Vec<f64>]) -> Result<(Vec<f64>, bool)> {
    if embs.len() < 2 {
        return Err(Error::Config("PCA needs at least 2 vectors".into()));
    }
    let n = embs.len();
    let d = embs[0].len();
    if embs.iter().any(|e| e.len() != d) {
        return Err(Error::Dim("inconsistent embedding widths".into()));
    }

    let mut mean = vec![0.0; d];
    for e in embs {
        for (m, v) in mean.iter_mut().zip(e) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let centered: Vec<Vec<f64>> = embs
        .iter()
        .map(|e| e.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();

    let mut cov = Mat::zeros(d, d);
    for row in &centered {
        for i in 0..d {
            if row[i] == 0.0 {
                continue;
            }
            for j in i..d {
                let v = cov.get(i, j) + row[i] * row[j];
                cov.set(i, j, v);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov.get(i, j) / n as f64;
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
    }

    let frobenius: f64 = cov.iter().map(|v| v * v).sum::<f64>().sqrt();
    if frobenius < 1e-300 {
        return Ok((vec![0.0; n], true));
    }

    let eigvec = match top_eigenvector(&cov) {
        Some(v) => v,
        None => return Ok((vec![0.0; n], true)),
    };

    let proj = centered.iter().map(|row| dot(row, &eigvec)).collect();
    Ok((proj, false))
}

/// Power iteration: 200 iterations or relative eigenvalue change below
/// 1e-10, whichever comes first. Deterministic seeded start vector.
fn top_eigenvector(cov: &Mat) -> Option<Vec<f64>> {
    let d = cov.rows();
    let mut rng = StdRng::seed_from_u64(0x70ca_11ed);
    'restart: for _ in 0..8 {
        let mut v: Vec<f64> = (0..d).map(|_| gauss(&mut rng)).collect();
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in v.iter_mut() {
            *x /= norm;
        }
        let mut lambda_prev = f64::NAN;
        for _ in 0..200 {
            let mut next = vec![0.0; d];
            for i in 0..d {
                next[i] = dot(cov.row(i), &v);
            }
            let norm: f64 = next.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-300 {
                // start vector fell in the null space, redraw
                continue 'restart;
            }
            for x in next.iter_mut() {
                *x /= norm;
            }
            let mut cv = vec![0.0; d];
            for i in 0..d {
                cv[i] = dot(cov.row(i), &next);
            }
            let lambda = dot(&next, &cv);
            v = next;
            if !lambda_prev.is_nan()
                && (lambda - lambda_prev).abs() <= 1e-10 * lambda.abs().max(1e-300)
            {
                break;
            }
            lambda_prev = lambda;
        }
        // sign convention: first nonzero coordinate positive
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
            if *first < 0.0 {
                for x in v.iter_mut() {
                    *x = -*x;
                }
            }
        }
        return Some(v);
    }
    None
}

/// A frame described by its similarities to the frames of its window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleFeature {
    pub row: Vec<f64>,
    pub center_frame: usize,
}

/// Per-frame cycle features over non-overlapping windows of `w` frames.
/// The final partial window is padded by repeating the last frame.
pub fn cycle_features(emb: &EmbeddingSequence, w: usize) -> Result<Vec<CycleFeature>> {
    if w < 2 {
        return Err(Error::Config(format!("cycle window must be >= 2, got {w}")));
    }
    let n = emb.len();
    if n < w {
        return Err(Error::Config(format!(
            "sequence of {n} frames is shorter than cycle window {w}"
        )));
    }
    let mut out = Vec::with_capacity(n);
    let mut block_start = 0;
    while block_start < n {
        let block_end = (block_start + w).min(n);
        // window member for slot j: real frame, or the final frame again
        let window_frame = |j: usize| {
            let idx = block_start + j;
            if idx < n {
                idx
            } else {
                n - 1
            }
        };
        for i in block_start..block_end {
            let mut row = Vec::with_capacity(w);
            for j in 0..w {
                row.push(dot(&emb.embeddings[i], &emb.embeddings[window_frame(j)]));
            }
            out.push(CycleFeature {
                row,
                center_frame: emb.clip_offset + i,
            });
        }
        block_start = block_end;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn circular(n: usize, period: f64) -> EmbeddingSequence {
        let embeddings = (0..n)
            .map(|t| {
                let th = TAU * t as f64 / period;
                vec![th.cos(), th.sin()]
            })
            .collect();
        EmbeddingSequence {
            video_id: "circ".into(),
            embeddings,
            clip_offset: 0,
            degenerate: vec![false; n],
        }
    }

    fn constant(n: usize) -> EmbeddingSequence {
        EmbeddingSequence {
            video_id: "const".into(),
            embeddings: vec![vec![1.0, 0.0]; n],
            clip_offset: 0,
            degenerate: vec![false; n],
        }
    }

    #[test]
    fn identical_embeddings_give_all_ones() {
        let tsm = compute_tsm(&constant(5)).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert!((tsm.get(i, j) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn orthogonal_embeddings_give_identity() {
        let emb = EmbeddingSequence {
            video_id: "orth".into(),
            embeddings: vec![
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
            clip_offset: 0,
            degenerate: vec![false; 3],
        };
        let tsm = compute_tsm(&emb).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_eq!(tsm.get(i, j), want);
            }
        }
    }

    #[test]
    fn circular_embeddings_match_the_cosine_formula() {
        let p = 10.0;
        let tsm = compute_tsm(&circular(40, p)).unwrap();
        for i in 0..40 {
            for j in 0..40 {
                let want = (TAU * (i as f64 - j as f64) / p).cos();
                assert!(
                    (tsm.get(i, j) - want).abs() < 1e-9,
                    "S[{i},{j}] = {} want {want}",
                    tsm.get(i, j)
                );
            }
        }
        // exact-period diagonals sit at similarity 1
        for i in 0..30 {
            assert!((tsm.get(i, i + 10) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn non_unit_inputs_are_renormalized_and_flagged() {
        let emb = EmbeddingSequence {
            video_id: "big".into(),
            embeddings: vec![vec![3.0, 0.0], vec![0.0, 2.0]],
            clip_offset: 0,
            degenerate: vec![false; 2],
        };
        let tsm = compute_tsm(&emb).unwrap();
        assert!(tsm.renormalized);
        assert!((tsm.get(0, 0) - 1.0).abs() < 1e-12);
        assert!(tsm.get(0, 1).abs() < 1e-12);
    }

    #[test]
    fn autocorrelation_closed_form_on_circular_embeddings() {
        let p = 8.0;
        let emb = circular(64, p);
        let r = autocorrelation(&emb, 16).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-12);
        for (lag, val) in r.iter().enumerate() {
            let want = (TAU * lag as f64 / p).cos();
            assert!((val - want).abs() < 1e-9, "lag {lag}: {val} vs {want}");
        }
        assert!((r[8] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn autocorrelation_of_constant_embeddings_is_one() {
        let r = autocorrelation(&constant(20), 10).unwrap();
        assert!(r.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn autocorrelation_rejects_out_of_range_lag() {
        assert!(autocorrelation(&constant(5), 5).is_err());
    }

    #[test]
    fn autocorrelation_equals_tsm_band_means() {
        let emb = circular(30, 7.0);
        let tsm = compute_tsm(&emb).unwrap();
        let r = autocorrelation(&emb, 12).unwrap();
        for lag in 0..=12 {
            let mut sum = 0.0;
            for t in 0..30 - lag {
                sum += tsm.get(t, t + lag);
            }
            let band = sum / (30 - lag) as f64;
            assert!((band - r[lag]).abs() < 1e-12, "lag {lag}");
        }
    }

    #[test]
    fn pca_of_axis_aligned_data_returns_centered_coordinates() {
        let embs = vec![
            vec![1.0, 5.0],
            vec![2.0, 5.0],
            vec![3.0, 5.0],
            vec![4.0, 5.0],
        ];
        let (proj, degenerate) = pca_project_1d(&embs).unwrap();
        assert!(!degenerate);
        let want = [-1.5, -0.5, 0.5, 1.5];
        for (p, w) in proj.iter().zip(want) {
            assert!((p - w).abs() < 1e-9, "{p} vs {w}");
        }
    }

    #[test]
    fn pca_of_identical_inputs_is_flagged_zero() {
        let embs = vec![vec![2.0, -1.0]; 6];
        let (proj, degenerate) = pca_project_1d(&embs).unwrap();
        assert!(degenerate);
        assert!(proj.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn pca_of_circular_embeddings_is_sinusoidal() {
        let n = 60;
        let p = 12.0;
        let emb = circular(n, p);
        let (proj, _) = pca_project_1d(&emb.embeddings).unwrap();
        // dominant DFT bin should be n/p = 5
        let dominant = dominant_bin(&proj);
        assert_eq!(dominant, 5);
    }

    fn dominant_bin(x: &[f64]) -> usize {
        let n = x.len();
        let mut best = (0usize, -1.0f64);
        for k in 1..n / 2 {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, v) in x.iter().enumerate() {
                let ang = TAU * (k * t) as f64 / n as f64;
                re += v * ang.cos();
                im -= v * ang.sin();
            }
            let mag = re * re + im * im;
            if mag > best.1 {
                best = (k, mag);
            }
        }
        best.0
    }

    #[test]
    fn cycle_features_of_constant_embeddings_are_all_ones() {
        let feats = cycle_features(&constant(10), 4).unwrap();
        assert_eq!(feats.len(), 10);
        for f in &feats {
            assert_eq!(f.row.len(), 4);
            assert!(f.row.iter().all(|v| (v - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn full_window_cycle_features_are_tsm_rows() {
        let emb = circular(12, 5.0);
        let tsm = compute_tsm(&emb).unwrap();
        let feats = cycle_features(&emb, 12).unwrap();
        for (i, f) in feats.iter().enumerate() {
            for (j, v) in f.row.iter().enumerate() {
                assert!((v - tsm.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn partial_final_window_is_padded_with_the_last_frame() {
        let emb = circular(10, 4.0);
        let feats = cycle_features(&emb, 4).unwrap();
        assert_eq!(feats.len(), 10);
        // final block covers frames 8, 9; slots 2 and 3 repeat frame 9
        let f9 = &feats[9];
        let expect_last = dot(&emb.embeddings[9], &emb.embeddings[9]);
        assert!((f9.row[1] - expect_last).abs() < 1e-12);
        assert!((f9.row[2] - expect_last).abs() < 1e-12);
        assert!((f9.row[3] - expect_last).abs() < 1e-12);
    }

    #[test]
    fn periodic_frames_one_period_apart_share_cycle_features() {
        // period 4 divides the window, so frames i and i+4 sit at the
        // same slot of different blocks with identical similarity rows
        let emb = circular(16, 4.0);
        let feats = cycle_features(&emb, 8).unwrap();
        for i in 0..8 {
            let a = &feats[i].row;
            let b = &feats[i + 4].row;
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-6, "frame {i}");
            }
        }
    }

    #[test]
    fn cycle_window_validation() {
        assert!(cycle_features(&constant(10), 1).is_err());
        assert!(cycle_features(&constant(3), 4).is_err());
    }
}
