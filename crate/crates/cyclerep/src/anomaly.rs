//! Fully unsupervised anomaly scoring over frame features: distance to
//! the nearest frames of a normal reference pool, or Local Outlier
//! Factor over the pooled frames themselves. Labels enter only when
//! metrics are computed from the scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{self, FrameScore, MetricsReport, PRCurve};
use crate::head::EmbeddingSequence;
use crate::mat::euclidean;
use crate::seqdata::FrameLabel;
use crate::tsm::{cycle_features, DEFAULT_CYCLE_WINDOW};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// Frame embeddings as produced by the head.
    Raw,
    /// Rows of the windowed self-similarity matrix.
    Cycle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scorer {
    NnDistance,
    Lof,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnomalyConfig {
    pub feature_kind: FeatureKind,
    pub scorer: Scorer,
    pub k_score: usize,
    pub cycle_window: usize,
}

impl Default for AnomalyConfig {
    fn default() -> Self {
        AnomalyConfig {
            feature_kind: FeatureKind::Cycle,
            scorer: Scorer::NnDistance,
            k_score: 5,
            cycle_window: DEFAULT_CYCLE_WINDOW,
        }
    }
}

impl AnomalyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_score < 1 {
            return Err(Error::Config("k_score must be >= 1".into()));
        }
        if self.cycle_window < 2 {
            return Err(Error::Config("cycle_window must be >= 2".into()));
        }
        Ok(())
    }
}

/// Per-frame anomaly scores of one sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredSequence {
    pub video_id: String,
    pub scores: Vec<f64>,
    pub labels: Vec<FrameLabel>,
}

/// Result bundle of [`run_anomaly_pipeline`].
#[derive(Clone, Debug, PartialEq)]
pub struct AnomalyOutcome {
    pub report: MetricsReport,
    pub traces: Vec<ScoredSequence>,
    /// True when no normal reference pool existed and scoring fell back
    /// to leave-one-video-out against the other query videos.
    pub reference_fallback: bool,
}

/// `score_i` = mean Euclidean distance of query feature `i` to its
/// `k_score` nearest reference features. `k_score = 1` is plain
/// nearest-neighbor distance.
pub fn nn_distance_score(
    query: &[Vec<f64>],
    reference: &[Vec<f64>],
    k_score: usize,
) -> Result<Vec<f64>> {
    if reference.is_empty() {
        return Err(Error::Protocol("empty reference pool".into()));
    }
    if k_score < 1 {
        return Err(Error::Config("k_score must be >= 1".into()));
    }
    if reference.len() < k_score {
        return Err(Error::Protocol(format!(
            "reference pool of {} is smaller than k_score {}",
            reference.len(),
            k_score
        )));
    }
    let mut out = Vec::with_capacity(query.len());
    for q in query {
        let mut heap: std::collections::BinaryHeap<HeapDist> = std::collections::BinaryHeap::new();
        for r in reference {
            let d = euclidean(q, r);
            heap.push(HeapDist(d));
            if heap.len() > k_score {
                heap.pop();
            }
        }
        let sum: f64 = heap.iter().map(|h| h.0).sum();
        out.push(sum / k_score as f64);
    }
    Ok(out)
}

#[derive(PartialEq)]
struct HeapDist(f64);

impl Eq for HeapDist {}

impl Ord for HeapDist {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl PartialOrd for HeapDist {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Density floor that keeps the local reachability density finite for
/// duplicated points.
pub const LRD_FLOOR: f64 = 1e-12;

/// Classical Local Outlier Factor. The k-neighborhood includes every
/// point tied at the k-distance; duplicate points are handled via
/// [`LRD_FLOOR`] on the mean reachability distance.
pub fn lof_scores(features: &[Vec<f64>], k_score: usize) -> Result<Vec<f64>> {
    let n = features.len();
    if n <= k_score {
        return Err(Error::Protocol(format!(
            "LOF needs more than k_score = {k_score} points, got {n}"
        )));
    }
    if k_score < 1 {
        return Err(Error::Config("k_score must be >= 1".into()));
    }

    // sorted neighbor lists
    let mut neigh: Vec<Vec<(f64, usize)>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut ds: Vec<(f64, usize)> = (0..n)
            .filter(|j| *j != i)
            .map(|j| (euclidean(&features[i], &features[j]), j))
            .collect();
        ds.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        neigh.push(ds);
    }

    // k-distance and neighborhood (with ties) per point
    let k_dist: Vec<f64> = neigh.iter().map(|ds| ds[k_score - 1].0).collect();
    let neighborhoods: Vec<Vec<usize>> = neigh
        .iter()
        .enumerate()
        .map(|(i, ds)| {
            ds.iter()
                .take_while(|(d, _)| *d <= k_dist[i])
                .map(|(_, j)| *j)
                .collect()
        })
        .collect();

    let lrd: Vec<f64> = (0..n)
        .map(|i| {
            let hood = &neighborhoods[i];
            let sum: f64 = hood
                .iter()
                .map(|&o| {
                    let d = euclidean(&features[i], &features[o]);
                    d.max(k_dist[o])
                })
                .sum();
            let mean = sum / hood.len() as f64;
            1.0 / mean.max(LRD_FLOOR)
        })
        .collect();

    Ok((0..n)
        .map(|i| {
            let hood = &neighborhoods[i];
            let sum: f64 = hood.iter().map(|&o| lrd[o] / lrd[i]).sum();
            sum / hood.len() as f64
        })
        .collect())
}

/// Extract the configured feature representation per sequence.
fn features_of(seq: &EmbeddingSequence, cfg: &AnomalyConfig) -> Result<Vec<Vec<f64>>> {
    match cfg.feature_kind {
        FeatureKind::Raw => Ok(seq.embeddings.clone()),
        FeatureKind::Cycle => Ok(cycle_features(seq, cfg.cycle_window)?
            .into_iter()
            .map(|c| c.row)
            .collect()),
    }
}

/// Score the query sequences and compute ranking metrics.
///
/// `reference` is the pool of normal sequences used by the
/// nn-distance scorer; when it is empty, each query video is scored
/// against the frames of the other query videos (flagged). The LOF
/// scorer pools all query frames. `labels` are used exclusively for the
/// metrics: permuting them cannot change any score.
pub fn run_anomaly_pipeline(
    queries: &[EmbeddingSequence],
    reference: &[EmbeddingSequence],
    labels: &[Vec<FrameLabel>],
    cfg: &AnomalyConfig,
) -> Result<AnomalyOutcome> {
    cfg.validate()?;
    if queries.is_empty() {
        return Err(Error::Config("no query sequences".into()));
    }
    if labels.len() != queries.len() {
        return Err(Error::Dim(format!(
            "{} label sequences for {} queries",
            labels.len(),
            queries.len()
        )));
    }
    for (q, l) in queries.iter().zip(labels) {
        if q.len() != l.len() {
            return Err(Error::Dim(format!(
                "sequence {}: {} frames vs {} labels",
                q.video_id,
                q.len(),
                l.len()
            )));
        }
    }

    let query_feats: Vec<Vec<Vec<f64>>> = queries
        .iter()
        .map(|q| features_of(q, cfg))
        .collect::<Result<_>>()?;

    let mut reference_fallback = false;
    let per_seq_scores: Vec<Vec<f64>> = match cfg.scorer {
        Scorer::NnDistance => {
            if reference.is_empty() {
                reference_fallback = true;
                log::warn!(
                    "no normal reference sequences: scoring leave-one-video-out over queries"
                );
                let mut all = Vec::with_capacity(queries.len());
                for qi in 0..queries.len() {
                    let pool: Vec<Vec<f64>> = query_feats
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| *i != qi)
                        .flat_map(|(_, f)| f.iter().cloned())
                        .collect();
                    all.push(nn_distance_score(&query_feats[qi], &pool, cfg.k_score)?);
                }
                all
            } else {
                let pool: Vec<Vec<f64>> = reference
                    .iter()
                    .map(|r| features_of(r, cfg))
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .flatten()
                    .collect();
                query_feats
                    .iter()
                    .map(|f| nn_distance_score(f, &pool, cfg.k_score))
                    .collect::<Result<_>>()?
            }
        }
        Scorer::Lof => {
            let pooled: Vec<Vec<f64>> = query_feats.iter().flatten().cloned().collect();
            let scores = lof_scores(&pooled, cfg.k_score)?;
            let mut out = Vec::with_capacity(queries.len());
            let mut cursor = 0;
            for f in &query_feats {
                out.push(scores[cursor..cursor + f.len()].to_vec());
                cursor += f.len();
            }
            out
        }
    };

    // metrics over all scored frames
    let flat_scores: Vec<f64> = per_seq_scores.iter().flatten().copied().collect();
    let flat_labels: Vec<bool> = labels
        .iter()
        .flatten()
        .map(|l| *l == FrameLabel::NonPeriodic)
        .collect();
    let ap = eval::average_precision(&flat_scores, &flat_labels)?;
    let oracle = eval::oracle_f1(&flat_scores, &flat_labels);
    let pr: PRCurve = eval::pr_curve(&flat_scores, &flat_labels);

    let mut frame_scores = Vec::with_capacity(flat_scores.len());
    let mut traces = Vec::with_capacity(queries.len());
    for ((q, scores), labs) in queries.iter().zip(&per_seq_scores).zip(labels) {
        for (i, (s, l)) in scores.iter().zip(labs).enumerate() {
            frame_scores.push(FrameScore {
                video_id: q.video_id.clone(),
                frame: q.clip_offset + i,
                score: *s,
                label: *l,
            });
        }
        traces.push(ScoredSequence {
            video_id: q.video_id.clone(),
            scores: scores.clone(),
            labels: labs.clone(),
        });
    }

    // a threshold-free protocol has no fixed operating point: report the
    // oracle F1 in both F1 fields
    let report = MetricsReport {
        ap,
        f1: oracle,
        oracle_f1: oracle,
        k: cfg.k_score,
        eps: 0.0,
        per_video: Default::default(),
        pr_curve: pr,
        frame_scores,
    };

    Ok(AnomalyOutcome {
        report,
        traces,
        reference_fallback,
    })
}
