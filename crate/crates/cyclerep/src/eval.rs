//! Frame-level periodicity evaluation: weighted k-NN classification with
//! a leave-one-video-out protocol, plus ranking metrics (average
//! precision, F1, oracle F1, precision-recall curves).
//!
//! The positive class everywhere is `non_periodic`. Ties are broken by
//! lower original index so every metric is reproducible bit-for-bit.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::head::EmbeddingSequence;
use crate::mat::euclidean;
use crate::seqdata::FrameLabel;

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledEmbedding {
    pub vector: Vec<f64>,
    pub label: FrameLabel,
    pub video_id: String,
    pub frame: usize,
}

/// Flatten embedding sequences and their labels into query/reference rows.
pub fn labeled_embeddings(
    embeddings: &[EmbeddingSequence],
    labels: &[Vec<FrameLabel>],
) -> Result<Vec<LabeledEmbedding>> {
    if embeddings.len() != labels.len() {
        return Err(Error::Dim(format!(
            "{} embedding sequences vs {} label sequences",
            embeddings.len(),
            labels.len()
        )));
    }
    let mut out = Vec::new();
    for (emb, labs) in embeddings.iter().zip(labels) {
        if emb.len() != labs.len() {
            return Err(Error::Dim(format!(
                "sequence {}: {} embeddings vs {} labels",
                emb.video_id,
                emb.len(),
                labs.len()
            )));
        }
        for (i, (vector, label)) in emb.embeddings.iter().zip(labs).enumerate() {
            out.push(LabeledEmbedding {
                vector: vector.clone(),
                label: *label,
                video_id: emb.video_id.clone(),
                frame: emb.clip_offset + i,
            });
        }
    }
    Ok(out)
}

/// Outcome of one weighted k-NN query.
#[derive(Clone, Debug, PartialEq)]
pub struct KnnDecision {
    pub label: FrameLabel,
    /// Normalized non-periodic weight in [0, 1]; the ranking score.
    pub score: f64,
    /// Indices of the used neighbors, into the reference slice.
    pub neighbors: Vec<usize>,
}

/// Weighted k-NN over Euclidean distance, excluding reference items from
/// the query's own video. Neighbor weights are `1 / (d^2 + eps)`; ties in
/// distance prefer the lower reference index; tied class weights predict
/// periodic.
pub fn knn_classify(
    query: &LabeledEmbedding,
    reference: &[LabeledEmbedding],
    k: usize,
    eps: f64,
) -> Result<KnnDecision> {
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    // max-heap of (distance, index): the worst kept neighbor on top
    let mut heap: std::collections::BinaryHeap<HeapItem> = std::collections::BinaryHeap::new();
    for (i, r) in reference.iter().enumerate() {
        if r.video_id == query.video_id {
            continue;
        }
        let d = euclidean(&query.vector, &r.vector);
        heap.push(HeapItem { dist: d, index: i });
        if heap.len() > k {
            heap.pop();
        }
    }
    if heap.len() < k {
        return Err(Error::Protocol(format!(
            "only {} cross-video reference items for k = {k}",
            heap.len()
        )));
    }
    let mut neighbors: Vec<HeapItem> = heap.into_vec();
    neighbors.sort();

    let mut w_periodic = 0.0;
    let mut w_non_periodic = 0.0;
    for item in &neighbors {
        let w = 1.0 / (item.dist * item.dist + eps);
        match reference[item.index].label {
            FrameLabel::Periodic => w_periodic += w,
            FrameLabel::NonPeriodic => w_non_periodic += w,
        }
    }
    let label = if w_non_periodic > w_periodic {
        FrameLabel::NonPeriodic
    } else {
        FrameLabel::Periodic
    };
    let score = w_non_periodic / (w_periodic + w_non_periodic);
    Ok(KnnDecision {
        label,
        score,
        neighbors: neighbors.into_iter().map(|i| i.index).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct HeapItem {
    dist: f64,
    index: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // larger distance is "greater"; equal distances rank the higher
        // index as greater so it is evicted first
        self.dist
            .total_cmp(&other.dist)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// One scored frame of an evaluation or anomaly run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub video_id: String,
    pub frame: usize,
    pub score: f64,
    pub label: FrameLabel,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VideoMetrics {
    pub frames: usize,
    pub positives: usize,
    pub f1: f64,
    pub ap: Option<f64>,
}

/// Precision-recall points at every distinct score threshold,
/// descending; items with `score >= threshold` count as predicted
/// positive.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PRCurve {
    pub points: Vec<PRPoint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PRPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

impl PRCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,precision,recall\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.threshold, p.precision, p.recall));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ap: f64,
    pub f1: f64,
    pub oracle_f1: f64,
    pub k: usize,
    pub eps: f64,
    pub per_video: BTreeMap<String, VideoMetrics>,
    #[serde(skip)]
    pub pr_curve: PRCurve,
    #[serde(skip)]
    pub frame_scores: Vec<FrameScore>,
}

impl MetricsReport {
    /// Per-frame score trace CSV: `video_id,frame,score,label`.
    pub fn scores_csv(&self) -> String {
        let mut out = String::from("video_id,frame,score,label\n");
        for s in &self.frame_scores {
            out.push_str(&format!(
                "{},{},{},{}\n",
                s.video_id,
                s.frame,
                s.score,
                if s.label == FrameLabel::NonPeriodic { 1 } else { 0 }
            ));
        }
        out
    }
}

/// Classify every frame leave-one-video-out and aggregate metrics.
pub fn evaluate_knn(frames: &[LabeledEmbedding], k: usize, eps: f64) -> Result<MetricsReport> {
    let mut videos: Vec<&str> = frames.iter().map(|f| f.video_id.as_str()).collect();
    videos.sort_unstable();
    videos.dedup();
    if videos.len() < 2 {
        return Err(Error::Protocol(format!(
            "leave-one-video-out needs >= 2 videos, got {}",
            videos.len()
        )));
    }

    let mut scores = Vec::with_capacity(frames.len());
    let mut predictions = Vec::with_capacity(frames.len());
    let mut labels = Vec::with_capacity(frames.len());
    for query in frames {
        let decision = knn_classify(query, frames, k, eps)?;
        scores.push(decision.score);
        predictions.push(decision.label == FrameLabel::NonPeriodic);
        labels.push(query.label == FrameLabel::NonPeriodic);
    }

    let ap = average_precision(&scores, &labels)?;
    let f1 = f1_score(&predictions, &labels);
    let oracle = oracle_f1(&scores, &labels);
    let pr_curve = pr_curve(&scores, &labels);

    let mut per_video: BTreeMap<String, VideoMetrics> = BTreeMap::new();
    for v in &videos {
        let idx: Vec<usize> = (0..frames.len())
            .filter(|i| frames[*i].video_id == *v)
            .collect();
        let v_pred: Vec<bool> = idx.iter().map(|i| predictions[*i]).collect();
        let v_lab: Vec<bool> = idx.iter().map(|i| labels[*i]).collect();
        let v_scores: Vec<f64> = idx.iter().map(|i| scores[*i]).collect();
        let positives = v_lab.iter().filter(|l| **l).count();
        per_video.insert(
            (*v).to_string(),
            VideoMetrics {
                frames: idx.len(),
                positives,
                f1: f1_score(&v_pred, &v_lab),
                ap: if positives > 0 {
                    Some(average_precision(&v_scores, &v_lab)?)
                } else {
                    None
                },
            },
        );
    }

    let frame_scores = frames
        .iter()
        .zip(&scores)
        .map(|(f, s)| FrameScore {
            video_id: f.video_id.clone(),
            frame: f.frame,
            score: *s,
            label: f.label,
        })
        .collect();

    Ok(MetricsReport {
        ap,
        f1,
        oracle_f1: oracle,
        k,
        eps,
        per_video,
        pr_curve,
        frame_scores,
    })
}

/// Ranks items by descending score (stable: ties keep original order)
/// and returns each item's rank-ordered index.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Mean precision-at-rank over the positive items, in descending-score
/// order. Errors when there is no positive item.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dim("scores/labels length mismatch".into()));
    }
    let total_pos = labels.iter().filter(|l| **l).count();
    if total_pos == 0 {
        return Err(Error::Protocol(
            "average precision undefined without positives".into(),
        ));
    }
    let order = ranking(scores);
    let mut tp = 0usize;
    let mut sum = 0.0;
    for (rank, &idx) in order.iter().enumerate() {
        if labels[idx] {
            tp += 1;
            sum += tp as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / total_pos as f64)
}

/// Binary F1 with the convention `F1 = 0` when precision + recall = 0.
pub fn f1_score(predictions: &[bool], labels: &[bool]) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fneg = 0usize;
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fneg;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Maximum F1 over every threshold placed between consecutive distinct
/// scores (and at +/- infinity).
pub fn oracle_f1(scores: &[f64], labels: &[bool]) -> f64 {
    let order = ranking(scores);
    let total_pos = labels.iter().filter(|l| **l).count();
    let mut best = 0.0; // threshold above every score: nothing predicted
    let mut tp = 0usize;
    let mut predicted = 0usize;
    for (i, &idx) in order.iter().enumerate() {
        predicted += 1;
        if labels[idx] {
            tp += 1;
        }
        // a threshold can only sit between distinct score values
        if i + 1 < order.len() && scores[order[i + 1]] == scores[idx] {
            continue;
        }
        let denom = predicted + total_pos;
        if denom > 0 {
            let f1 = 2.0 * tp as f64 / denom as f64;
            if f1 > best {
                best = f1;
            }
        }
    }
    best
}

/// Precision-recall point at every distinct score value, descending.
pub fn pr_curve(scores: &[f64], labels: &[bool]) -> PRCurve {
    let order = ranking(scores);
    let total_pos = labels.iter().filter(|l| **l).count();
    let mut points = Vec::new();
    let mut tp = 0usize;
    let mut predicted = 0usize;
    for (i, &idx) in order.iter().enumerate() {
        predicted += 1;
        if labels[idx] {
            tp += 1;
        }
        if i + 1 < order.len() && scores[order[i + 1]] == scores[idx] {
            continue;
        }
        points.push(PRPoint {
            threshold: scores[idx],
            precision: tp as f64 / predicted as f64,
            recall: if total_pos == 0 {
                0.0
            } else {
                tp as f64 / total_pos as f64
            },
        });
    }
    PRCurve { points }
}
