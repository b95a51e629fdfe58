//! Tracking evaluation: per-frame matching against ground truth, CLEAR-MOT
//! error counts and recall-normalized accuracy averaged over recall
//! thresholds (AMOTA).
//!
//! Matching is done on the ground plane (vehicle x/y) with a distance gate
//! and class gating. A ground-truth object keeps its previous track when
//! that track is still within the gate; the remaining pairs are matched
//! greedily by ascending distance. An identity switch is counted whenever an
//! object is matched to a different track than the one it was last matched
//! to.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::association::{ClassId, TrackId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("prediction and ground-truth sequences are misaligned at position {position} (prediction frame {pred:?}, ground-truth frame {gt:?})")]
    Misaligned {
        position: usize,
        pred: Option<u64>,
        gt: Option<u64>,
    },
    #[error("track id {id} appears twice in frame {frame}")]
    DuplicateTrackId { frame: u64, id: TrackId },
    #[error("ground-truth id {id} appears twice in frame {frame}")]
    DuplicateGroundTruthId { frame: u64, id: u64 },
    #[error("recall threshold must lie in (0, 1], got {0}")]
    InvalidRecall(f64),
    #[error("no ground-truth annotations to evaluate against")]
    EmptyGroundTruth,
    #[error("need at least two recall thresholds, got {0}")]
    TooFewThresholds(usize),
    #[error("distance gate must be positive, got {0}")]
    InvalidDistance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedObject {
    pub track_id: TrackId,
    pub x: f64,
    pub y: f64,
    pub class: ClassId,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionFrame {
    pub frame_index: u64,
    pub objects: Vec<PredictedObject>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthObject {
    pub id: u64,
    pub x: f64,
    pub y: f64,
    pub class: ClassId,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruthFrame {
    pub frame_index: u64,
    pub objects: Vec<GroundTruthObject>,
}

/// A frame-aligned pair of prediction and ground-truth frames.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sequence {
    pub predictions: Vec<PredictionFrame>,
    pub ground_truth: Vec<GroundTruthFrame>,
}

impl Sequence {
    pub fn new(
        predictions: Vec<PredictionFrame>,
        ground_truth: Vec<GroundTruthFrame>,
    ) -> Result<Self, MetricsError> {
        let s = Self {
            predictions,
            ground_truth,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        let n = self.predictions.len().max(self.ground_truth.len());
        for position in 0..n {
            let p = self.predictions.get(position);
            let g = self.ground_truth.get(position);
            match (p, g) {
                (Some(p), Some(g)) if p.frame_index == g.frame_index => {
                    let mut ids = HashSet::new();
                    if let Some(o) = p.objects.iter().find(|o| !ids.insert(o.track_id)) {
                        return Err(MetricsError::DuplicateTrackId {
                            frame: p.frame_index,
                            id: o.track_id,
                        });
                    }
                    let mut ids = HashSet::new();
                    if let Some(o) = g.objects.iter().find(|o| !ids.insert(o.id)) {
                        return Err(MetricsError::DuplicateGroundTruthId {
                            frame: g.frame_index,
                            id: o.id,
                        });
                    }
                }
                _ => {
                    return Err(MetricsError::Misaligned {
                        position,
                        pred: p.map(|f| f.frame_index),
                        gt: g.map(|f| f.frame_index),
                    })
                }
            }
        }
        Ok(())
    }

    pub fn num_annotations(&self) -> usize {
        self.ground_truth.iter().map(|f| f.objects.len()).sum()
    }

    fn restricted_to(&self, class: ClassId) -> Sequence {
        Sequence {
            predictions: self
                .predictions
                .iter()
                .map(|f| PredictionFrame {
                    frame_index: f.frame_index,
                    objects: f
                        .objects
                        .iter()
                        .filter(|o| o.class == class)
                        .copied()
                        .collect(),
                })
                .collect(),
            ground_truth: self
                .ground_truth
                .iter()
                .map(|f| GroundTruthFrame {
                    frame_index: f.frame_index,
                    objects: f
                        .objects
                        .iter()
                        .filter(|o| o.class == class)
                        .copied()
                        .collect(),
                })
                .collect(),
        }
    }
}

pub fn ground_distance(p: &PredictedObject, g: &GroundTruthObject) -> f64 {
    let dx = p.x - g.x;
    let dy = p.y - g.y;
    (dx * dx + dy * dy).sqrt()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameMatch {
    /// (ground-truth id, track id, distance), sorted by ground-truth id.
    pub pairs: Vec<(u64, TrackId, f64)>,
    pub false_positives: Vec<TrackId>,
    pub false_negatives: Vec<u64>,
}

/// Matches one frame. `previous` maps ground-truth ids to the track they were
/// last matched to.
pub fn match_frame(
    preds: &[PredictedObject],
    gt: &[GroundTruthObject],
    dist_threshold: f64,
    previous: &BTreeMap<u64, TrackId>,
) -> FrameMatch {
    let valid = |p: &PredictedObject, g: &GroundTruthObject| {
        p.class == g.class && ground_distance(p, g) <= dist_threshold
    };
    let mut gt_order: Vec<usize> = (0..gt.len()).collect();
    gt_order.sort_by_key(|&i| gt[i].id);

    let mut gt_used = vec![false; gt.len()];
    let mut pred_used = vec![false; preds.len()];
    let mut pairs = Vec::new();

    for &gi in &gt_order {
        let Some(&k) = previous.get(&gt[gi].id) else {
            continue;
        };
        if let Some(pi) = preds.iter().position(|p| p.track_id == k) {
            if !pred_used[pi] && valid(&preds[pi], &gt[gi]) {
                gt_used[gi] = true;
                pred_used[pi] = true;
                pairs.push((gt[gi].id, k, ground_distance(&preds[pi], &gt[gi])));
            }
        }
    }

    let mut candidates: Vec<(f64, u64, TrackId, usize, usize)> = Vec::new();
    for (gi, g) in gt.iter().enumerate() {
        if gt_used[gi] {
            continue;
        }
        for (pi, p) in preds.iter().enumerate() {
            if !pred_used[pi] && valid(p, g) {
                candidates.push((ground_distance(p, g), g.id, p.track_id, gi, pi));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    for (d, gid, tid, gi, pi) in candidates {
        if !gt_used[gi] && !pred_used[pi] {
            gt_used[gi] = true;
            pred_used[pi] = true;
            pairs.push((gid, tid, d));
        }
    }

    pairs.sort_by_key(|p| p.0);
    let mut false_positives: Vec<TrackId> = preds
        .iter()
        .zip(&pred_used)
        .filter(|(_, u)| !**u)
        .map(|(p, _)| p.track_id)
        .collect();
    false_positives.sort();
    let mut false_negatives: Vec<u64> = gt
        .iter()
        .zip(&gt_used)
        .filter(|(_, u)| !**u)
        .map(|(g, _)| g.id)
        .collect();
    false_negatives.sort();
    FrameMatch {
        pairs,
        false_positives,
        false_negatives,
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ErrorCounts {
    /// Recall threshold these counts were selected for, if any.
    pub recall_threshold: Option<f64>,
    pub id_switches: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub matches: usize,
    /// Number of annotated objects over all frames.
    pub num_gt: usize,
    /// Matched-pair ground-plane distances in meters.
    pub distances: Vec<f64>,
}

impl ErrorCounts {
    pub fn merge(&mut self, other: &ErrorCounts) {
        self.id_switches += other.id_switches;
        self.false_positives += other.false_positives;
        self.false_negatives += other.false_negatives;
        self.matches += other.matches;
        self.num_gt += other.num_gt;
        self.distances.extend_from_slice(&other.distances);
    }

    pub fn errors(&self) -> usize {
        self.id_switches + self.false_positives + self.false_negatives
    }

    pub fn recall(&self) -> f64 {
        if self.num_gt == 0 {
            return 0.0;
        }
        (self.num_gt - self.false_negatives) as f64 / self.num_gt as f64
    }

    pub fn mota(&self) -> f64 {
        if self.num_gt == 0 {
            return 0.0;
        }
        1.0 - self.errors() as f64 / self.num_gt as f64
    }

    /// Mean matched distance, `None` without matches.
    pub fn motp(&self) -> Option<f64> {
        (!self.distances.is_empty())
            .then(|| self.distances.iter().sum::<f64>() / self.distances.len() as f64)
    }

    /// `recall >= i / (n - 1)`, compared in integers.
    fn reaches(&self, i: usize, n: usize) -> bool {
        (self.num_gt - self.false_negatives) * (n - 1) >= i * self.num_gt
    }
}

/// Errors for one sequence when only predictions with confidence at or above
/// `confidence_floor` are kept.
pub fn count_sequence_errors(
    seq: &Sequence,
    confidence_floor: f64,
    dist_threshold: f64,
) -> Result<ErrorCounts, MetricsError> {
    seq.validate()?;
    Ok(count_unchecked(seq, confidence_floor, dist_threshold))
}

fn count_unchecked(seq: &Sequence, confidence_floor: f64, dist_threshold: f64) -> ErrorCounts {
    let mut last: BTreeMap<u64, TrackId> = BTreeMap::new();
    let mut counts = ErrorCounts::default();
    for (pf, gf) in seq.predictions.iter().zip(&seq.ground_truth) {
        let preds: Vec<PredictedObject> = pf
            .objects
            .iter()
            .filter(|o| o.confidence >= confidence_floor)
            .copied()
            .collect();
        let m = match_frame(&preds, &gf.objects, dist_threshold, &last);
        for &(gid, tid, d) in &m.pairs {
            if last.insert(gid, tid).is_some_and(|prev| prev != tid) {
                counts.id_switches += 1;
            }
            counts.distances.push(d);
        }
        counts.matches += m.pairs.len();
        counts.false_positives += m.false_positives.len();
        counts.false_negatives += m.false_negatives.len();
        counts.num_gt += gf.objects.len();
    }
    counts
}

/// Recall-normalized MOTA, clamped to [0, 1].
pub fn motar(counts: &ErrorCounts, recall: f64, num_gt: usize) -> Result<f64, MetricsError> {
    if !(recall > 0.0 && recall <= 1.0) {
        return Err(MetricsError::InvalidRecall(recall));
    }
    if num_gt == 0 {
        return Err(MetricsError::EmptyGroundTruth);
    }
    let p = num_gt as f64;
    let value = 1.0 - (counts.errors() as f64 - (1.0 - recall) * p) / (recall * p);
    Ok(value.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Number of recall thresholds n; the thresholds are 1/(n-1), ..., 1.
    pub num_thresholds: usize,
    /// Ground-plane matching gate, meters.
    pub dist_threshold: f64,
    /// Restrict evaluation to these classes.
    pub classes: Option<Vec<ClassId>>,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            num_thresholds: 40,
            dist_threshold: 2.0,
            classes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub class: ClassId,
    pub num_gt: usize,
    pub amota: f64,
    pub amotp: f64,
    pub motar: f64,
    pub mota: f64,
    pub motp: Option<f64>,
    pub recall: f64,
    /// Counts at the confidence floor that maximizes MOTA.
    pub best_floor: Option<f64>,
    pub id_switches: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// MOTAR at each recall threshold, in ascending threshold order.
    pub motar_curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateMetrics {
    pub amota: f64,
    pub amotp: f64,
    pub motar: f64,
    pub mota: f64,
    pub motp: Option<f64>,
    pub recall: f64,
    pub id_switches: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub num_thresholds: usize,
    pub dist_threshold: f64,
    pub num_gt: usize,
    pub aggregate: AggregateMetrics,
    pub classes: Vec<ClassMetrics>,
}

fn count_all(seqs: &[Sequence], floor: f64, dist: f64) -> ErrorCounts {
    let mut total = ErrorCounts::default();
    for s in seqs {
        total.merge(&count_unchecked(s, floor, dist));
    }
    total
}

fn evaluate_class(
    seqs: &[Sequence],
    class: ClassId,
    params: &ProtocolParams,
) -> Result<ClassMetrics, MetricsError> {
    let seqs: Vec<Sequence> = seqs.iter().map(|s| s.restricted_to(class)).collect();
    let num_gt: usize = seqs.iter().map(Sequence::num_annotations).sum();
    let n = params.num_thresholds;
    let dist = params.dist_threshold;

    let mut floors: Vec<f64> = seqs
        .iter()
        .flat_map(|s| {
            s.predictions
                .iter()
                .flat_map(|f| f.objects.iter().map(|o| o.confidence))
        })
        .collect();
    floors.sort_by(|a, b| b.total_cmp(a));
    floors.dedup();

    let at_floor: Vec<ErrorCounts> = floors
        .par_iter()
        .map(|&f| count_all(&seqs, f, dist))
        .collect();

    let mut motar_curve = Vec::with_capacity(n - 1);
    let mut motp_sum = 0.0;
    for i in 1..n {
        match at_floor.iter().find(|c| c.reaches(i, n)) {
            Some(c) => {
                motar_curve.push(motar(c, c.recall(), num_gt)?);
                motp_sum += c.motp().unwrap_or(dist);
            }
            None => {
                motar_curve.push(0.0);
                motp_sum += dist;
            }
        }
    }
    let amota = motar_curve.iter().sum::<f64>() / (n - 1) as f64;
    let amotp = motp_sum / (n - 1) as f64;

    let (best_floor, best) =
        match at_floor
            .iter()
            .enumerate()
            .fold(None::<(usize, f64)>, |acc, (i, c)| match acc {
                Some((_, m)) if c.mota() <= m => acc,
                _ => Some((i, c.mota())),
            }) {
            Some((i, _)) => (Some(floors[i]), at_floor[i].clone()),
            None => (None, count_all(&seqs, f64::INFINITY, dist)),
        };
    let best_motar = if best.recall() > 0.0 {
        motar(&best, best.recall(), num_gt)?
    } else {
        0.0
    };

    Ok(ClassMetrics {
        class,
        num_gt,
        amota,
        amotp,
        motar: best_motar,
        mota: best.mota(),
        motp: best.motp(),
        recall: best.recall(),
        best_floor,
        id_switches: best.id_switches,
        false_positives: best.false_positives,
        false_negatives: best.false_negatives,
        motar_curve,
    })
}

/// Full report: per-class metrics and their mean over evaluated classes.
pub fn amota(seqs: &[Sequence], params: &ProtocolParams) -> Result<MetricsReport, MetricsError> {
    if params.num_thresholds < 2 {
        return Err(MetricsError::TooFewThresholds(params.num_thresholds));
    }
    if !(params.dist_threshold > 0.0) {
        return Err(MetricsError::InvalidDistance(params.dist_threshold));
    }
    for s in seqs {
        s.validate()?;
    }
    let wanted: Option<BTreeSet<ClassId>> =
        params.classes.as_ref().map(|c| c.iter().copied().collect());
    let classes: BTreeSet<ClassId> = seqs
        .iter()
        .flat_map(|s| {
            s.ground_truth
                .iter()
                .flat_map(|f| f.objects.iter().map(|o| o.class))
        })
        .filter(|c| wanted.as_ref().is_none_or(|w| w.contains(c)))
        .collect();
    if classes.is_empty() {
        return Err(MetricsError::EmptyGroundTruth);
    }

    let per_class = classes
        .iter()
        .map(|&c| evaluate_class(seqs, c, params))
        .collect::<Result<Vec<_>, _>>()?;
    let k = per_class.len() as f64;
    let mean = |f: &dyn Fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k;
    let motps: Vec<f64> = per_class.iter().filter_map(|c| c.motp).collect();

    let aggregate = AggregateMetrics {
        amota: mean(&|c| c.amota),
        amotp: mean(&|c| c.amotp),
        motar: mean(&|c| c.motar),
        mota: mean(&|c| c.mota),
        motp: (!motps.is_empty()).then(|| motps.iter().sum::<f64>() / motps.len() as f64),
        recall: mean(&|c| c.recall),
        id_switches: per_class.iter().map(|c| c.id_switches).sum(),
        false_positives: per_class.iter().map(|c| c.false_positives).sum(),
        false_negatives: per_class.iter().map(|c| c.false_negatives).sum(),
    };
    Ok(MetricsReport {
        num_thresholds: params.num_thresholds,
        dist_threshold: params.dist_threshold,
        num_gt: per_class.iter().map(|c| c.num_gt).sum(),
        aggregate,
        classes: per_class,
    })
}
