//! Depth/velocity/displacement-aware greedy association.
//!
//! Every detection carries a predicted displacement: its image motion since
//! the previous frame, so `center - displacement` is where the same object
//! was one frame earlier. Detections are visited in descending confidence; each one looks
//! for unmatched tracks within `radius` pixels of `center - displacement`
//! and takes the one with the lowest weighted cost
//!
//! ```text
//! cost = alpha * |Δcenter|² + beta * Δdepth² + delta * |Δvelocity|²
//! ```
//!
//! where the pixel term compares the detection's center with the track's
//! last center. Pairs of different classes never match.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::BBox2d;
use crate::geometry::Pixel;

pub type ClassId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrackId(pub u64);

impl fmt::Display for TrackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssociationError {
    #[error("track id {0} appears more than once")]
    DuplicateTrackId(TrackId),
    #[error("invalid cost weights: {0}")]
    InvalidWeights(String),
}

/// Planar velocity in the vehicle frame, m/s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Velocity {
    pub vx: f64,
    pub vy: f64,
}

impl Velocity {
    pub const fn new(vx: f64, vy: f64) -> Self {
        Self { vx, vy }
    }
}

/// Image-plane offset in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Offset {
    pub du: f64,
    pub dv: f64,
}

impl Offset {
    pub const fn new(du: f64, dv: f64) -> Self {
        Self { du, dv }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub center: Pixel,
    /// Camera-axis depth, meters.
    pub depth: f64,
    pub velocity: Velocity,
    pub class: ClassId,
    pub confidence: f64,
    /// Image motion since the previous frame (current center minus previous
    /// center), so `center - displacement` is where the object was.
    pub displacement: Offset,
    pub bbox: Option<BBox2d>,
}

impl Detection {
    pub fn gate_center(&self) -> Pixel {
        Pixel::new(
            self.center.u - self.displacement.du,
            self.center.v - self.displacement.dv,
        )
    }

    pub fn is_valid(&self) -> bool {
        self.depth > 0.0
            && (0.0..=1.0).contains(&self.confidence)
            && [
                self.center.u,
                self.center.v,
                self.depth,
                self.velocity.vx,
                self.velocity.vy,
                self.displacement.du,
                self.displacement.dv,
            ]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Track {
    pub id: TrackId,
    pub center: Pixel,
    pub depth: f64,
    pub velocity: Velocity,
    pub class: ClassId,
    pub confidence: f64,
    pub first_seen: u64,
    pub last_seen: u64,
    /// Frames since creation.
    pub age: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostWeights {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    /// Gate radius in pixels.
    pub radius: f64,
}

impl CostWeights {
    pub const DEFAULT_RADIUS: f64 = 50.0;

    pub fn new(alpha: f64, beta: f64, delta: f64, radius: f64) -> Result<Self, AssociationError> {
        let w = Self {
            alpha,
            beta,
            delta,
            radius,
        };
        w.validate()?;
        Ok(w)
    }

    /// Defaults for a given radius: the pixel term is normalized by r², the
    /// depth and velocity weights bring a 5 m and 2 m/s error to ~1.
    pub fn with_radius(radius: f64) -> Self {
        Self {
            alpha: 1.0 / (radius * radius),
            beta: 0.04,
            delta: 0.25,
            radius,
        }
    }

    pub fn validate(&self) -> Result<(), AssociationError> {
        let terms = [self.alpha, self.beta, self.delta];
        if terms.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(AssociationError::InvalidWeights(format!(
                "alpha, beta, delta must be finite and non-negative, got {terms:?}"
            )));
        }
        if terms.iter().all(|w| *w == 0.0) {
            return Err(AssociationError::InvalidWeights(
                "at least one of alpha, beta, delta must be positive".into(),
            ));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(AssociationError::InvalidWeights(format!(
                "radius must be positive and finite, got {}",
                self.radius
            )));
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            alpha: self.alpha * factor,
            beta: self.beta * factor,
            delta: self.delta * factor,
            radius: self.radius,
        }
    }
}

impl Default for CostWeights {
    fn default() -> Self {
        Self::with_radius(Self::DEFAULT_RADIUS)
    }
}

/// Matching cost between a detection at t and a track from t-1; `+inf` when
/// the classes differ.
pub fn pairwise_cost(det: &Detection, trk: &Track, w: &CostWeights) -> f64 {
    if det.class != trk.class {
        return f64::INFINITY;
    }
    let pixel = det.center.distance_squared(&trk.center);
    let dd = det.depth - trk.depth;
    let dvx = det.velocity.vx - trk.velocity.vx;
    let dvy = det.velocity.vy - trk.velocity.vy;
    w.alpha * pixel + w.beta * dd * dd + w.delta * (dvx * dvx + dvy * dvy)
}

pub fn within_gate(det: &Detection, trk: &Track, radius: f64) -> bool {
    trk.center.distance_squared(&det.gate_center()) <= radius * radius
}

/// `pairwise_cost` restricted to the radius gate (`+inf` outside it).
pub fn gated_cost(det: &Detection, trk: &Track, w: &CostWeights) -> f64 {
    if within_gate(det, trk, w.radius) {
        pairwise_cost(det, trk, w)
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Association {
    /// (detection index, track id), in processing order.
    pub matches: Vec<(usize, TrackId)>,
    /// Unmatched detection indices, in processing order.
    pub unmatched_dets: Vec<usize>,
    /// Sorted by id.
    pub unmatched_tracks: Vec<TrackId>,
}

/// Detection indices by descending confidence, ties by index.
pub fn processing_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .confidence
            .total_cmp(&dets[a].confidence)
            .then(a.cmp(&b))
    });
    order
}

/// Bucket grid over track centers with cell size equal to the gate radius.
struct GateGrid {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl GateGrid {
    fn new(tracks: &[Track], radius: f64) -> Self {
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, t) in tracks.iter().enumerate() {
            buckets
                .entry(Self::key(&t.center, radius))
                .or_default()
                .push(i);
        }
        Self {
            cell: radius,
            buckets,
        }
    }

    fn key(p: &Pixel, cell: f64) -> (i64, i64) {
        ((p.u / cell).floor() as i64, (p.v / cell).floor() as i64)
    }

    fn near(&self, p: &Pixel) -> impl Iterator<Item = usize> + '_ {
        let (kx, ky) = Self::key(p, self.cell);
        (-1..=1)
            .flat_map(move |dx| {
                (-1..=1).map(move |dy| (kx.saturating_add(dx), ky.saturating_add(dy)))
            })
            .filter_map(|k| self.buckets.get(&k))
            .flatten()
            .copied()
    }
}

pub fn greedy_associate(
    dets: &[Detection],
    tracks: &[Track],
    w: &CostWeights,
) -> Result<Association, AssociationError> {
    let mut seen = HashSet::with_capacity(tracks.len());
    for t in tracks {
        if !seen.insert(t.id) {
            return Err(AssociationError::DuplicateTrackId(t.id));
        }
    }

    let grid = GateGrid::new(tracks, w.radius);
    let mut taken = vec![false; tracks.len()];
    let mut out = Association::default();

    for d in processing_order(dets) {
        let det = &dets[d];
        let mut best: Option<(f64, TrackId, usize)> = None;
        for ti in grid.near(&det.gate_center()) {
            let trk = &tracks[ti];
            if taken[ti] || !within_gate(det, trk, w.radius) {
                continue;
            }
            let cost = pairwise_cost(det, trk, w);
            if !cost.is_finite() {
                continue;
            }
            let better = match best {
                None => true,
                Some((bc, bid, _)) => cost < bc || (cost == bc && trk.id < bid),
            };
            if better {
                best = Some((cost, trk.id, ti));
            }
        }
        match best {
            Some((_, id, ti)) => {
                taken[ti] = true;
                out.matches.push((d, id));
            }
            None => out.unmatched_dets.push(d),
        }
    }

    out.unmatched_tracks = tracks
        .iter()
        .zip(&taken)
        .filter(|(_, t)| !**t)
        .map(|(trk, _)| trk.id)
        .collect();
    out.unmatched_tracks.sort();
    Ok(out)
}

/// Sum of pairwise costs over the matched pairs.
pub fn total_cost(
    assoc: &Association,
    dets: &[Detection],
    tracks: &[Track],
    w: &CostWeights,
) -> f64 {
    let by_id: HashMap<TrackId, &Track> = tracks.iter().map(|t| (t.id, t)).collect();
    let mut pairs: Vec<(usize, TrackId)> = assoc.matches.clone();
    pairs.sort();
    pairs
        .iter()
        .map(|(d, id)| pairwise_cost(&dets[*d], by_id[id], w))
        .sum()
}
