//! Online tracker: fusion, association and track lifecycle per frame.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::association::{
    greedy_associate, Association, AssociationError, ClassId, CostWeights, Detection, Offset,
    Track, TrackId, Velocity,
};
use crate::fusion::{
    expand_pillars, frustum_associate, AssociationMode, FusionError, PillarDims,
    PreliminaryDetection, RadarPoint,
};
use crate::geometry::{CameraModel, Pixel, VehiclePoint};
use crate::heatmap::{render_gaussian, Heatmap, HeatmapConfig, HeatmapError, PeakSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackerError {
    #[error("frame {got} does not follow frame {previous}")]
    OutOfOrderFrame { previous: u64, got: u64 },
    #[error("timestamp {got} at frame {frame} is earlier than the previous {previous}")]
    TimestampRegression { frame: u64, previous: f64, got: f64 },
    #[error("detection {index} in frame {frame} is invalid")]
    InvalidDetection { frame: u64, index: usize },
    #[error("invalid tracker config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Association(#[from] AssociationError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub enabled: bool,
    pub pillar: PillarDims,
    /// Fractional half-width of the frustum depth window.
    pub depth_tolerance: f64,
    pub mode: AssociationMode,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            pillar: PillarDims::default(),
            depth_tolerance: 0.25,
            mode: AssociationMode::Shared,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub weights: CostWeights,
    pub fusion: FusionConfig,
    /// A track can be matched at most `max_age` frames after it was last
    /// matched; `1` restricts matching to tracks seen in the immediately
    /// preceding frame.
    pub max_age: u64,
    /// Detections below this confidence are ignored entirely.
    pub min_confidence: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            weights: CostWeights::default(),
            fusion: FusionConfig::default(),
            max_age: 3,
            min_confidence: 0.0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackerError> {
        self.weights.validate()?;
        if self.max_age < 1 {
            return Err(TrackerError::InvalidConfig(
                "max_age must be at least 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.min_confidence) {
            return Err(TrackerError::InvalidConfig(format!(
                "min_confidence must lie in [0, 1), got {}",
                self.min_confidence
            )));
        }
        if self.fusion.enabled {
            self.fusion.pillar.validate()?;
            if !(self.fusion.depth_tolerance > 0.0 && self.fusion.depth_tolerance < 1.0) {
                return Err(FusionError::InvalidDepthTolerance(self.fusion.depth_tolerance).into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameInput {
    pub frame_index: u64,
    pub timestamp: f64,
    pub detections: Vec<Detection>,
    pub radar: Vec<RadarPoint>,
}

/// A live track as reported for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackReport {
    pub id: TrackId,
    pub center: Pixel,
    pub depth: f64,
    pub velocity: Velocity,
    pub class: ClassId,
    pub confidence: f64,
    /// Depth and velocity came from a radar pillar.
    pub fused: bool,
    /// Ground-plane position recovered from center and depth.
    pub position: VehiclePoint,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameResult {
    pub frame_index: u64,
    pub timestamp: f64,
    pub tracks: Vec<TrackReport>,
}

/// What association saw in one step, for offline analysis.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepTrace {
    /// Detections after the confidence floor and radar fusion.
    pub detections: Vec<Detection>,
    /// Tracks that were eligible for matching.
    pub candidates: Vec<Track>,
    pub association: Association,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tracker {
    camera: CameraModel,
    tracks: Vec<Track>,
    next_id: u64,
    last_frame: Option<(u64, f64)>,
}

impl Tracker {
    pub fn new(camera: CameraModel) -> Self {
        Self {
            camera,
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
        }
    }

    pub fn camera(&self) -> &CameraModel {
        &self.camera
    }

    /// All retained tracks, including coasting ones.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn step(
        &mut self,
        input: &FrameInput,
        cfg: &TrackerConfig,
    ) -> Result<FrameResult, TrackerError> {
        self.advance(input, cfg, false).map(|(r, _)| r)
    }

    pub fn step_traced(
        &mut self,
        input: &FrameInput,
        cfg: &TrackerConfig,
    ) -> Result<(FrameResult, StepTrace), TrackerError> {
        self.advance(input, cfg, true)
            .map(|(r, t)| (r, t.unwrap_or_default()))
    }

    fn advance(
        &mut self,
        input: &FrameInput,
        cfg: &TrackerConfig,
        want_trace: bool,
    ) -> Result<(FrameResult, Option<StepTrace>), TrackerError> {
        let t = input.frame_index;
        if let Some((prev, prev_ts)) = self.last_frame {
            if t <= prev {
                return Err(TrackerError::OutOfOrderFrame {
                    previous: prev,
                    got: t,
                });
            }
            if input.timestamp < prev_ts {
                return Err(TrackerError::TimestampRegression {
                    frame: t,
                    previous: prev_ts,
                    got: input.timestamp,
                });
            }
        }
        if let Some(index) = input.detections.iter().position(|d| !d.is_valid()) {
            return Err(TrackerError::InvalidDetection { frame: t, index });
        }

        let mut dets: Vec<Detection> = input
            .detections
            .iter()
            .filter(|d| d.confidence >= cfg.min_confidence)
            .copied()
            .collect();
        let fused = self.fuse(&mut dets, &input.radar, cfg)?;

        // Frame indices may skip; drop anything already out of reach.
        self.tracks.retain(|trk| t - trk.last_seen <= cfg.max_age);
        let assoc = greedy_associate(&dets, &self.tracks, &cfg.weights)?;
        let trace = want_trace.then(|| StepTrace {
            detections: dets.clone(),
            candidates: self.tracks.clone(),
            association: assoc.clone(),
        });

        let mut reports = Vec::with_capacity(dets.len());
        for &(d, id) in &assoc.matches {
            let det = &dets[d];
            // tracks are kept sorted by id
            let slot = self
                .tracks
                .binary_search_by_key(&id, |trk| trk.id)
                .expect("association returns known track ids");
            let trk = &mut self.tracks[slot];
            trk.center = det.center;
            trk.depth = det.depth;
            trk.velocity = det.velocity;
            trk.confidence = det.confidence;
            trk.last_seen = t;
            reports.push((d, *trk));
        }
        for &d in &assoc.unmatched_dets {
            let det = &dets[d];
            let trk = Track {
                id: TrackId(self.next_id),
                center: det.center,
                depth: det.depth,
                velocity: det.velocity,
                class: det.class,
                confidence: det.confidence,
                first_seen: t,
                last_seen: t,
                age: 0,
            };
            self.next_id += 1;
            self.tracks.push(trk);
            reports.push((d, trk));
        }
        for trk in &mut self.tracks {
            trk.age = t - trk.first_seen;
        }
        // Keep only tracks that can still be matched in the next frame.
        self.tracks
            .retain(|trk| t + 1 - trk.last_seen <= cfg.max_age);
        self.tracks.sort_by_key(|trk| trk.id);
        self.last_frame = Some((t, input.timestamp));

        let mut tracks: Vec<TrackReport> = reports
            .into_iter()
            .map(|(d, trk)| TrackReport {
                id: trk.id,
                center: trk.center,
                depth: trk.depth,
                velocity: trk.velocity,
                class: trk.class,
                confidence: trk.confidence,
                fused: fused[d],
                position: self.camera.lift(&trk.center, trk.depth),
            })
            .collect();
        tracks.sort_by_key(|r| r.id);

        Ok((
            FrameResult {
                frame_index: t,
                timestamp: input.timestamp,
                tracks,
            },
            trace,
        ))
    }

    /// Replaces depth and velocity of boxed detections with the closest radar
    /// pillar in their frustum. Returns which detections were fused.
    fn fuse(
        &self,
        dets: &mut [Detection],
        radar: &[RadarPoint],
        cfg: &TrackerConfig,
    ) -> Result<Vec<bool>, TrackerError> {
        let mut fused = vec![false; dets.len()];
        if !cfg.fusion.enabled || radar.is_empty() {
            return Ok(fused);
        }
        let boxed: Vec<usize> = (0..dets.len())
            .filter(|&i| dets[i].bbox.is_some())
            .collect();
        let prelim: Vec<PreliminaryDetection> = boxed
            .iter()
            .map(|&i| PreliminaryDetection {
                bbox: dets[i].bbox.expect("filtered on bbox"),
                est_depth: dets[i].depth,
                class: dets[i].class,
                confidence: dets[i].confidence,
            })
            .collect();
        let pillars = expand_pillars(radar, cfg.fusion.pillar)?;
        let matches = frustum_associate(
            &prelim,
            &pillars,
            &self.camera,
            cfg.fusion.depth_tolerance,
            cfg.fusion.mode,
        )?;
        for (&i, m) in boxed.iter().zip(matches) {
            if let Some(m) = m {
                dets[i].depth = m.depth;
                dets[i].velocity = Velocity::new(m.vx, m.vy);
                fused[i] = true;
            }
        }
        Ok(fused)
    }

    /// Single-channel heatmap of current track centers (diagnostic only).
    pub fn prior_heatmap(
        &self,
        config: HeatmapConfig,
        sigma: f64,
    ) -> Result<Heatmap, HeatmapError> {
        let r = f64::from(config.downsample());
        let peaks: Vec<PeakSpec> = self
            .tracks
            .iter()
            .filter_map(|t| {
                let (col, row) = ((t.center.u / r).floor(), (t.center.v / r).floor());
                (col >= 0.0
                    && row >= 0.0
                    && (col as usize) < config.cols()
                    && (row as usize) < config.rows())
                .then_some(PeakSpec {
                    col: col as usize,
                    row: row as usize,
                    class: 0,
                    sigma,
                })
            })
            .collect();
        render_gaussian(&peaks, config)
    }
}

/// Median and 99th percentile of per-frame step latency.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LatencyStats {
    pub frames: usize,
    pub median_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

impl LatencyStats {
    pub fn from_samples(samples_ms: &[f64]) -> Self {
        if samples_ms.is_empty() {
            return Self::default();
        }
        let mut s = samples_ms.to_vec();
        s.sort_by(f64::total_cmp);
        Self {
            frames: s.len(),
            median_ms: percentile(&s, 0.5),
            p99_ms: percentile(&s, 0.99),
            max_ms: s[s.len() - 1],
        }
    }
}

/// Nearest-rank percentile of sorted samples.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SequenceOutput {
    pub results: Vec<FrameResult>,
    pub latency: LatencyStats,
}

pub fn run_sequence(
    inputs: &[FrameInput],
    camera: CameraModel,
    cfg: &TrackerConfig,
) -> Result<SequenceOutput, TrackerError> {
    cfg.validate()?;
    let mut tracker = Tracker::new(camera);
    let mut results = Vec::with_capacity(inputs.len());
    let mut samples = Vec::with_capacity(inputs.len());
    for input in inputs {
        let start = Instant::now();
        let r = tracker.step(input, cfg)?;
        samples.push(start.elapsed().as_secs_f64() * 1e3);
        results.push(r);
    }
    Ok(SequenceOutput {
        results,
        latency: LatencyStats::from_samples(&samples),
    })
}

/// Image-plane displacement implied by constant planar velocity over `dt`.
pub fn constant_velocity_displacement(
    camera: &CameraModel,
    center: Pixel,
    depth: f64,
    velocity: Velocity,
    dt: f64,
) -> Offset {
    let now = camera.lift(&center, depth);
    let before = VehiclePoint::new(now.x - velocity.vx * dt, now.y - velocity.vy * dt, now.z);
    match camera.project_unbounded(&before.to_vector()) {
        Some(ip) => Offset::new(center.u - ip.u, center.v - ip.v),
        None => Offset::default(),
    }
}
