//! Deterministic synthetic scenes: constant-velocity objects seen by a
//! pinhole camera, noisy detections with displacement, radar returns with
//! clutter, dropout and IoU-based occlusion.
//!
//! Randomness comes from ChaCha8 seeded by the scenario seed, with one
//! stream per (frame, channel). Every object draws its noise in every frame
//! whether or not it is visible, so changing visibility never shifts the
//! draws of other objects or frames.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::association::{ClassId, Detection, Offset, Velocity};
use crate::fusion::{BBox2d, RadarPoint};
use crate::geometry::{CameraModel, VehiclePoint};
use crate::heatmap::{render_gaussian, Heatmap, HeatmapConfig, HeatmapError, PeakSpec};
use crate::metrics::{GroundTruthFrame, GroundTruthObject};
use crate::tracker::FrameInput;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulatorError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error("object {index} starts behind the camera (depth {depth})")]
    BehindCamera { index: usize, depth: f64 },
}

/// Box extents along vehicle x (length), y (width) and z (height), meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSize {
    pub length: f64,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub class: ClassId,
    /// Box center at time zero.
    pub position: VehiclePoint,
    pub velocity: Velocity,
    pub size: ObjectSize,
}

impl ObjectSpec {
    pub fn center_at(&self, time: f64) -> VehiclePoint {
        VehiclePoint::new(
            self.position.x + self.velocity.vx * time,
            self.position.y + self.velocity.vy * time,
            self.position.z,
        )
    }

    pub fn corners_at(&self, time: f64) -> [VehiclePoint; 8] {
        let c = self.center_at(time);
        let (hx, hy, hz) = (
            self.size.length / 2.0,
            self.size.width / 2.0,
            self.size.height / 2.0,
        );
        let mut out = [c; 8];
        for (i, p) in out.iter_mut().enumerate() {
            p.x += if i & 1 == 0 { -hx } else { hx };
            p.y += if i & 2 == 0 { -hy } else { hy };
            p.z += if i & 4 == 0 { -hz } else { hz };
        }
        out
    }
}

/// Standard deviations of detection noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub center_px: f64,
    pub depth_m: f64,
    pub velocity_mps: f64,
    pub displacement_px: f64,
}

impl NoiseConfig {
    pub const NONE: NoiseConfig = NoiseConfig {
        center_px: 0.0,
        depth_m: 0.0,
        velocity_mps: 0.0,
        displacement_px: 0.0,
    };

    pub fn standard() -> Self {
        Self {
            center_px: 2.0,
            depth_m: 0.5,
            velocity_mps: 0.5,
            displacement_px: 2.0,
        }
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::NONE
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadarConfig {
    pub points_per_object: u32,
    pub position_sigma_m: f64,
    pub velocity_sigma_mps: f64,
    /// Uniform clutter candidates drawn per frame; only those inside the
    /// camera view are emitted.
    pub clutter_per_frame: u32,
}

impl RadarConfig {
    pub const NONE: RadarConfig = RadarConfig {
        points_per_object: 0,
        position_sigma_m: 0.0,
        velocity_sigma_mps: 0.0,
        clutter_per_frame: 0,
    };

    pub fn standard() -> Self {
        Self {
            points_per_object: 2,
            position_sigma_m: 0.2,
            velocity_sigma_mps: 0.2,
            clutter_per_frame: 4,
        }
    }
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self::NONE
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OcclusionConfig {
    pub enabled: bool,
    /// Projected-box IoU above which the farther object's detection is dropped.
    pub iou_threshold: f64,
}

impl Default for OcclusionConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            iou_threshold: 0.7,
        }
    }
}

/// Region clutter is drawn from, vehicle frame.
const CLUTTER_X: (f64, f64) = (2.0, 80.0);
const CLUTTER_Y: (f64, f64) = (-30.0, 30.0);
const CONFIDENCE_RANGE: (f64, f64) = (0.5, 1.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub num_frames: u64,
    pub frame_dt: f64,
    #[serde(default)]
    pub camera: CameraModel,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub radar: RadarConfig,
    #[serde(default)]
    pub occlusion: OcclusionConfig,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimulatorError> {
        let bad = |msg: String| Err(SimulatorError::InvalidConfig(msg));
        if !(self.frame_dt.is_finite() && self.frame_dt > 0.0) {
            return bad(format!("frame_dt must be positive, got {}", self.frame_dt));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        let sigmas = [
            ("noise.center_px", self.noise.center_px),
            ("noise.depth_m", self.noise.depth_m),
            ("noise.velocity_mps", self.noise.velocity_mps),
            ("noise.displacement_px", self.noise.displacement_px),
            ("radar.position_sigma_m", self.radar.position_sigma_m),
            ("radar.velocity_sigma_mps", self.radar.velocity_sigma_mps),
        ];
        if let Some((name, v)) = sigmas.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return bad(format!("{name} must be a non-negative number, got {v}"));
        }
        if !(self.occlusion.iou_threshold.is_finite()
            && (0.0..=1.0).contains(&self.occlusion.iou_threshold))
        {
            return bad(format!(
                "occlusion.iou_threshold must lie in [0, 1], got {}",
                self.occlusion.iou_threshold
            ));
        }
        for (index, o) in self.objects.iter().enumerate() {
            let s = o.size;
            if ![s.length, s.width, s.height]
                .iter()
                .all(|v| v.is_finite() && *v > 0.0)
            {
                return bad(format!("object {index} has a non-positive size"));
            }
            if !(o.position.is_finite() && o.velocity.vx.is_finite() && o.velocity.vy.is_finite()) {
                return bad(format!("object {index} has non-finite motion"));
            }
            let depth = self.camera.depth_of(&o.position);
            if depth <= 0.0 {
                return Err(SimulatorError::BehindCamera { index, depth });
            }
        }
        Ok(())
    }
}

/// One generated frame. `provenance[i]` is the ground-truth id behind
/// `input.detections[i]`; it is never given to the tracker.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFrame {
    pub input: FrameInput,
    pub ground_truth: GroundTruthFrame,
    pub provenance: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub camera: CameraModel,
    pub frames: Vec<SceneFrame>,
}

impl Scene {
    pub fn inputs(&self) -> Vec<FrameInput> {
        self.frames.iter().map(|f| f.input.clone()).collect()
    }

    pub fn ground_truth(&self) -> Vec<GroundTruthFrame> {
        self.frames.iter().map(|f| f.ground_truth.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy)]
enum Channel {
    Detection = 0,
    Dropout = 1,
    Radar = 2,
    Clutter = 3,
}

fn stream(seed: u64, frame: u64, channel: Channel) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame * 8 + channel as u64);
    rng
}

fn gauss(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    sigma * z
}

/// Ground-truth id of the object at `index`.
pub fn object_id(index: usize) -> u64 {
    index as u64 + 1
}

/// Projected image box of an object; `None` if any corner is behind the camera.
pub fn projected_box(cam: &CameraModel, obj: &ObjectSpec, time: f64) -> Option<BBox2d> {
    let mut b = BBox2d::new(
        f64::INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::NEG_INFINITY,
    );
    for c in obj.corners_at(time) {
        let p = cam.project_unbounded(&c.to_vector())?;
        b.u_min = b.u_min.min(p.u);
        b.v_min = b.v_min.min(p.v);
        b.u_max = b.u_max.max(p.u);
        b.v_max = b.v_max.max(p.v);
    }
    Some(b)
}

struct ObjectView {
    visible: bool,
    center: Option<crate::geometry::ImagePoint>,
    bbox: Option<BBox2d>,
}

pub fn generate(cfg: &ScenarioConfig) -> Result<Scene, SimulatorError> {
    cfg.validate()?;
    let cam = &cfg.camera;
    let mut frames = Vec::with_capacity(cfg.num_frames as usize);

    for t in 0..cfg.num_frames {
        let time = t as f64 * cfg.frame_dt;
        let views: Vec<ObjectView> = cfg
            .objects
            .iter()
            .map(|o| {
                let c = o.center_at(time);
                ObjectView {
                    visible: cam.project_to_image(&c).is_some(),
                    center: cam.project_unbounded(&c.to_vector()),
                    bbox: projected_box(cam, o, time),
                }
            })
            .collect();

        let ground_truth = GroundTruthFrame {
            frame_index: t,
            objects: cfg
                .objects
                .iter()
                .zip(&views)
                .enumerate()
                .filter(|(_, (_, v))| v.visible)
                .map(|(i, (o, _))| {
                    let c = o.center_at(time);
                    GroundTruthObject {
                        id: object_id(i),
                        x: c.x,
                        y: c.y,
                        class: o.class,
                    }
                })
                .collect(),
        };

        let mut detectable: Vec<bool> = views
            .iter()
            .map(|v| v.visible && v.bbox.is_some())
            .collect();
        if cfg.occlusion.enabled {
            let before = detectable.clone();
            for i in 0..views.len() {
                for j in 0..views.len() {
                    if i == j || !before[i] || !before[j] {
                        continue;
                    }
                    let (bi, bj) = (
                        views[i].bbox.expect("detectable"),
                        views[j].bbox.expect("detectable"),
                    );
                    let (di, dj) = (
                        views[i].center.map_or(0.0, |c| c.depth),
                        views[j].center.map_or(0.0, |c| c.depth),
                    );
                    let i_farther = di > dj || (di == dj && i > j);
                    if i_farther && bi.iou(&bj) > cfg.occlusion.iou_threshold {
                        detectable[i] = false;
                    }
                }
            }
        }

        let mut det_rng = stream(cfg.seed, t, Channel::Detection);
        let mut drop_rng = stream(cfg.seed, t, Channel::Dropout);
        let mut detections = Vec::new();
        let mut provenance = Vec::new();
        for (i, (o, v)) in cfg.objects.iter().zip(&views).enumerate() {
            let n = cfg.noise;
            let noise = [
                gauss(&mut det_rng, n.center_px),
                gauss(&mut det_rng, n.center_px),
                gauss(&mut det_rng, n.depth_m),
                gauss(&mut det_rng, n.velocity_mps),
                gauss(&mut det_rng, n.velocity_mps),
                gauss(&mut det_rng, n.displacement_px),
                gauss(&mut det_rng, n.displacement_px),
            ];
            let confidence = det_rng.gen_range(CONFIDENCE_RANGE.0..=CONFIDENCE_RANGE.1);
            let dropped = drop_rng.gen::<f64>() < cfg.dropout;
            if !detectable[i] || dropped {
                continue;
            }
            let c = v.center.expect("visible objects project");
            let displacement = if t == 0 {
                Offset::default()
            } else {
                let prev =
                    cam.project_unbounded(&o.center_at((t - 1) as f64 * cfg.frame_dt).to_vector());
                match prev {
                    Some(p) => Offset::new(c.u - p.u + noise[5], c.v - p.v + noise[6]),
                    None => Offset::default(),
                }
            };
            let bbox = v
                .bbox
                .expect("detectable objects have a box")
                .translated(noise[0], noise[1]);
            detections.push(Detection {
                center: crate::geometry::Pixel::new(c.u + noise[0], c.v + noise[1]),
                depth: (c.depth + noise[2]).max(f64::MIN_POSITIVE),
                velocity: Velocity::new(o.velocity.vx + noise[3], o.velocity.vy + noise[4]),
                class: o.class,
                confidence,
                displacement,
                bbox: Some(bbox),
            });
            provenance.push(object_id(i));
        }

        let mut radar_rng = stream(cfg.seed, t, Channel::Radar);
        let mut radar = Vec::new();
        let rc = cfg.radar;
        for o in &cfg.objects {
            let center = o.center_at(time);
            for _ in 0..rc.points_per_object {
                let p = RadarPoint {
                    position: VehiclePoint::new(
                        center.x + gauss(&mut radar_rng, rc.position_sigma_m),
                        center.y + gauss(&mut radar_rng, rc.position_sigma_m),
                        center.z,
                    ),
                    vx: o.velocity.vx + gauss(&mut radar_rng, rc.velocity_sigma_mps),
                    vy: o.velocity.vy + gauss(&mut radar_rng, rc.velocity_sigma_mps),
                };
                if cam.project_to_image(&p.position).is_some() {
                    radar.push(p);
                }
            }
        }
        let mut clutter_rng = stream(cfg.seed, t, Channel::Clutter);
        for _ in 0..rc.clutter_per_frame {
            let p = RadarPoint {
                position: VehiclePoint::new(
                    clutter_rng.gen_range(CLUTTER_X.0..CLUTTER_X.1),
                    clutter_rng.gen_range(CLUTTER_Y.0..CLUTTER_Y.1),
                    0.0,
                ),
                vx: gauss(&mut clutter_rng, rc.velocity_sigma_mps),
                vy: gauss(&mut clutter_rng, rc.velocity_sigma_mps),
            };
            if cam.project_to_image(&p.position).is_some() {
                radar.push(p);
            }
        }

        frames.push(SceneFrame {
            input: FrameInput {
                frame_index: t,
                timestamp: time,
                detections,
                radar,
            },
            ground_truth,
            provenance,
        });
    }
    Ok(Scene {
        camera: cfg.camera,
        frames,
    })
}

/// Depth of the near object in the crossing scenario, meters.
pub const CROSSING_NEAR_DEPTH: f64 = 20.0;
/// Lateral speed of the near object, m/s.
pub const CROSSING_NEAR_SPEED: f64 = 6.0;
pub const CROSSING_FRAMES: u64 = 40;
pub const CROSSING_FRAME: u64 = 20;
pub const CROSSING_DT: f64 = 0.1;

/// Two same-class cars whose image trajectories cross at frame 20 with
/// opposite horizontal motion. The far car is the near one scaled about the
/// camera center by `(20 + depth_gap) / 20`, so both centers coincide in the
/// image at the crossing and their boxes have identical size. `depth_gap = 0`
/// is the degenerate control where the objects also coincide in 3D.
pub fn crossing_scenario(depth_gap: f64, seed: u64) -> ScenarioConfig {
    let camera = CameraModel::default();
    let k = (CROSSING_NEAR_DEPTH + depth_gap) / CROSSING_NEAR_DEPTH;
    let t_cross = CROSSING_FRAME as f64 * CROSSING_DT;
    let car = ObjectSize {
        length: 4.5,
        width: 1.8,
        height: 1.5,
    };
    let near = ObjectSpec {
        class: 0,
        position: VehiclePoint::new(CROSSING_NEAR_DEPTH, CROSSING_NEAR_SPEED * t_cross, 0.0),
        velocity: Velocity::new(0.0, -CROSSING_NEAR_SPEED),
        size: car,
    };
    let far = ObjectSpec {
        class: 0,
        position: VehiclePoint::new(
            CROSSING_NEAR_DEPTH * k,
            -CROSSING_NEAR_SPEED * t_cross * k,
            0.0,
        ),
        velocity: Velocity::new(0.0, CROSSING_NEAR_SPEED * k),
        size: ObjectSize {
            length: car.length * k,
            width: car.width * k,
            height: car.height * k,
        },
    };
    ScenarioConfig {
        seed,
        num_frames: CROSSING_FRAMES,
        frame_dt: CROSSING_DT,
        camera,
        dropout: 0.0,
        noise: NoiseConfig::standard(),
        radar: RadarConfig::standard(),
        occlusion: OcclusionConfig::default(),
        objects: vec![near, far],
    }
}

/// Ground-truth heatmap for the visible objects of one frame, with
/// `sigma = max(1, box diagonal / 6)` in grid cells.
pub fn ground_truth_heatmap(
    cfg: &ScenarioConfig,
    frame: u64,
    heatmap: HeatmapConfig,
) -> Result<Heatmap, HeatmapError> {
    let time = frame as f64 * cfg.frame_dt;
    let r = f64::from(heatmap.downsample());
    let peaks: Vec<PeakSpec> = cfg
        .objects
        .iter()
        .filter_map(|o| {
            let c = cfg.camera.project_to_image(&o.center_at(time))?;
            let b = projected_box(&cfg.camera, o, time)?;
            let col = ((c.u / r).floor() as usize).min(heatmap.cols() - 1);
            let row = ((c.v / r).floor() as usize).min(heatmap.rows() - 1);
            let diag = ((b.u_max - b.u_min).powi(2) + (b.v_max - b.v_min).powi(2)).sqrt() / r;
            Some(PeakSpec {
                col,
                row,
                class: o.class as usize,
                sigma: (diag / 6.0).max(1.0),
            })
        })
        .filter(|p| p.class < heatmap.classes())
        .collect();
    render_gaussian(&peaks, heatmap)
}
