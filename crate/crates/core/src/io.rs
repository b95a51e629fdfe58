//! JSONL record formats for replays, ground truth and tracking results, plus
//! TOML configuration loading. Field names are documented in
//! `docs/file-formats.md`. Fields a reader does not know are kept in `extra`
//! and written back unchanged.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::association::{ClassId, Detection, Offset, TrackId, Velocity};
use crate::fusion::{BBox2d, RadarPoint};
use crate::geometry::{CameraModel, Pixel, VehiclePoint};
use crate::metrics::{GroundTruthFrame, GroundTruthObject, PredictedObject, PredictionFrame};
use crate::simulator::{ScenarioConfig, Scene};
use crate::tracker::{constant_velocity_displacement, FrameInput, FrameResult, TrackerConfig};

/// Environment variable naming a directory with a default `tracker.toml`.
pub const CONFIG_DIR_ENV: &str = "RADAR_MOT_CONFIG_DIR";
pub const DEFAULT_TRACKER_FILE: &str = "tracker.toml";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid record at {path}:{line}")]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid TOML in {path}")]
    Toml {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("unknown class name {0:?}")]
    UnknownClass(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
    pub vx: f64,
    pub vy: f64,
    pub class: ClassId,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub du: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dv: Option<f64>,
    /// `[u_min, v_min, u_max, v_max]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarRecord {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub vx: f64,
    pub vy: f64,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

/// One frame of tracker input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub frame_index: u64,
    pub timestamp: f64,
    #[serde(default)]
    pub detections: Vec<DetectionRecord>,
    #[serde(default)]
    pub radar: Vec<RadarRecord>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthObjectRecord {
    pub id: u64,
    pub x: f64,
    pub y: f64,
    pub class: ClassId,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub frame_index: u64,
    #[serde(default)]
    pub objects: Vec<GroundTruthObjectRecord>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub id: u64,
    pub u: f64,
    pub v: f64,
    pub depth: f64,
    pub vx: f64,
    pub vy: f64,
    pub class: ClassId,
    pub confidence: f64,
    pub fused: bool,
    /// Vehicle-frame ground position lifted from (u, v, depth).
    pub x: f64,
    pub y: f64,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

/// One frame of tracker output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub frame_index: u64,
    pub timestamp: f64,
    #[serde(default)]
    pub tracks: Vec<TrackRecord>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

pub fn parse_jsonl<T: DeserializeOwned>(
    reader: impl BufRead,
    path: &Path,
) -> Result<Vec<T>, IoError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|source| IoError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let f = File::open(path).map_err(io_err(path))?;
    parse_jsonl(BufReader::new(f), path)
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("records serialize to JSON"));
        s.push('\n');
    }
    s
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        w.write_all(contents).map_err(io_err(path))?;
        w.flush().map_err(io_err(path))?;
    }
    tmp.persist(path).map_err(|e| IoError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), IoError> {
    write_atomic(path, to_jsonl(records).as_bytes())
}

/// How to fill in a missing `du`/`dv` in a replay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisplacementFallback {
    #[default]
    Zero,
    /// Project the detection's velocity back over the frame interval.
    ConstantVelocity,
}

impl DetectionRecord {
    pub fn from_detection(d: &Detection) -> Self {
        Self {
            u: d.center.u,
            v: d.center.v,
            depth: d.depth,
            vx: d.velocity.vx,
            vy: d.velocity.vy,
            class: d.class,
            confidence: d.confidence,
            du: Some(d.displacement.du),
            dv: Some(d.displacement.dv),
            bbox: d.bbox.map(|b| [b.u_min, b.v_min, b.u_max, b.v_max]),
            extra: Map::new(),
        }
    }

    /// `fallback` supplies the displacement when the record has none.
    pub fn to_detection(&self, fallback: impl FnOnce(&Self) -> Offset) -> Detection {
        let displacement = match (self.du, self.dv) {
            (Some(du), Some(dv)) => Offset::new(du, dv),
            _ => fallback(self),
        };
        Detection {
            center: Pixel::new(self.u, self.v),
            depth: self.depth,
            velocity: Velocity::new(self.vx, self.vy),
            class: self.class,
            confidence: self.confidence,
            displacement,
            bbox: self.bbox.map(|[a, b, c, d]| BBox2d::new(a, b, c, d)),
        }
    }
}

impl RadarRecord {
    pub fn from_point(p: &RadarPoint) -> Self {
        Self {
            x: p.position.x,
            y: p.position.y,
            z: p.position.z,
            vx: p.vx,
            vy: p.vy,
            extra: Map::new(),
        }
    }

    pub fn to_point(&self) -> RadarPoint {
        RadarPoint {
            position: VehiclePoint::new(self.x, self.y, self.z),
            vx: self.vx,
            vy: self.vy,
        }
    }
}

impl ReplayRecord {
    pub fn from_input(input: &FrameInput) -> Self {
        Self {
            frame_index: input.frame_index,
            timestamp: input.timestamp,
            detections: input
                .detections
                .iter()
                .map(DetectionRecord::from_detection)
                .collect(),
            radar: input.radar.iter().map(RadarRecord::from_point).collect(),
            extra: Map::new(),
        }
    }
}

/// Converts replay records to tracker inputs. The frame interval for the
/// constant-velocity fallback is the timestamp difference to the previous
/// record; the first record gets zero displacement.
pub fn replay_to_inputs(
    records: &[ReplayRecord],
    camera: &CameraModel,
    fallback: DisplacementFallback,
) -> Vec<FrameInput> {
    let mut prev_ts: Option<f64> = None;
    records
        .iter()
        .map(|r| {
            let dt = prev_ts.map(|p| r.timestamp - p);
            prev_ts = Some(r.timestamp);
            let detections = r
                .detections
                .iter()
                .map(|d| {
                    d.to_detection(|d| match (fallback, dt) {
                        (DisplacementFallback::ConstantVelocity, Some(dt)) if d.depth > 0.0 => {
                            constant_velocity_displacement(
                                camera,
                                Pixel::new(d.u, d.v),
                                d.depth,
                                Velocity::new(d.vx, d.vy),
                                dt,
                            )
                        }
                        _ => Offset::default(),
                    })
                })
                .collect();
            FrameInput {
                frame_index: r.frame_index,
                timestamp: r.timestamp,
                detections,
                radar: r.radar.iter().map(RadarRecord::to_point).collect(),
            }
        })
        .collect()
}

impl GroundTruthRecord {
    pub fn from_frame(f: &GroundTruthFrame) -> Self {
        Self {
            frame_index: f.frame_index,
            objects: f
                .objects
                .iter()
                .map(|o| GroundTruthObjectRecord {
                    id: o.id,
                    x: o.x,
                    y: o.y,
                    class: o.class,
                    extra: Map::new(),
                })
                .collect(),
            extra: Map::new(),
        }
    }

    pub fn to_frame(&self) -> GroundTruthFrame {
        GroundTruthFrame {
            frame_index: self.frame_index,
            objects: self
                .objects
                .iter()
                .map(|o| GroundTruthObject {
                    id: o.id,
                    x: o.x,
                    y: o.y,
                    class: o.class,
                })
                .collect(),
        }
    }
}

impl ResultRecord {
    pub fn from_result(r: &FrameResult) -> Self {
        Self {
            frame_index: r.frame_index,
            timestamp: r.timestamp,
            tracks: r
                .tracks
                .iter()
                .map(|t| TrackRecord {
                    id: t.id.0,
                    u: t.center.u,
                    v: t.center.v,
                    depth: t.depth,
                    vx: t.velocity.vx,
                    vy: t.velocity.vy,
                    class: t.class,
                    confidence: t.confidence,
                    fused: t.fused,
                    x: t.position.x,
                    y: t.position.y,
                    extra: Map::new(),
                })
                .collect(),
            extra: Map::new(),
        }
    }

    pub fn to_predictions(&self) -> PredictionFrame {
        PredictionFrame {
            frame_index: self.frame_index,
            objects: self
                .tracks
                .iter()
                .map(|t| PredictedObject {
                    track_id: TrackId(t.id),
                    x: t.x,
                    y: t.y,
                    class: t.class,
                    confidence: t.confidence,
                })
                .collect(),
        }
    }
}

impl From<&FrameResult> for PredictionFrame {
    fn from(r: &FrameResult) -> Self {
        ResultRecord::from_result(r).to_predictions()
    }
}

/// Replay and ground-truth records of a generated scene.
pub fn scene_records(scene: &Scene) -> (Vec<ReplayRecord>, Vec<GroundTruthRecord>) {
    scene
        .frames
        .iter()
        .map(|f| {
            (
                ReplayRecord::from_input(&f.input),
                GroundTruthRecord::from_frame(&f.ground_truth),
            )
        })
        .unzip()
}

/// Tracker settings file: `[tracker]` holds the tracker configuration and an
/// optional `[camera]` the camera the replay was recorded with.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerFile {
    #[serde(default)]
    pub tracker: TrackerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<CameraModel>,
}

fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    toml::from_str(&text).map_err(|source| IoError::Toml {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_tracker_file(path: &Path) -> Result<TrackerFile, IoError> {
    let f: TrackerFile = read_toml(path)?;
    f.tracker.validate().map_err(|e| IoError::Invalid {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(f)
}

/// `tracker.toml` from the directory named by `RADAR_MOT_CONFIG_DIR`, if set
/// and present.
pub fn default_tracker_path() -> Option<PathBuf> {
    let dir = std::env::var_os(CONFIG_DIR_ENV)?;
    let p = Path::new(&dir).join(DEFAULT_TRACKER_FILE);
    p.is_file().then_some(p)
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, IoError> {
    let cfg: ScenarioConfig = read_toml(path)?;
    cfg.validate().map_err(|e| IoError::Invalid {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(cfg)
}

/// Class names of the nuScenes tracking classes, by class id.
pub const CLASS_NAMES: [&str; 7] = [
    "car",
    "truck",
    "bus",
    "trailer",
    "pedestrian",
    "motorcycle",
    "bicycle",
];

pub fn class_name(class: ClassId) -> String {
    CLASS_NAMES
        .get(class as usize)
        .map_or_else(|| format!("class{class}"), |s| (*s).to_string())
}

/// Parses a class name or a numeric class id.
pub fn parse_class(s: &str) -> Result<ClassId, IoError> {
    let s = s.trim();
    if let Ok(n) = s.parse::<ClassId>() {
        return Ok(n);
    }
    CLASS_NAMES
        .iter()
        .position(|n| n.eq_ignore_ascii_case(s))
        .map(|i| i as ClassId)
        .or_else(|| s.strip_prefix("class").and_then(|n| n.parse().ok()))
        .ok_or_else(|| IoError::UnknownClass(s.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LINE: &str = r#"{"frame_index":3,"timestamp":0.3,"detections":[{"u":410.5,"v":224.0,"depth":20.25,"vx":0.0,"vy":-6.0,"class":0,"confidence":0.9,"du":30.0,"dv":0.0,"bbox":[360.0,180.0,460.0,268.0],"track_hint":7}],"radar":[{"x":20.0,"y":1.0,"z":0.0,"vx":0.0,"vy":-6.0,"rcs":4.5}],"sensor":"front"}"#;

    #[test]
    fn unknown_fields_survive_round_trip() {
        let r: ReplayRecord = serde_json::from_str(LINE).unwrap();
        assert_eq!(r.extra["sensor"], "front");
        assert_eq!(r.detections[0].extra["track_hint"], 7);
        assert_eq!(r.radar[0].extra["rcs"], 4.5);
        let back: ReplayRecord = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let text = format!("{LINE}\n\n{{\"frame_index\": \"x\"}}\n");
        let err =
            parse_jsonl::<ReplayRecord>(text.as_bytes(), Path::new("replay.jsonl")).unwrap_err();
        assert!(matches!(err, IoError::Parse { line: 3, .. }), "{err}");
        assert_eq!(err.to_string(), "invalid record at replay.jsonl:3");
    }

    #[test]
    fn missing_displacement_uses_fallback() {
        let mut r: ReplayRecord = serde_json::from_str(LINE).unwrap();
        r.detections[0].du = None;
        let mut r0 = r.clone();
        r0.timestamp = 0.2;
        r0.frame_index = 2;
        let cam = CameraModel::default();
        let zero = replay_to_inputs(&[r0.clone(), r.clone()], &cam, DisplacementFallback::Zero);
        assert_eq!(zero[1].detections[0].displacement, Offset::default());
        let cv = replay_to_inputs(&[r0, r], &cam, DisplacementFallback::ConstantVelocity);
        // 6 m/s to the right at 20.25 m over 0.1 s
        assert!((cv[1].detections[0].displacement.du - 600.0 / 20.25).abs() < 1e-9);
        assert_eq!(cv[0].detections[0].displacement, Offset::default());
    }

    #[test]
    fn class_names() {
        assert_eq!(parse_class("car").unwrap(), 0);
        assert_eq!(parse_class("Pedestrian").unwrap(), 4);
        assert_eq!(parse_class("12").unwrap(), 12);
        assert_eq!(parse_class("class9").unwrap(), 9);
        assert!(parse_class("tram").is_err());
        assert_eq!(class_name(4), "pedestrian");
        assert_eq!(class_name(9), "class9");
    }

    #[test]
    fn tracker_file_defaults_and_camera() {
        let f: TrackerFile = toml::from_str("[tracker]\nmax_age = 2\n[tracker.weights]\nalpha = 0.0004\nbeta = 0.0\ndelta = 0.0\nradius = 50.0\n").unwrap();
        assert_eq!(f.tracker.max_age, 2);
        assert_eq!(f.tracker.weights.beta, 0.0);
        assert!(f.camera.is_none());
        assert!(toml::from_str::<TrackerFile>("[tracker]\nmax_agee = 2\n").is_err());
    }

    #[test]
    fn partial_tables_keep_defaults() {
        let f: TrackerFile = toml::from_str(
            "[tracker.weights]\nbeta = 0.1\n[tracker.fusion.pillar]\nwidth_y = 1.0\n",
        )
        .unwrap();
        let d = TrackerConfig::default();
        assert_eq!(f.tracker.weights.beta, 0.1);
        assert_eq!(f.tracker.weights.alpha, d.weights.alpha);
        assert_eq!(f.tracker.weights.radius, d.weights.radius);
        assert_eq!(f.tracker.fusion.pillar.width_y, 1.0);
        assert_eq!(f.tracker.fusion.pillar.height_z, d.fusion.pillar.height_z);
        assert!(toml::from_str::<TrackerFile>("[tracker.weights]\ngamma = 1.0\n").is_err());
    }

    fn finite() -> impl Strategy<Value = f64> {
        -1e6..1e6f64
    }

    prop_compose! {
        fn detection_record()(u in finite(), v in finite(), depth in 0.1..200.0f64, vx in finite(), vy in finite(),
                              class in 0u32..10, confidence in 0.0..=1.0f64, d in proptest::option::of((finite(), finite())),
                              bbox in proptest::option::of(proptest::array::uniform4(finite()))) -> DetectionRecord {
            DetectionRecord { u, v, depth, vx, vy, class, confidence, du: d.map(|x| x.0), dv: d.map(|x| x.1), bbox, extra: Map::new() }
        }
    }

    proptest! {
        #[test]
        fn replay_records_round_trip(frame_index in 0u64..1_000_000, timestamp in 0.0..1e5f64,
                                     detections in proptest::collection::vec(detection_record(), 0..5),
                                     radar in proptest::collection::vec((finite(), finite(), finite(), finite(), finite()), 0..5)) {
            let r = ReplayRecord {
                frame_index,
                timestamp,
                detections,
                radar: radar.into_iter().map(|(x, y, z, vx, vy)| RadarRecord { x, y, z, vx, vy, extra: Map::new() }).collect(),
                extra: Map::new(),
            };
            let text = to_jsonl(std::slice::from_ref(&r));
            let back: Vec<ReplayRecord> = parse_jsonl(text.as_bytes(), Path::new("-")).unwrap();
            prop_assert_eq!(back, vec![r]);
        }

        #[test]
        fn result_records_round_trip(frame_index in 0u64..1000, timestamp in 0.0..1e5f64,
                                     tracks in proptest::collection::vec((1u64..1000, finite(), finite(), 0.1..100.0f64, 0.0..=1.0f64, any::<bool>()), 0..5)) {
            let r = ResultRecord {
                frame_index,
                timestamp,
                tracks: tracks.into_iter().map(|(id, u, v, depth, confidence, fused)| TrackRecord {
                    id, u, v, depth, vx: u / 7.0, vy: v / 3.0, class: 1, confidence, fused, x: depth, y: -u / 1e3, extra: Map::new(),
                }).collect(),
                extra: Map::new(),
            };
            let back: ResultRecord = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
            prop_assert_eq!(back, r);
        }
    }
}
