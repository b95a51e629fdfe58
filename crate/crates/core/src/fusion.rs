//! Radar pillar expansion and frustum association.
//!
//! Each radar return is grown into an axis-aligned pillar. A detection's
//! frustum is its image box back-projected into space, clipped to a depth
//! window around the detection's estimated depth. A pillar is inside the
//! frustum when its base depth falls in the window and at least one of its
//! eight corners or its base point projects into the box; this is an
//! approximation of exact polytope intersection. Among inside pillars the
//! one with the smallest base depth wins.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraModel, Pixel, Ray, VehiclePoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("pillar dimensions must be positive and finite, got {0:?}")]
    InvalidPillarDims(PillarDims),
    #[error("depth tolerance must lie in (0, 1), got {0}")]
    InvalidDepthTolerance(f64),
    #[error("degenerate bounding box {0:?}")]
    DegenerateBox(BBox2d),
    #[error("estimated depth must be positive, got {0}")]
    InvalidDepth(f64),
}

/// A radar return: vehicle-frame position and radial velocity components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarPoint {
    pub position: VehiclePoint,
    pub vx: f64,
    pub vy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PillarDims {
    pub width_y: f64,
    pub height_z: f64,
    pub depth_x: f64,
}

impl Default for PillarDims {
    fn default() -> Self {
        Self {
            width_y: 0.5,
            height_z: 1.5,
            depth_x: 0.5,
        }
    }
}

impl PillarDims {
    pub fn validate(&self) -> Result<(), FusionError> {
        let ok = [self.width_y, self.height_z, self.depth_x]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(FusionError::InvalidPillarDims(*self))
        }
    }
}

/// A radar point grown into a box: centered on the point in x and y,
/// extending upward from the point in z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pillar {
    pub base: RadarPoint,
    pub dims: PillarDims,
}

impl Pillar {
    pub fn corners(&self) -> [VehiclePoint; 8] {
        let p = self.base.position;
        let hx = self.dims.depth_x / 2.0;
        let hy = self.dims.width_y / 2.0;
        let mut out = [p; 8];
        for (i, c) in out.iter_mut().enumerate() {
            c.x = p.x + if i & 1 == 0 { -hx } else { hx };
            c.y = p.y + if i & 2 == 0 { -hy } else { hy };
            c.z = p.z + if i & 4 == 0 { 0.0 } else { self.dims.height_z };
        }
        out
    }
}

pub fn expand_pillars(points: &[RadarPoint], dims: PillarDims) -> Result<Vec<Pillar>, FusionError> {
    dims.validate()?;
    Ok(points.iter().map(|&base| Pillar { base, dims }).collect())
}

/// Axis-aligned image box in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox2d {
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
}

impl BBox2d {
    pub fn new(u_min: f64, v_min: f64, u_max: f64, v_max: f64) -> Self {
        Self {
            u_min,
            v_min,
            u_max,
            v_max,
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.u_min, self.v_min, self.u_max, self.v_max]
            .iter()
            .all(|v| v.is_finite())
            && self.u_min < self.u_max
            && self.v_min < self.v_max
    }

    pub fn contains(&self, px: &Pixel) -> bool {
        px.u >= self.u_min && px.u <= self.u_max && px.v >= self.v_min && px.v <= self.v_max
    }

    pub fn area(&self) -> f64 {
        (self.u_max - self.u_min).max(0.0) * (self.v_max - self.v_min).max(0.0)
    }

    pub fn iou(&self, other: &BBox2d) -> f64 {
        let inter = BBox2d::new(
            self.u_min.max(other.u_min),
            self.v_min.max(other.v_min),
            self.u_max.min(other.u_max),
            self.v_max.min(other.v_max),
        )
        .area();
        let union = self.area() + other.area() - inter;
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }

    pub fn translated(&self, du: f64, dv: f64) -> BBox2d {
        BBox2d::new(
            self.u_min + du,
            self.v_min + dv,
            self.u_max + du,
            self.v_max + dv,
        )
    }

    fn intersects(&self, other: &BBox2d) -> bool {
        self.u_min <= other.u_max
            && other.u_min <= self.u_max
            && self.v_min <= other.v_max
            && other.v_min <= self.v_max
    }
}

/// The image-plane box and depth estimate a frustum is built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreliminaryDetection {
    pub bbox: BBox2d,
    pub est_depth: f64,
    pub class: u32,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frustum {
    /// Rays through the box corners, ordered (u_min, v_min), (u_max, v_min),
    /// (u_max, v_max), (u_min, v_max).
    pub rays: [Ray; 4],
    pub bbox: BBox2d,
    pub depth_min: f64,
    pub depth_max: f64,
}

impl Frustum {
    pub fn contains_depth(&self, depth: f64) -> bool {
        depth >= self.depth_min && depth <= self.depth_max
    }

    pub fn contains_point(&self, p: &VehiclePoint, cam: &CameraModel) -> bool {
        cam.project_unbounded(&p.to_vector())
            .is_some_and(|ip| self.contains_depth(ip.depth) && self.bbox.contains(&ip.pixel()))
    }

    /// Containment rule for pillars: base depth in the window and any of the
    /// nine probe points (base + corners) projecting into the box.
    pub fn contains_pillar(&self, pillar: &Pillar, cam: &CameraModel) -> bool {
        let depth = cam.depth_of(&pillar.base.position);
        if !(depth > 0.0) || !self.contains_depth(depth) {
            return false;
        }
        std::iter::once(pillar.base.position)
            .chain(pillar.corners())
            .filter_map(|p| cam.project_unbounded(&p.to_vector()))
            .any(|ip| self.bbox.contains(&ip.pixel()))
    }
}

pub fn build_frustum(
    det: &PreliminaryDetection,
    cam: &CameraModel,
    depth_tolerance: f64,
) -> Result<Frustum, FusionError> {
    if !(depth_tolerance > 0.0 && depth_tolerance < 1.0) {
        return Err(FusionError::InvalidDepthTolerance(depth_tolerance));
    }
    if !det.bbox.is_valid() {
        return Err(FusionError::DegenerateBox(det.bbox));
    }
    if !(det.est_depth > 0.0 && det.est_depth.is_finite()) {
        return Err(FusionError::InvalidDepth(det.est_depth));
    }
    let b = det.bbox;
    let rays = [
        cam.backproject_ray(&Pixel::new(b.u_min, b.v_min)),
        cam.backproject_ray(&Pixel::new(b.u_max, b.v_min)),
        cam.backproject_ray(&Pixel::new(b.u_max, b.v_max)),
        cam.backproject_ray(&Pixel::new(b.u_min, b.v_max)),
    ];
    Ok(Frustum {
        rays,
        bbox: b,
        depth_min: det.est_depth * (1.0 - depth_tolerance),
        depth_max: det.est_depth * (1.0 + depth_tolerance),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssociationMode {
    /// Detections are handled independently; a pillar may serve several.
    #[default]
    Shared,
    /// Detections claim pillars in descending confidence order.
    Exclusive,
}

/// Radar values taken over by a detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarMatch {
    pub pillar_index: usize,
    pub depth: f64,
    pub vx: f64,
    pub vy: f64,
}

/// Pillars projected once and ordered by (base depth, values, index).
struct PillarIndex {
    order: Vec<usize>,
    depths: Vec<f64>,
    probes: Vec<Vec<Pixel>>,
    extents: Vec<Option<BBox2d>>,
}

fn pillar_sort_key(p: &Pillar) -> [f64; 5] {
    let b = &p.base;
    [b.position.x, b.position.y, b.position.z, b.vx, b.vy]
}

impl PillarIndex {
    fn new(pillars: &[Pillar], cam: &CameraModel) -> Self {
        let depths: Vec<f64> = pillars
            .iter()
            .map(|p| cam.depth_of(&p.base.position))
            .collect();
        let probes: Vec<Vec<Pixel>> = pillars
            .iter()
            .map(|p| {
                std::iter::once(p.base.position)
                    .chain(p.corners())
                    .filter_map(|q| cam.project_unbounded(&q.to_vector()))
                    .map(|ip| ip.pixel())
                    .collect()
            })
            .collect();
        let extents = probes
            .iter()
            .map(|pts: &Vec<Pixel>| {
                pts.iter().fold(None, |acc: Option<BBox2d>, px| {
                    Some(match acc {
                        None => BBox2d::new(px.u, px.v, px.u, px.v),
                        Some(b) => BBox2d::new(
                            b.u_min.min(px.u),
                            b.v_min.min(px.v),
                            b.u_max.max(px.u),
                            b.v_max.max(px.v),
                        ),
                    })
                })
            })
            .collect();
        let mut order: Vec<usize> = (0..pillars.len()).filter(|&i| depths[i] > 0.0).collect();
        order.sort_by(|&a, &b| {
            depths[a].total_cmp(&depths[b]).then_with(|| {
                let (ka, kb) = (pillar_sort_key(&pillars[a]), pillar_sort_key(&pillars[b]));
                ka.iter()
                    .zip(&kb)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            })
        });
        Self {
            order,
            depths,
            probes,
            extents,
        }
    }

    fn candidates<'a>(&'a self, frustum: &'a Frustum) -> impl Iterator<Item = usize> + 'a {
        let start = self
            .order
            .partition_point(|&i| self.depths[i] < frustum.depth_min);
        self.order[start..]
            .iter()
            .copied()
            .take_while(move |&i| self.depths[i] <= frustum.depth_max)
            .filter(move |&i| {
                self.extents[i].is_some_and(|e| e.intersects(&frustum.bbox))
                    && self.probes[i].iter().any(|px| frustum.bbox.contains(px))
            })
    }
}

/// For every detection, the closest pillar inside its frustum (if any).
pub fn frustum_associate(
    dets: &[PreliminaryDetection],
    pillars: &[Pillar],
    cam: &CameraModel,
    depth_tolerance: f64,
    mode: AssociationMode,
) -> Result<Vec<Option<RadarMatch>>, FusionError> {
    let frusta = dets
        .iter()
        .map(|d| build_frustum(d, cam, depth_tolerance))
        .collect::<Result<Vec<_>, _>>()?;
    let index = PillarIndex::new(pillars, cam);
    let to_match = |i: usize| RadarMatch {
        pillar_index: i,
        depth: index.depths[i],
        vx: pillars[i].base.vx,
        vy: pillars[i].base.vy,
    };

    match mode {
        AssociationMode::Shared => Ok(frusta
            .par_iter()
            .map(|f| index.candidates(f).next().map(to_match))
            .collect()),
        AssociationMode::Exclusive => {
            let mut order: Vec<usize> = (0..dets.len()).collect();
            order.sort_by(|&a, &b| {
                dets[b]
                    .confidence
                    .total_cmp(&dets[a].confidence)
                    .then(a.cmp(&b))
            });
            let mut taken = vec![false; pillars.len()];
            let mut out = vec![None; dets.len()];
            for d in order {
                if let Some(i) = index.candidates(&frusta[d]).find(|&i| !taken[i]) {
                    taken[i] = true;
                    out[d] = Some(to_match(i));
                }
            }
            Ok(out)
        }
    }
}
