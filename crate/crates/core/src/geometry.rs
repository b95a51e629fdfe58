//! Vehicle-frame, camera-frame and image-plane conversions.
//!
//! Vehicle axes: x forward, y left, z up. Camera axes follow the usual
//! pinhole convention: x right, y down, z along the optical axis. The
//! [`Extrinsic`] of a [`CameraModel`] maps vehicle coordinates into camera
//! coordinates (`p_cam = R * p_vehicle + t`), so a camera looking straight
//! ahead from the vehicle origin uses [`Extrinsic::forward_facing`].
//!
//! "Depth" everywhere in this crate means the camera-frame z coordinate
//! (distance along the optical axis), not Euclidean range.

use nalgebra::{Matrix3, Unit, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("focal lengths must be positive and finite (fx={fx}, fy={fy})")]
    InvalidFocalLength { fx: f64, fy: f64 },
    #[error("principal point ({cx}, {cy}) must lie strictly inside a {width}x{height} image")]
    InvalidPrincipalPoint {
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    },
    #[error("extrinsic rotation is not orthonormal (max |RᵀR - I| = {0:e})")]
    NonOrthonormalRotation(f64),
    #[error("extrinsic rotation has determinant {0}, expected +1")]
    Reflection(f64),
    #[error("extrinsic contains non-finite values")]
    NonFiniteExtrinsic,
}

/// A point in the vehicle frame, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehiclePoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl VehiclePoint {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn distance_squared(&self, other: &Pixel) -> f64 {
        let du = self.u - other.u;
        let dv = self.v - other.v;
        du * du + dv * dv
    }

    pub fn distance(&self, other: &Pixel) -> f64 {
        self.distance_squared(other).sqrt()
    }
}

/// A projected point: pixel coordinates plus camera-axis depth (> 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImagePoint {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl ImagePoint {
    pub fn pixel(&self) -> Pixel {
        Pixel::new(self.u, self.v)
    }
}

/// Rigid transform from the vehicle frame into the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrinsic {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Extrinsic {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        if rotation
            .iter()
            .chain(translation.iter())
            .any(|v| !v.is_finite())
        {
            return Err(GeometryError::NonFiniteExtrinsic);
        }
        let err = (rotation.transpose() * rotation - Matrix3::identity())
            .abs()
            .max();
        if err > ORTHONORMAL_TOL {
            return Err(GeometryError::NonOrthonormalRotation(err));
        }
        let det = rotation.determinant();
        if det < 0.0 {
            return Err(GeometryError::Reflection(det));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Axis remap from vehicle (x fwd, y left, z up) to camera (x right,
    /// y down, z fwd).
    pub fn vehicle_to_camera_axes() -> Matrix3<f64> {
        Matrix3::new(
            0.0, -1.0, 0.0, //
            0.0, 0.0, -1.0, //
            1.0, 0.0, 0.0,
        )
    }

    /// Camera at `position` (vehicle frame) looking along vehicle +x.
    pub fn forward_facing(position: VehiclePoint) -> Self {
        let rotation = Self::vehicle_to_camera_axes();
        let translation = -(rotation * position.to_vector());
        Self {
            rotation,
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// `self` applied after `first`: `p -> self(first(p))`.
    pub fn compose(&self, first: &Extrinsic) -> Extrinsic {
        Extrinsic {
            rotation: self.rotation * first.rotation,
            translation: self.rotation * first.translation + self.translation,
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Camera center expressed in the vehicle frame.
    pub fn camera_center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity())
            .abs()
            .max()
    }
}

/// Ray leaving the camera center, in vehicle coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub direction: Unit<Vector3<f64>>,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vector3<f64> {
        self.origin + self.direction.into_inner() * t
    }
}

/// Ideal pinhole camera without distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraSpec", into = "CameraSpec")]
pub struct CameraModel {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    image_width: u32,
    image_height: u32,
    extrinsic: Extrinsic,
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        image_width: u32,
        image_height: u32,
        extrinsic: Extrinsic,
    ) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(GeometryError::InvalidFocalLength { fx, fy });
        }
        let w = f64::from(image_width);
        let h = f64::from(image_height);
        if !(cx > 0.0 && cx < w && cy > 0.0 && cy < h) {
            return Err(GeometryError::InvalidPrincipalPoint {
                cx,
                cy,
                width: image_width,
                height: image_height,
            });
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            image_width,
            image_height,
            extrinsic,
        })
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn image_width(&self) -> u32 {
        self.image_width
    }
    pub fn image_height(&self) -> u32 {
        self.image_height
    }
    pub fn extrinsic(&self) -> &Extrinsic {
        &self.extrinsic
    }

    /// Pinhole projection ignoring image bounds. `None` when the point is
    /// not strictly in front of the camera.
    pub fn project_unbounded(&self, p: &Vector3<f64>) -> Option<ImagePoint> {
        let pc = self.extrinsic.apply(p);
        if !(pc.z > 0.0) {
            return None;
        }
        Some(ImagePoint {
            u: self.fx * pc.x / pc.z + self.cx,
            v: self.fy * pc.y / pc.z + self.cy,
            depth: pc.z,
        })
    }

    /// Camera-axis depth of a vehicle-frame point (may be negative).
    pub fn depth_of(&self, p: &VehiclePoint) -> f64 {
        self.extrinsic.apply(&p.to_vector()).z
    }

    /// Closed bounds: pixels on the border count as inside.
    pub fn contains_pixel(&self, px: &Pixel) -> bool {
        px.u >= 0.0
            && px.u <= f64::from(self.image_width)
            && px.v >= 0.0
            && px.v <= f64::from(self.image_height)
    }

    pub fn project_to_image(&self, p: &VehiclePoint) -> Option<ImagePoint> {
        self.project_unbounded(&p.to_vector())
            .filter(|ip| self.contains_pixel(&ip.pixel()))
    }

    pub fn backproject_ray(&self, px: &Pixel) -> Ray {
        let dir_cam = Vector3::new((px.u - self.cx) / self.fx, (px.v - self.cy) / self.fy, 1.0);
        let dir = self.extrinsic.rotation().transpose() * dir_cam;
        Ray {
            origin: self.extrinsic.camera_center(),
            direction: Unit::new_normalize(dir),
        }
    }

    /// Vehicle-frame point seen at pixel `px` with camera-axis depth `depth`.
    pub fn lift(&self, px: &Pixel, depth: f64) -> VehiclePoint {
        let dir_cam = Vector3::new(
            (px.u - self.cx) / self.fx * depth,
            (px.v - self.cy) / self.fy * depth,
            depth,
        );
        let p = self.extrinsic.rotation().transpose() * (dir_cam - self.extrinsic.translation());
        VehiclePoint::from_vector(&p)
    }
}

impl Default for CameraModel {
    /// 800x448 forward camera at the vehicle origin, fx = fy = 1000 px.
    fn default() -> Self {
        Self {
            fx: 1000.0,
            fy: 1000.0,
            cx: 400.0,
            cy: 224.0,
            image_width: 800,
            image_height: 448,
            extrinsic: Extrinsic::forward_facing(VehiclePoint::new(0.0, 0.0, 0.0)),
        }
    }
}

/// On-disk form of [`CameraModel`]; `rotation` is row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl TryFrom<CameraSpec> for CameraModel {
    type Error = GeometryError;

    fn try_from(s: CameraSpec) -> Result<Self, Self::Error> {
        let r = s.rotation;
        let rotation = Matrix3::new(
            r[0][0], r[0][1], r[0][2], //
            r[1][0], r[1][1], r[1][2], //
            r[2][0], r[2][1], r[2][2],
        );
        let extrinsic = Extrinsic::new(rotation, Vector3::from(s.translation))?;
        CameraModel::new(s.fx, s.fy, s.cx, s.cy, s.width, s.height, extrinsic)
    }
}

impl From<CameraModel> for CameraSpec {
    fn from(c: CameraModel) -> Self {
        let r = c.extrinsic.rotation;
        let t = c.extrinsic.translation;
        CameraSpec {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.image_width,
            height: c.image_height,
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [t.x, t.y, t.z],
        }
    }
}
