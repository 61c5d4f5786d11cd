//! Projection models and the shrinkage/focal relations between them.
//!
//! Three cameras share a rigid transform `v = R q + t`:
//!
//! ```text
//! perspective         (u, v) = f · (v_x, v_y) / v_z
//! orthographic        (u, v) = S · (v_x, v_y)
//! pseudo-perspective  (u, v) = S · (v_x, v_y) / (1 + rho · v_z)      t_z = 0
//! ```
//!
//! With `rho = 0` the pseudo-perspective camera is exactly orthographic. For
//! points on a single depth plane `v_z`, choosing `rho = S/f - 1/v_z` makes it
//! agree with the perspective camera.

mod project;
mod rotation;

use nalgebra::{Vector2, Vector3};

pub use project::{
    point_jacobian, project, project_orthographic, project_perspective, project_pseudo,
    projection_jacobian, PointJacobian, ProjectionJacobian, CAMERA_SLOTS,
};
pub use rotation::Rotation;

use crate::{Error, Result};

/// Smallest admissible perspective depth (cm).
pub const EPS_DEPTH: f64 = 1e-6;
/// Smallest admissible pseudo-perspective denominator `1 + rho·v_z`.
pub const EPS_DENOM: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerspectiveCamera {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
    pub focal: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrthographicCamera {
    pub rotation: Rotation,
    pub translation_xy: Vector2<f64>,
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoPerspectiveCamera {
    pub rotation: Rotation,
    pub translation_xy: Vector2<f64>,
    pub scale: f64,
    pub rho: f64,
}

impl PerspectiveCamera {
    pub fn new(rotation: Rotation, translation: Vector3<f64>, focal: f64) -> Result<Self> {
        if !(focal > 0.0) {
            return Err(Error::invalid(format!("focal length must be positive, got {focal}")));
        }
        Ok(PerspectiveCamera { rotation, translation, focal })
    }
}

impl OrthographicCamera {
    pub fn new(rotation: Rotation, translation_xy: Vector2<f64>, scale: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::invalid(format!("scale must be positive, got {scale}")));
        }
        Ok(OrthographicCamera { rotation, translation_xy, scale })
    }
}

impl PseudoPerspectiveCamera {
    pub fn new(rotation: Rotation, translation_xy: Vector2<f64>, scale: f64, rho: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::invalid(format!("scale must be positive, got {scale}")));
        }
        if !(rho >= 0.0) {
            return Err(Error::invalid(format!("rho must be non-negative, got {rho}")));
        }
        Ok(PseudoPerspectiveCamera { rotation, translation_xy, scale, rho })
    }

    /// The orthographic camera this one degenerates to at `rho = 0`.
    pub fn orthographic(&self) -> OrthographicCamera {
        OrthographicCamera {
            rotation: self.rotation,
            translation_xy: self.translation_xy,
            scale: self.scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CameraKind {
    Perspective,
    Orthographic,
    Pseudo,
}

impl CameraKind {
    pub fn name(self) -> &'static str {
        match self {
            CameraKind::Perspective => "perspective",
            CameraKind::Orthographic => "orthographic",
            CameraKind::Pseudo => "pseudo",
        }
    }
}

impl std::fmt::Display for CameraKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Any of the three camera models.
///
/// Parameters are exposed as a flat vector in a shared slot layout
/// `[omega_x, omega_y, omega_z, t_x, t_y, scale, depth]` where `scale` is `f`
/// or `S` and `depth` is `t_z` (perspective) or `rho` (pseudo). Orthographic
/// cameras have no `depth` slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CameraParams {
    Perspective(PerspectiveCamera),
    Orthographic(OrthographicCamera),
    Pseudo(PseudoPerspectiveCamera),
}

impl CameraParams {
    pub fn kind(&self) -> CameraKind {
        match self {
            CameraParams::Perspective(_) => CameraKind::Perspective,
            CameraParams::Orthographic(_) => CameraKind::Orthographic,
            CameraParams::Pseudo(_) => CameraKind::Pseudo,
        }
    }

    pub fn rotation(&self) -> Rotation {
        match self {
            CameraParams::Perspective(c) => c.rotation,
            CameraParams::Orthographic(c) => c.rotation,
            CameraParams::Pseudo(c) => c.rotation,
        }
    }

    /// Translation with `t_z = 0` for the two scaled-orthographic models.
    pub fn translation(&self) -> Vector3<f64> {
        match self {
            CameraParams::Perspective(c) => c.translation,
            CameraParams::Orthographic(c) => Vector3::new(c.translation_xy.x, c.translation_xy.y, 0.0),
            CameraParams::Pseudo(c) => Vector3::new(c.translation_xy.x, c.translation_xy.y, 0.0),
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            CameraParams::Orthographic(_) => 6,
            _ => 7,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        let w = self.rotation().axis_angle;
        let t = self.translation();
        let mut p = vec![w.x, w.y, w.z, t.x, t.y];
        match self {
            CameraParams::Perspective(c) => p.extend([c.focal, c.translation.z]),
            CameraParams::Orthographic(c) => p.push(c.scale),
            CameraParams::Pseudo(c) => p.extend([c.scale, c.rho]),
        }
        p
    }

    /// Same model with parameters replaced. Values are taken as-is, without
    /// domain checks, so the fitter can probe arbitrary points.
    pub fn with_params(&self, p: &[f64]) -> CameraParams {
        let rotation = Rotation { axis_angle: Vector3::new(p[0], p[1], p[2]) };
        match self {
            CameraParams::Perspective(_) => CameraParams::Perspective(PerspectiveCamera {
                rotation,
                translation: Vector3::new(p[3], p[4], p[6]),
                focal: p[5],
            }),
            CameraParams::Orthographic(_) => CameraParams::Orthographic(OrthographicCamera {
                rotation,
                translation_xy: Vector2::new(p[3], p[4]),
                scale: p[5],
            }),
            CameraParams::Pseudo(_) => CameraParams::Pseudo(PseudoPerspectiveCamera {
                rotation,
                translation_xy: Vector2::new(p[3], p[4]),
                scale: p[5],
                rho: p[6],
            }),
        }
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            CameraParams::Perspective(_) => &["omega_x", "omega_y", "omega_z", "t_x", "t_y", "f", "t_z"],
            CameraParams::Orthographic(_) => &["omega_x", "omega_y", "omega_z", "t_x", "t_y", "S"],
            CameraParams::Pseudo(_) => &["omega_x", "omega_y", "omega_z", "t_x", "t_y", "S", "rho"],
        }
    }

    /// Same camera with its rotation wrapped into the canonical range.
    pub fn canonicalized(&self) -> CameraParams {
        let rotation = Rotation::from_axis_angle(self.rotation().axis_angle);
        let mut out = *self;
        match &mut out {
            CameraParams::Perspective(c) => c.rotation = rotation,
            CameraParams::Orthographic(c) => c.rotation = rotation,
            CameraParams::Pseudo(c) => c.rotation = rotation,
        }
        out
    }
}

/// Rigid transform `R q + t` for every point.
pub fn transform(rotation: &Rotation, translation: &Vector3<f64>, points: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    let r = rotation.matrix();
    points.iter().map(|q| r * q + translation).collect()
}

/// Shrinkage that matches a perspective camera on the plane at depth `v_z`.
///
/// Negative when `v_z < f / S`; callers decide whether to clamp.
pub fn rho_from_perspective(scale: f64, focal: f64, v_z: f64) -> f64 {
    scale / focal - 1.0 / v_z
}

/// Physical capture setup used to derive an effective focal length.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CaptureGeometry {
    /// Sensor width (cm).
    pub sensor_width: f64,
    /// Face width (cm).
    pub face_width: f64,
    /// Camera-to-face distance (cm).
    pub standoff: f64,
    /// Fraction of the image width covered by the face.
    pub frame_fill: f64,
}

impl CaptureGeometry {
    /// Typical head-mounted rig: 1/2.3" sensor, face filling half the frame.
    pub fn head_mounted(standoff: f64) -> Self {
        CaptureGeometry { sensor_width: 0.455, face_width: 15.0, standoff, frame_fill: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sensor_width", self.sensor_width),
            ("face_width", self.face_width),
            ("standoff", self.standoff),
            ("frame_fill", self.frame_fill),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.frame_fill > 1.0 {
            return Err(Error::invalid(format!("frame_fill must be in (0, 1], got {}", self.frame_fill)));
        }
        Ok(())
    }
}

/// Focal length that makes the face cover `frame_fill` of the sensor width.
pub fn focal_from_geometry(g: &CaptureGeometry) -> f64 {
    g.sensor_width * g.standoff * g.frame_fill / g.face_width
}

/// Shrinkage prior for an unscaled (`S = 1`) capture of the given geometry.
pub fn rho_prior_analytic(g: &CaptureGeometry) -> f64 {
    rho_from_perspective(1.0, focal_from_geometry(g), g.standoff)
}
