use nalgebra::{Matrix2x3, SMatrix, Vector2, Vector3};

use super::{
    CameraParams, OrthographicCamera, PerspectiveCamera, PseudoPerspectiveCamera, EPS_DENOM,
    EPS_DEPTH,
};
use crate::{Error, JacobianBlock, Result};

/// Width of the shared camera parameter layout.
pub const CAMERA_SLOTS: usize = 7;

pub fn project_perspective(cam: &PerspectiveCamera, points: &[Vector3<f64>]) -> Result<Vec<Vector2<f64>>> {
    let r = cam.rotation.matrix();
    points
        .iter()
        .enumerate()
        .map(|(index, q)| {
            let v = r * q + cam.translation;
            if v.z <= EPS_DEPTH {
                return Err(Error::DegenerateDepth { index, v_z: v.z });
            }
            Ok(Vector2::new(cam.focal * v.x / v.z, cam.focal * v.y / v.z))
        })
        .collect()
}

pub fn project_orthographic(cam: &OrthographicCamera, points: &[Vector3<f64>]) -> Vec<Vector2<f64>> {
    let r = cam.rotation.matrix();
    points
        .iter()
        .map(|q| {
            let v = r * q;
            let (x, y) = (v.x + cam.translation_xy.x, v.y + cam.translation_xy.y);
            Vector2::new(cam.scale * x, cam.scale * y)
        })
        .collect()
}

pub fn project_pseudo(cam: &PseudoPerspectiveCamera, points: &[Vector3<f64>]) -> Result<Vec<Vector2<f64>>> {
    let r = cam.rotation.matrix();
    points
        .iter()
        .enumerate()
        .map(|(index, q)| {
            let v = r * q;
            let (x, y) = (v.x + cam.translation_xy.x, v.y + cam.translation_xy.y);
            let denom = 1.0 + cam.rho * v.z;
            if !(denom > EPS_DENOM) {
                return Err(Error::ShrinkageSingularity { index, v_z: v.z, rho: cam.rho });
            }
            Ok(Vector2::new(cam.scale * x / denom, cam.scale * y / denom))
        })
        .collect()
}

/// Projects with whichever model `cam` holds.
pub fn project(cam: &CameraParams, points: &[Vector3<f64>]) -> Result<Vec<Vector2<f64>>> {
    match cam {
        CameraParams::Perspective(c) => project_perspective(c, points),
        CameraParams::Orthographic(c) => Ok(project_orthographic(c, points)),
        CameraParams::Pseudo(c) => project_pseudo(c, points),
    }
}

/// Projection of a single point together with its derivatives.
#[derive(Debug, Clone, Copy)]
pub struct PointJacobian {
    pub uv: Vector2<f64>,
    /// `d(u, v) / d(camera slots)`; the last slot is zero for orthographic cameras.
    pub d_camera: SMatrix<f64, 2, CAMERA_SLOTS>,
    /// `d(u, v) / d(q)` for the untransformed input point.
    pub d_point: Matrix2x3<f64>,
}

/// Analytic derivatives of one projected point. `index` is only used for errors.
pub fn point_jacobian(cam: &CameraParams, q: &Vector3<f64>, index: usize) -> Result<PointJacobian> {
    let rotation = cam.rotation();
    let r = rotation.matrix();
    let v = r * q + cam.translation();
    let d_rot = rotation.point_derivative(q);
    let mut d_camera = SMatrix::<f64, 2, CAMERA_SLOTS>::zeros();

    // d(u,v)/d(v) for the camera-space point, plus the model-specific slots.
    let (uv, d_v) = match cam {
        CameraParams::Perspective(c) => {
            if v.z <= EPS_DEPTH {
                return Err(Error::DegenerateDepth { index, v_z: v.z });
            }
            let f = c.focal;
            let iz = 1.0 / v.z;
            let d_v = Matrix2x3::new(f * iz, 0.0, -f * v.x * iz * iz, 0.0, f * iz, -f * v.y * iz * iz);
            d_camera[(0, 5)] = v.x * iz;
            d_camera[(1, 5)] = v.y * iz;
            d_camera[(0, 6)] = d_v[(0, 2)];
            d_camera[(1, 6)] = d_v[(1, 2)];
            (Vector2::new(f * v.x * iz, f * v.y * iz), d_v)
        }
        CameraParams::Orthographic(c) => {
            let s = c.scale;
            let d_v = Matrix2x3::new(s, 0.0, 0.0, 0.0, s, 0.0);
            d_camera[(0, 5)] = v.x;
            d_camera[(1, 5)] = v.y;
            (Vector2::new(s * v.x, s * v.y), d_v)
        }
        CameraParams::Pseudo(c) => {
            let denom = 1.0 + c.rho * v.z;
            if !(denom > EPS_DENOM) {
                return Err(Error::ShrinkageSingularity { index, v_z: v.z, rho: c.rho });
            }
            let (s, id) = (c.scale, 1.0 / denom);
            let d_v = Matrix2x3::new(
                s * id,
                0.0,
                -s * v.x * c.rho * id * id,
                0.0,
                s * id,
                -s * v.y * c.rho * id * id,
            );
            d_camera[(0, 5)] = v.x * id;
            d_camera[(1, 5)] = v.y * id;
            d_camera[(0, 6)] = -s * v.x * v.z * id * id;
            d_camera[(1, 6)] = -s * v.y * v.z * id * id;
            (Vector2::new(s * v.x * id, s * v.y * id), d_v)
        }
    };
    d_camera.fixed_view_mut::<2, 3>(0, 0).copy_from(&(d_v * d_rot));
    d_camera.fixed_view_mut::<2, 2>(0, 3).copy_from(&d_v.fixed_view::<2, 2>(0, 0));
    Ok(PointJacobian { uv, d_camera, d_point: d_v * r })
}

/// Dense derivatives of all projected points.
#[derive(Debug, Clone)]
pub struct ProjectionJacobian {
    /// `2N x n_params`, columns in [`CameraParams::param_names`] order.
    pub camera: JacobianBlock,
    /// `2N x 3N`, block diagonal in the input points.
    pub points: JacobianBlock,
}

pub fn projection_jacobian(cam: &CameraParams, points: &[Vector3<f64>]) -> Result<ProjectionJacobian> {
    let n = points.len();
    let np = cam.n_params();
    let mut camera = JacobianBlock::zeros(2 * n, np);
    let mut pts = JacobianBlock::zeros(2 * n, 3 * n);
    for (i, q) in points.iter().enumerate() {
        let pj = point_jacobian(cam, q, i)?;
        camera.0.view_mut((2 * i, 0), (2, np)).copy_from(&pj.d_camera.columns(0, np));
        pts.0.view_mut((2 * i, 3 * i), (2, 3)).copy_from(&pj.d_point);
    }
    Ok(ProjectionJacobian { camera, points: pts })
}
