//! Landmark cost over a `(f, t_z)` grid and the shrinkage extent ratio.

use std::fmt::Write as _;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::camera::{project_pseudo, transform, CameraKind, CameraParams, PseudoPerspectiveCamera, Rotation};
use crate::fitting::{cost_breakdown, FitProblem, FitState};
use crate::morphable::{ModelCoefficients, MorphableModel};
use crate::{Error, Result};

/// Square geometric grid: both axes are the centre value times
/// `exp(log_half_span · s)` for `n` evenly spaced `s` in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanGrid {
    pub n: usize,
    pub log_half_span: f64,
}

impl Default for ScanGrid {
    fn default() -> Self {
        ScanGrid { n: 41, log_half_span: 0.5 }
    }
}

impl ScanGrid {
    pub fn factors(&self) -> Vec<f64> {
        let n = self.n;
        (0..n).map(|i| (self.log_half_span * (2.0 * i as f64 / (n - 1) as f64 - 1.0)).exp()).collect()
    }

    /// Ratio between neighbouring grid values.
    pub fn step(&self) -> f64 {
        (2.0 * self.log_half_span / (self.n - 1) as f64).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguityScan {
    pub f: Vec<f64>,
    pub t_z: Vec<f64>,
    /// Landmark cost, `cost[j][i]` at `(f[i], t_z[j])`; NaN where a landmark
    /// falls behind the camera.
    pub cost: Vec<Vec<f64>>,
    /// Cost range along the diagonal `(f[k], t_z[k])`.
    pub diagonal_variation: f64,
    /// Cost range along `f` at the centre `t_z`.
    pub f_axis_variation: f64,
    /// `diagonal_variation / f_axis_variation`.
    pub flatness_ratio: f64,
    /// `(i, j)` of the smallest finite cost.
    pub argmin: (usize, usize),
}

fn range(values: impl Iterator<Item = f64>) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi >= lo { hi - lo } else { f64::NAN }
}

/// Evaluates the landmark cost of a perspective problem on a grid around the
/// centre state's `(f, t_z)`, all other parameters held fixed.
pub fn ambiguity_scan(problem: &FitProblem, center: &FitState, grid: &ScanGrid) -> Result<AmbiguityScan> {
    if problem.camera_kind != CameraKind::Perspective {
        return Err(Error::invalid("ambiguity scans need a perspective problem"));
    }
    let CameraParams::Perspective(cam) = center.camera else {
        return Err(Error::invalid("ambiguity scans need a perspective centre camera"));
    };
    if grid.n < 3 || grid.n % 2 == 0 {
        return Err(Error::invalid(format!("scan grid size must be odd and >= 3, got {}", grid.n)));
    }
    if !(grid.log_half_span > 0.0 && grid.log_half_span.is_finite()) {
        return Err(Error::invalid("scan span must be positive"));
    }
    if !(cam.translation.z > 0.0) {
        return Err(Error::invalid("centre camera needs a positive t_z"));
    }
    let factors = grid.factors();
    let f: Vec<f64> = factors.iter().map(|k| cam.focal * k).collect();
    let t_z: Vec<f64> = factors.iter().map(|k| cam.translation.z * k).collect();
    let mut cost = vec![vec![f64::NAN; grid.n]; grid.n];
    for (j, &tz) in t_z.iter().enumerate() {
        for (i, &fi) in f.iter().enumerate() {
            let mut c = cam;
            c.focal = fi;
            c.translation.z = tz;
            let state = FitState { coefficients: center.coefficients.clone(), camera: CameraParams::Perspective(c) };
            cost[j][i] = match cost_breakdown(problem, &state) {
                Ok(b) => b.landmark,
                Err(e) if e.is_numeric_domain() => f64::NAN,
                Err(e) => return Err(e),
            };
        }
    }
    let mid = grid.n / 2;
    let diagonal_variation = range((0..grid.n).map(|k| cost[k][k]));
    let f_axis_variation = range((0..grid.n).map(|i| cost[mid][i]));
    let mut argmin = (mid, mid);
    let mut best = f64::INFINITY;
    for (j, row) in cost.iter().enumerate() {
        for (i, &c) in row.iter().enumerate() {
            if c < best {
                best = c;
                argmin = (i, j);
            }
        }
    }
    Ok(AmbiguityScan {
        f,
        t_z,
        cost,
        diagonal_variation,
        f_axis_variation,
        flatness_ratio: diagonal_variation / f_axis_variation,
        argmin,
    })
}

impl AmbiguityScan {
    /// CSV `f,t_z,cost`, one row per cell.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("f,t_z,cost\n");
        for (j, tz) in self.t_z.iter().enumerate() {
            for (i, f) in self.f.iter().enumerate() {
                let _ = writeln!(s, "{},{},{}", f, tz, self.cost[j][i]);
            }
        }
        s
    }

    /// Whitespace-separated blocks, one per `t_z`, for `splot`.
    pub fn to_gnuplot(&self) -> String {
        let mut s = String::from("# f t_z landmark_cost\n");
        for (j, tz) in self.t_z.iter().enumerate() {
            for (i, f) in self.f.iter().enumerate() {
                let _ = writeln!(s, "{} {} {}", f, tz, self.cost[j][i]);
            }
            s.push('\n');
        }
        s
    }

    /// For each `t_z` row, the `f` index with the smallest cost.
    pub fn valley(&self) -> Vec<Option<usize>> {
        self.cost
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, c)| c.is_finite())
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
            })
            .collect()
    }
}

/// Ratio of the RMS projected radius of the farthest `fraction` of the mean
/// shape's vertices to that of the nearest `fraction`, under a unit-scale
/// pseudo-perspective camera with the given rotation and no translation.
pub fn extent_ratio(model: &MorphableModel, rotation: &Rotation, rho: f64, fraction: f64) -> Result<f64> {
    if !(fraction > 0.0 && fraction <= 0.5) {
        return Err(Error::invalid(format!("fraction must lie in (0, 0.5], got {fraction}")));
    }
    let mean = model.evaluate(&ModelCoefficients::zeros(model))?;
    let cam = PseudoPerspectiveCamera::new(*rotation, Vector2::zeros(), 1.0, rho)?;
    let uv = project_pseudo(&cam, &mean)?;
    let depth = transform(rotation, &nalgebra::Vector3::zeros(), &mean);
    let mut order: Vec<usize> = (0..mean.len()).collect();
    order.sort_by(|&a, &b| depth[a].z.total_cmp(&depth[b].z));
    let k = ((fraction * mean.len() as f64).round() as usize).max(1);
    let rms = |idx: &[usize]| (idx.iter().map(|&i| uv[i].norm_squared()).sum::<f64>() / idx.len() as f64).sqrt();
    Ok(rms(&order[order.len() - k..]) / rms(&order[..k]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{default_capture_model, generate_capture, CaptureScenario, PoseJitter};

    fn closeup_truth() -> (FitProblem, FitState) {
        let mut s = CaptureScenario::closeup(1, 6);
        s.landmark_noise_px = 0.0;
        s.pose_jitter = PoseJitter { translation: 0.0, ..Default::default() };
        let c = generate_capture(&s, &default_capture_model()).unwrap();
        let f = &c.frames[0];
        (f.problem_for(CameraKind::Perspective), f.truth.state_model_units(&s).unwrap())
    }

    #[test]
    fn truth_is_the_grid_minimum() {
        let (p, truth) = closeup_truth();
        let scan = ambiguity_scan(&p, &truth, &ScanGrid { n: 21, log_half_span: 0.4 }).unwrap();
        assert_eq!(scan.argmin, (10, 10));
        assert!(scan.cost[10][10] < 1e-16);
    }

    #[test]
    fn closeup_valley_is_flat_along_the_diagonal() {
        let (p, truth) = closeup_truth();
        let scan = ambiguity_scan(&p, &truth, &ScanGrid::default()).unwrap();
        assert!(scan.flatness_ratio < 0.05, "{}", scan.flatness_ratio);
    }

    #[test]
    fn shifted_grid_shifts_the_valley() {
        // Centring the grid m steps up the diagonal re-evaluates the same
        // cells, so the valley moves by exactly m cells.
        let (p, truth) = closeup_truth();
        let g = ScanGrid { n: 21, log_half_span: 0.4 };
        let m = 3;
        let k = g.step().powi(m);
        let a = ambiguity_scan(&p, &truth, &g).unwrap();
        let mut shifted = truth.clone();
        if let CameraParams::Perspective(c) = &mut shifted.camera {
            c.focal *= k;
            c.translation.z *= k;
        }
        let b = ambiguity_scan(&p, &shifted, &g).unwrap();
        let (va, vb) = (a.valley(), b.valley());
        for j in 0..g.n - m as usize {
            let ia = va[j + m as usize].unwrap() as i64;
            let ib = vb[j].unwrap() as i64;
            assert_eq!(ia - ib, m as i64, "row {j}");
            let rel = (a.t_z[j + m as usize] - b.t_z[j]).abs() / a.t_z[j + m as usize];
            assert!(rel < 1e-12);
        }
    }

    #[test]
    fn cells_behind_the_camera_are_nan() {
        let (p, mut truth) = closeup_truth();
        if let CameraParams::Perspective(c) = &mut truth.camera {
            c.translation.z = 0.05;
        }
        let scan = ambiguity_scan(&p, &truth, &ScanGrid { n: 11, log_half_span: 1.5 }).unwrap();
        assert!(scan.cost[0].iter().all(|c| c.is_nan()));
        assert!(scan.cost[10].iter().all(|c| c.is_finite()));
        assert!(scan.to_csv().contains("NaN"));
    }

    #[test]
    fn scan_rejects_other_camera_kinds() {
        let (p, truth) = closeup_truth();
        let mut q = p.clone();
        q.camera_kind = CameraKind::Pseudo;
        assert!(ambiguity_scan(&q, &truth, &ScanGrid::default()).is_err());
        assert!(ambiguity_scan(&p, &truth, &ScanGrid { n: 4, log_half_span: 0.5 }).is_err());
    }

    #[test]
    fn gnuplot_has_one_block_per_row() {
        let (p, truth) = closeup_truth();
        let scan = ambiguity_scan(&p, &truth, &ScanGrid { n: 5, log_half_span: 0.2 }).unwrap();
        assert_eq!(scan.to_gnuplot().split("\n\n").filter(|b| !b.trim().is_empty()).count(), 5);
        assert_eq!(scan.to_csv().lines().count(), 26);
    }

    #[test]
    fn extent_ratio_decreases_with_rho() {
        let s = CaptureScenario::closeup(1, 0);
        let m = default_capture_model().scaled(1.0 / s.model_unit());
        let r: Vec<f64> = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0]
            .iter()
            .map(|&rho| extent_ratio(&m, &Rotation::identity(), rho, 0.1).unwrap())
            .collect();
        assert!(r.windows(2).all(|w| w[1] < w[0]), "{r:?}");
    }
}
