//! Staged orthographic-to-pseudo fitting and the joint focal/depth baseline.

use nalgebra::Vector3;

use super::{
    camera_condition_ratio, cost, cost_breakdown, initial_state, solve, FitProblem, FitResult,
    FitState, RhoReparam, SolverOptions, StageSummary,
};
use crate::camera::{CameraKind, CameraParams, OrthographicCamera, PerspectiveCamera};
use crate::morphable::MorphableModel;
use crate::{Error, Result};

/// Staged fit from the default orthographic-style initialisation.
pub fn staged_fit(problem: &FitProblem, options: &SolverOptions) -> Result<FitResult> {
    staged_fit_from(problem, &initial_state(problem)?, options)
}

fn with_rho(state: &FitState, rho: f64) -> FitState {
    let mut p = state.camera.params();
    p[6] = rho;
    FitState { coefficients: state.coefficients.clone(), camera: state.camera.with_params(&p) }
}

/// Stage 1 solves with the shrinkage frozen at zero; stage 2 frees it, starting
/// at the prior, and re-solves every active parameter.
pub fn staged_fit_from(problem: &FitProblem, initial: &FitState, options: &SolverOptions) -> Result<FitResult> {
    if problem.camera_kind != CameraKind::Pseudo {
        return Err(Error::invalid("staged fitting needs a pseudo-perspective problem"));
    }
    let mut frozen = problem.clone();
    frozen.active.depth = false;
    let stage1 = solve(&frozen, &with_rho(initial, 0.0), options)?;
    let state1 = stage1.state();

    let mut unlocked = problem.clone();
    unlocked.active.depth = true;
    let summary = StageSummary {
        cost: cost(&unlocked, &state1)?,
        landmark_rmse: stage1.landmark_rmse,
        iterations: stage1.iterations,
        termination_reason: stage1.termination_reason,
    };

    let mut rho0 = RhoReparam::initial_for_prior(unlocked.priors.rho_prior, unlocked.priors.rho_max).value();
    let floor = 0.01 * unlocked.priors.rho_max;
    // Back off toward zero if the prior puts a landmark on the shrinkage pole.
    let mut start = with_rho(&state1, rho0);
    while cost(&unlocked, &start).is_err() && rho0 > floor {
        rho0 = (0.5 * rho0).max(floor);
        start = with_rho(&state1, rho0);
    }
    let mut result = solve(&unlocked, &start, options)?;
    // The open interval never reaches rho = 0 exactly; keep that endpoint when
    // the data prefer it.
    if result.final_cost > summary.cost {
        result.final_cost = summary.cost;
        result.costs = cost_breakdown(&unlocked, &state1)?;
        result.landmark_rmse = stage1.landmark_rmse;
        result.coefficients = state1.coefficients.clone();
        result.camera = state1.camera;
        result.diagnostics.cost_log.push(summary.cost);
    }
    result.diagnostics.stage1 = Some(summary);
    Ok(result)
}

/// Joint focal length and depth fit, reported with the conditioning of the
/// `(f, t_z)` Jacobian columns at the solution.
pub fn fit_perspective_joint(problem: &FitProblem, initial: &FitState, options: &SolverOptions) -> Result<FitResult> {
    if problem.camera_kind != CameraKind::Perspective {
        return Err(Error::invalid("joint focal/depth fitting needs a perspective problem"));
    }
    if !(problem.active.scale && problem.active.depth) {
        return Err(Error::invalid("joint focal/depth fitting needs both f and t_z active"));
    }
    let mut result = solve(problem, initial, options)?;
    result.diagnostics.conditioning = Some(camera_condition_ratio(problem, &result.state(), &[5, 6])?);
    Ok(result)
}

/// Perspective camera matching an orthographic fit at depth `t_z = 1/rho_prior`
/// (`f = S · t_z`). Without a positive prior the camera is placed far away.
pub fn perspective_from_prior(ortho: &OrthographicCamera, rho_prior: f64, model: &MorphableModel) -> Result<PerspectiveCamera> {
    let depth_extent = model.mean_shape().iter().map(|p| p.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let tz = if rho_prior > 0.0 { 1.0 / rho_prior } else { 100.0 * depth_extent };
    let tz = tz.max(2.0 * depth_extent);
    PerspectiveCamera::new(
        ortho.rotation,
        Vector3::new(ortho.translation_xy.x, ortho.translation_xy.y, tz),
        ortho.scale * tz,
    )
}

/// Perspective camera with `f = 1/S`, pushed back to `t_z = f/S` so the
/// overall magnification matches the orthographic fit.
pub fn perspective_from_inverse_scale(ortho: &OrthographicCamera) -> Result<PerspectiveCamera> {
    let f = 1.0 / ortho.scale;
    PerspectiveCamera::new(
        ortho.rotation,
        Vector3::new(ortho.translation_xy.x, ortho.translation_xy.y, f / ortho.scale),
        f,
    )
}

/// Camera as an orthographic one, dropping any shrinkage/focal information.
pub fn orthographic_part(cam: &CameraParams) -> Option<OrthographicCamera> {
    match cam {
        CameraParams::Orthographic(c) => Some(*c),
        CameraParams::Pseudo(c) => Some(c.orthographic()),
        CameraParams::Perspective(_) => None,
    }
}
