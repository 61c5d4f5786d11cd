//! Landmark fitting of model coefficients and camera parameters.
//!
//! The objective is the squared norm of a residual vector made of
//!
//! - weighted 2D landmark errors `sqrt(w) · (projected - observed)`,
//! - optional L2 terms `sqrt(reg) · c` on active coefficients,
//! - a shrinkage prior `sqrt(lambda_p) · (rho - rho_prior)` when `rho` is free.
//!
//! A free shrinkage is optimised through [`RhoReparam`], so the solver never
//! leaves `(0, rho_max)`.

mod lm;
mod reparam;
mod schedule;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::{
    point_jacobian, CameraKind, CameraParams, OrthographicCamera, PerspectiveCamera,
    PseudoPerspectiveCamera, Rotation, CAMERA_SLOTS,
};
use crate::morphable::{ModelCoefficients, MorphableModel, Region};
use crate::{Error, JacobianBlock, Result};

pub use lm::{solve, solve_observed, IterationRecord, SolverOptions, TerminationReason};
pub use reparam::RhoReparam;
pub use schedule::{
    fit_perspective_joint, orthographic_part, perspective_from_inverse_scale, perspective_from_prior,
    staged_fit, staged_fit_from,
};

/// Which parameter groups the solver may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActiveMask {
    pub beta: bool,
    pub psi: bool,
    pub theta_c: bool,
    pub rotation: bool,
    pub translation: bool,
    /// `S` or `f`.
    pub scale: bool,
    /// `rho` (pseudo) or `t_z` (perspective). Ignored for orthographic cameras.
    pub depth: bool,
}

impl Default for ActiveMask {
    fn default() -> Self {
        ActiveMask::all()
    }
}

impl ActiveMask {
    pub fn all() -> Self {
        ActiveMask { beta: true, psi: true, theta_c: true, rotation: true, translation: true, scale: true, depth: true }
    }

    pub fn none() -> Self {
        ActiveMask { beta: false, psi: false, theta_c: false, rotation: false, translation: false, scale: false, depth: false }
    }

    fn camera_slot(&self, slot: usize) -> bool {
        match slot {
            0..=2 => self.rotation,
            3 | 4 => self.translation,
            5 => self.scale,
            _ => self.depth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Vertex index of a model landmark.
    pub landmark: usize,
    pub u: f64,
    pub v: f64,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Priors {
    pub rho_prior: f64,
    pub lambda_p: f64,
    pub rho_max: f64,
    /// L2 weight on active model coefficients.
    pub coefficient_reg: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Priors { rho_prior: 0.0, lambda_p: 0.1, rho_max: 6.0, coefficient_reg: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegionWeights {
    pub jawline: f64,
    pub nose: f64,
    pub other: f64,
}

impl Default for RegionWeights {
    fn default() -> Self {
        RegionWeights { jawline: 1.0, nose: 1.0, other: 1.0 }
    }
}

impl RegionWeights {
    pub fn get(&self, r: Region) -> f64 {
        match r {
            Region::Jawline => self.jawline,
            Region::Nose => self.nose,
            Region::Other => self.other,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitProblem {
    pub model: Arc<MorphableModel>,
    pub observations: Vec<Observation>,
    pub camera_kind: CameraKind,
    pub active: ActiveMask,
    pub priors: Priors,
    pub region_weights: RegionWeights,
}

impl FitProblem {
    pub fn new(model: Arc<MorphableModel>, observations: Vec<Observation>, camera_kind: CameraKind) -> Self {
        FitProblem {
            model,
            observations,
            camera_kind,
            active: ActiveMask::all(),
            priors: Priors::default(),
            region_weights: RegionWeights::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, o) in self.observations.iter().enumerate() {
            if self.model.landmark(o.landmark).is_none() {
                return Err(Error::invalid(format!("observation {i} refers to vertex {} which is not a landmark", o.landmark)));
            }
            if !(o.weight >= 0.0) {
                return Err(Error::invalid(format!("observation {i} has negative weight")));
            }
            if !o.u.is_finite() || !o.v.is_finite() {
                return Err(Error::invalid(format!("observation {i} is not finite")));
            }
        }
        if !(self.priors.lambda_p >= 0.0) {
            return Err(Error::invalid("lambda_p must be non-negative"));
        }
        if !(self.priors.rho_max > 0.0) {
            return Err(Error::invalid("rho_max must be positive"));
        }
        if !(self.priors.coefficient_reg >= 0.0) {
            return Err(Error::invalid("coefficient_reg must be non-negative"));
        }
        Ok(())
    }

    /// True when the solver moves the shrinkage parameter.
    pub fn rho_active(&self) -> bool {
        self.camera_kind == CameraKind::Pseudo && self.active.depth
    }

    fn obs_sqrt_weight(&self, o: &Observation) -> f64 {
        let region = self.model.landmark(o.landmark).map(|l| l.region).unwrap_or(Region::Other);
        (o.weight * self.region_weights.get(region)).sqrt()
    }

    /// Number of rows of the residual vector.
    pub fn n_residuals(&self) -> usize {
        2 * self.observations.len() + self.reg_slots().len() + usize::from(self.rho_active())
    }

    fn reg_slots(&self) -> Vec<usize> {
        if self.priors.coefficient_reg > 0.0 {
            self.layout().coefficient_indices()
        } else {
            Vec::new()
        }
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::new(self)
    }
}

/// Coefficients plus camera, the full set of unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct FitState {
    pub coefficients: ModelCoefficients,
    pub camera: CameraParams,
}

/// Optimiser parameter: a model coefficient or a camera slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Slot {
    Coefficient(usize),
    Camera(usize),
}

/// Mapping between a [`FitState`] and the vector of free parameters.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub slots: Vec<Slot>,
    rho_max: f64,
    rho_active: bool,
}

impl Layout {
    fn new(problem: &FitProblem) -> Self {
        let (nb, np, nt) = problem.model.dims();
        let mut slots = Vec::new();
        for (on, start, len) in [
            (problem.active.beta, 0, nb),
            (problem.active.psi, nb, np),
            (problem.active.theta_c, nb + np, nt),
        ] {
            if on {
                slots.extend((start..start + len).map(Slot::Coefficient));
            }
        }
        let n_cam = if problem.camera_kind == CameraKind::Orthographic { 6 } else { CAMERA_SLOTS };
        slots.extend((0..n_cam).filter(|&k| problem.active.camera_slot(k)).map(Slot::Camera));
        Layout { slots, rho_max: problem.priors.rho_max, rho_active: problem.rho_active() }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    /// Column of the raw shrinkage parameter, if it is free.
    pub fn rho_column(&self) -> Option<usize> {
        self.slots.iter().position(|&s| self.is_rho(s))
    }

    fn coefficient_indices(&self) -> Vec<usize> {
        self.slots
            .iter()
            .filter_map(|s| match s {
                Slot::Coefficient(j) => Some(*j),
                _ => None,
            })
            .collect()
    }

    fn is_rho(&self, slot: Slot) -> bool {
        self.rho_active && slot == Slot::Camera(6)
    }

    pub fn pack(&self, state: &FitState) -> DVector<f64> {
        let coeffs = state.coefficients.to_vec();
        let cam = state.camera.params();
        DVector::from_iterator(
            self.len(),
            self.slots.iter().map(|&s| match s {
                Slot::Coefficient(j) => coeffs[j],
                Slot::Camera(k) if self.is_rho(s) => RhoReparam::from_rho(cam[k], self.rho_max).raw,
                Slot::Camera(k) => cam[k],
            }),
        )
    }

    pub fn unpack(&self, model: &MorphableModel, base: &FitState, x: &DVector<f64>) -> FitState {
        let mut coeffs = base.coefficients.to_vec();
        let mut cam = base.camera.params();
        for (&s, &val) in self.slots.iter().zip(x.iter()) {
            match s {
                Slot::Coefficient(j) => coeffs[j] = val,
                Slot::Camera(k) if self.is_rho(s) => cam[k] = RhoReparam::new(val, self.rho_max).value(),
                Slot::Camera(k) => cam[k] = val,
            }
        }
        FitState {
            coefficients: ModelCoefficients::from_slice(model, &coeffs).expect("layout matches model"),
            camera: base.camera.with_params(&cam),
        }
    }

    /// `d(physical)/d(optimiser)` for each slot; only the shrinkage differs from 1.
    fn chain_factor(&self, slot: Slot, x_val: f64) -> f64 {
        if self.is_rho(slot) {
            RhoReparam::new(x_val, self.rho_max).derivative()
        } else {
            1.0
        }
    }
}

fn check_state(problem: &FitProblem, state: &FitState) -> Result<()> {
    if state.camera.kind() != problem.camera_kind {
        return Err(Error::invalid(format!(
            "state camera is {} but the problem expects {}",
            state.camera.kind(),
            problem.camera_kind
        )));
    }
    if state.coefficients.len() != problem.model.n_coefficients() {
        return Err(Error::invalid("state coefficient count does not match the model"));
    }
    Ok(())
}

fn observed_vertices(problem: &FitProblem) -> Vec<usize> {
    problem.observations.iter().map(|o| o.landmark).collect()
}

/// Residual vector at `state`. Its squared norm is the objective.
pub fn residuals(problem: &FitProblem, state: &FitState) -> Result<DVector<f64>> {
    check_state(problem, state)?;
    let pts = problem.model.evaluate_vertices(&state.coefficients, &observed_vertices(problem))?;
    let proj = crate::camera::project(&state.camera, &pts)?;
    let mut r = Vec::with_capacity(problem.n_residuals());
    for (o, p) in problem.observations.iter().zip(&proj) {
        let w = problem.obs_sqrt_weight(o);
        r.push(w * (p.x - o.u));
        r.push(w * (p.y - o.v));
    }
    let reg = problem.priors.coefficient_reg.sqrt();
    let coeffs = state.coefficients.to_vec();
    for j in problem.reg_slots() {
        r.push(reg * coeffs[j]);
    }
    if problem.rho_active() {
        let rho = state.camera.params()[6];
        r.push(problem.priors.lambda_p.sqrt() * (rho - problem.priors.rho_prior));
    }
    Ok(DVector::from_vec(r))
}

/// Outcome of a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub coefficients: ModelCoefficients,
    pub camera: CameraParams,
    pub final_cost: f64,
    pub costs: CostBreakdown,
    pub iterations: usize,
    pub converged: bool,
    pub termination_reason: TerminationReason,
    /// Unweighted landmark RMSE at the solution, in observation units.
    pub landmark_rmse: f64,
    pub diagnostics: FitDiagnostics,
}

impl FitResult {
    pub fn state(&self) -> FitState {
        FitState { coefficients: self.coefficients.clone(), camera: self.camera }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitDiagnostics {
    /// Cost after the initial evaluation and after every accepted step.
    pub cost_log: Vec<f64>,
    /// First stage of a staged fit.
    pub stage1: Option<StageSummary>,
    /// `sigma_min / sigma_max` of the scale/depth camera columns at the solution.
    pub conditioning: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    /// Full staged objective (including the shrinkage prior) at the stage
    /// solution with `rho = 0`.
    pub cost: f64,
    pub landmark_rmse: f64,
    pub iterations: usize,
    pub termination_reason: TerminationReason,
}

/// Objective value split by term.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub landmark: f64,
    pub rho_prior: f64,
    pub coefficient_reg: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.landmark + self.rho_prior + self.coefficient_reg
    }
}

pub fn cost_breakdown(problem: &FitProblem, state: &FitState) -> Result<CostBreakdown> {
    let r = residuals(problem, state)?;
    let n_obs = 2 * problem.observations.len();
    let n_reg = problem.reg_slots().len();
    let sq = |range: std::ops::Range<usize>| r.rows_range(range).norm_squared();
    Ok(CostBreakdown {
        landmark: sq(0..n_obs),
        coefficient_reg: sq(n_obs..n_obs + n_reg),
        rho_prior: sq(n_obs + n_reg..r.len()),
    })
}

pub fn cost(problem: &FitProblem, state: &FitState) -> Result<f64> {
    Ok(residuals(problem, state)?.norm_squared())
}

/// Unweighted root-mean-square 2D landmark error, optionally restricted to
/// some regions. Returns `(rmse, n_points)`.
pub fn landmark_rmse(problem: &FitProblem, state: &FitState, regions: Option<&[Region]>) -> Result<(f64, usize)> {
    let pts = problem.model.evaluate_vertices(&state.coefficients, &observed_vertices(problem))?;
    let proj = crate::camera::project(&state.camera, &pts)?;
    let mut sum = 0.0;
    let mut n = 0;
    for (o, p) in problem.observations.iter().zip(&proj) {
        let region = problem.model.landmark(o.landmark).map(|l| l.region);
        if let (Some(filter), Some(region)) = (regions, region) {
            if !filter.contains(&region) {
                continue;
            }
        }
        sum += (p - Vector2::new(o.u, o.v)).norm_squared();
        n += 1;
    }
    Ok(if n == 0 { (0.0, 0) } else { ((sum / n as f64).sqrt(), n) })
}

/// Residuals and their Jacobian with respect to the free parameters, in
/// optimiser coordinates (raw shrinkage when it is free).
pub(crate) fn residuals_and_jacobian(
    problem: &FitProblem,
    layout: &Layout,
    state: &FitState,
    x: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let r = residuals(problem, state)?;
    let mut jac = DMatrix::zeros(r.len(), layout.len());
    let model = &problem.model;
    let basis = model.evaluate_jacobian();
    let pts = model.evaluate_vertices(&state.coefficients, &observed_vertices(problem))?;
    for (i, (o, q)) in problem.observations.iter().zip(&pts).enumerate() {
        let w = problem.obs_sqrt_weight(o);
        let pj = point_jacobian(&state.camera, q, i)?;
        for (col, &slot) in layout.slots.iter().enumerate() {
            let d = match slot {
                Slot::Coefficient(j) => {
                    let db = Vector3::new(
                        basis[(3 * o.landmark, j)],
                        basis[(3 * o.landmark + 1, j)],
                        basis[(3 * o.landmark + 2, j)],
                    );
                    pj.d_point * db
                }
                Slot::Camera(k) => pj.d_camera.column(k) * layout.chain_factor(slot, x[col]),
            };
            jac[(2 * i, col)] = w * d.x;
            jac[(2 * i + 1, col)] = w * d.y;
        }
    }
    let mut row = 2 * problem.observations.len();
    let reg = problem.priors.coefficient_reg.sqrt();
    for j in problem.reg_slots() {
        let col = layout.slots.iter().position(|&s| s == Slot::Coefficient(j)).expect("active coefficient");
        jac[(row, col)] = reg;
        row += 1;
    }
    if problem.rho_active() {
        if let Some(col) = layout.slots.iter().position(|&s| s == Slot::Camera(6)) {
            jac[(row, col)] = problem.priors.lambda_p.sqrt() * layout.chain_factor(Slot::Camera(6), x[col]);
        }
    }
    Ok((r, jac))
}

/// Jacobian of [`residuals`] with respect to the free parameters.
///
/// Columns follow [`free_parameter_names`]; a free shrinkage is differentiated
/// through its raw sigmoid parameter.
pub fn residual_jacobian(problem: &FitProblem, state: &FitState) -> Result<JacobianBlock> {
    check_state(problem, state)?;
    let layout = problem.layout();
    let x = layout.pack(state);
    Ok(JacobianBlock(residuals_and_jacobian(problem, &layout, state, &x)?.1))
}

/// Free-parameter vector of `state` in optimiser coordinates.
pub fn free_parameters(problem: &FitProblem, state: &FitState) -> DVector<f64> {
    problem.layout().pack(state)
}

/// State obtained by replacing the free parameters of `base` with `x`.
pub fn state_from_free_parameters(problem: &FitProblem, base: &FitState, x: &DVector<f64>) -> FitState {
    problem.layout().unpack(&problem.model, base, x)
}

pub fn free_parameter_names(problem: &FitProblem, camera: &CameraParams) -> Vec<String> {
    let names = camera.param_names();
    problem
        .layout()
        .slots
        .iter()
        .map(|s| match s {
            Slot::Coefficient(j) => format!("coeff_{j}"),
            Slot::Camera(6) if problem.rho_active() => "rho_raw".to_string(),
            Slot::Camera(k) => names[*k].to_string(),
        })
        .collect()
}

/// `sigma_min / sigma_max` of the column-normalised landmark Jacobian restricted
/// to the given physical camera slots (e.g. `[5, 6]` for `(f, t_z)` or `(S, rho)`).
pub fn camera_condition_ratio(problem: &FitProblem, state: &FitState, slots: &[usize]) -> Result<f64> {
    let pts = problem.model.evaluate_vertices(&state.coefficients, &observed_vertices(problem))?;
    let mut m = DMatrix::zeros(2 * pts.len(), slots.len());
    for (i, (o, q)) in problem.observations.iter().zip(&pts).enumerate() {
        let w = problem.obs_sqrt_weight(o);
        let pj = point_jacobian(&state.camera, q, i)?;
        for (c, &k) in slots.iter().enumerate() {
            m[(2 * i, c)] = w * pj.d_camera[(0, k)];
            m[(2 * i + 1, c)] = w * pj.d_camera[(1, k)];
        }
    }
    Ok(crate::jacobian::condition_ratio(&m))
}

/// Orthographic-style starting point: zero coefficients, identity rotation,
/// scale and translation from the landmark spread. Perspective cameras are
/// placed with [`perspective_from_prior`].
pub fn initial_state(problem: &FitProblem) -> Result<FitState> {
    let model = &problem.model;
    let coefficients = ModelCoefficients::zeros(model);
    let verts = observed_vertices(problem);
    if verts.is_empty() {
        let camera = match problem.camera_kind {
            CameraKind::Orthographic => CameraParams::Orthographic(OrthographicCamera::new(Rotation::identity(), Vector2::zeros(), 1.0)?),
            CameraKind::Pseudo => CameraParams::Pseudo(PseudoPerspectiveCamera::new(Rotation::identity(), Vector2::zeros(), 1.0, 0.0)?),
            CameraKind::Perspective => CameraParams::Perspective(PerspectiveCamera::new(Rotation::identity(), Vector3::new(0.0, 0.0, 1.0), 1.0)?),
        };
        return Ok(FitState { coefficients, camera });
    }
    let pts = model.evaluate_vertices(&coefficients, &verts)?;
    let n = pts.len() as f64;
    let obs: Vec<Vector2<f64>> = problem.observations.iter().map(|o| Vector2::new(o.u, o.v)).collect();
    let obs_c = obs.iter().sum::<Vector2<f64>>() / n;
    let mod_c = pts.iter().map(|p| p.xy()).sum::<Vector2<f64>>() / n;
    let spread = |a: &[Vector2<f64>], c: Vector2<f64>| (a.iter().map(|p| (p - c).norm_squared()).sum::<f64>() / n).sqrt();
    let mod_xy: Vec<Vector2<f64>> = pts.iter().map(|p| p.xy()).collect();
    let (so, sm) = (spread(&obs, obs_c), spread(&mod_xy, mod_c));
    let scale = if so > 0.0 && sm > 0.0 { so / sm } else { 1.0 };
    let t = obs_c / scale - mod_c;
    let ortho = OrthographicCamera::new(Rotation::identity(), t, scale)?;
    let camera = match problem.camera_kind {
        CameraKind::Orthographic => CameraParams::Orthographic(ortho),
        CameraKind::Pseudo => CameraParams::Pseudo(PseudoPerspectiveCamera::new(ortho.rotation, t, scale, 0.0)?),
        CameraKind::Perspective => CameraParams::Perspective(perspective_from_prior(&ortho, problem.priors.rho_prior, model)?),
    };
    Ok(FitState { coefficients, camera })
}
