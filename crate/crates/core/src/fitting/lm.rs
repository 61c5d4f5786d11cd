//! Levenberg-Marquardt with multiplicative damping on the scaled normal equations
//! `(J^T J + lambda · diag(J^T J)) delta = -J^T r`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_state, cost_breakdown, landmark_rmse, residuals_and_jacobian, FitProblem, FitState};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub initial_damping: f64,
    /// Damping multiplier after a rejected step.
    pub damping_increase: f64,
    /// Damping divisor after an accepted step.
    pub damping_decrease: f64,
    /// Infinity-norm threshold on `J^T r`.
    pub gradient_tol: f64,
    /// Relative threshold on the step norm.
    pub step_tol: f64,
    pub max_iterations: usize,
    /// Damping beyond which the normal equations are declared singular.
    pub max_damping: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            initial_damping: 1e-3,
            damping_increase: 10.0,
            damping_decrease: 10.0,
            gradient_tol: 1e-10,
            step_tol: 1e-12,
            max_iterations: 200,
            max_damping: 1e16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    GradientTol,
    StepTol,
    MaxIter,
    SingularNormalEquations,
}

impl TerminationReason {
    pub fn is_converged(self) -> bool {
        matches!(self, TerminationReason::GradientTol | TerminationReason::StepTol)
    }

    pub fn name(self) -> &'static str {
        match self {
            TerminationReason::GradientTol => "gradient_tol",
            TerminationReason::StepTol => "step_tol",
            TerminationReason::MaxIter => "max_iter",
            TerminationReason::SingularNormalEquations => "singular_normal_equations",
        }
    }
}

/// Snapshot passed to the observer after the initial evaluation and after
/// every accepted step.
#[derive(Debug, Clone)]
pub struct IterationRecord<'a> {
    pub iteration: usize,
    pub cost: f64,
    pub damping: f64,
    pub state: &'a FitState,
}

pub fn solve(problem: &FitProblem, initial: &FitState, options: &SolverOptions) -> Result<super::FitResult> {
    solve_observed(problem, initial, options, |_| {})
}

pub fn solve_observed(
    problem: &FitProblem,
    initial: &FitState,
    options: &SolverOptions,
    mut observer: impl FnMut(&IterationRecord<'_>),
) -> Result<super::FitResult> {
    problem.validate()?;
    check_state(problem, initial)?;
    let layout = problem.layout();
    let mut x = layout.pack(initial);
    // Round-trip through the layout so a clipped shrinkage is what we evaluate.
    let mut state = layout.unpack(&problem.model, initial, &x);
    let (mut r, mut jac) = residuals_and_jacobian(problem, &layout, &state, &x)?;
    let mut cost = r.norm_squared();
    let mut damping = options.initial_damping;
    let mut cost_log = vec![cost];
    observer(&IterationRecord { iteration: 0, cost, damping, state: &state });

    let rho_col = layout.rho_column();
    let mut iterations = 0;
    let termination = 'outer: loop {
        if layout.len() == 0 {
            break TerminationReason::GradientTol;
        }
        let g = jac.transpose() * &r;
        if g.amax() <= options.gradient_tol {
            break TerminationReason::GradientTol;
        }
        if iterations >= options.max_iterations {
            break TerminationReason::MaxIter;
        }
        let jtj = jac.transpose() * &jac;
        let diag = marquardt_diagonal(&jtj);
        loop {
            let Some(mut delta) = damped_step(&jtj, &diag, &g, damping) else {
                damping *= options.damping_increase;
                if damping > options.max_damping {
                    break 'outer TerminationReason::SingularNormalEquations;
                }
                continue;
            };
            if let Some(k) = rho_col {
                // Large raw moves saturate the sigmoid and stall on its plateau.
                let m = delta[k].abs();
                if m > MAX_RAW_RHO_STEP {
                    delta *= MAX_RAW_RHO_STEP / m;
                }
            }
            if delta.norm() <= options.step_tol * (x.norm() + options.step_tol) {
                break 'outer TerminationReason::StepTol;
            }
            let x_new = &x + &delta;
            let candidate = layout.unpack(&problem.model, &state, &x_new);
            match residuals_and_jacobian(problem, &layout, &candidate, &x_new) {
                Ok((r_new, jac_new)) if r_new.norm_squared() < cost => {
                    x = x_new;
                    state = candidate;
                    r = r_new;
                    jac = jac_new;
                    cost = r.norm_squared();
                    damping = (damping / options.damping_decrease).max(f64::MIN_POSITIVE);
                    iterations += 1;
                    cost_log.push(cost);
                    observer(&IterationRecord { iteration: iterations, cost, damping, state: &state });
                    break;
                }
                // Worse cost or a projection outside the valid domain.
                Ok(_) | Err(Error::DegenerateDepth { .. }) | Err(Error::ShrinkageSingularity { .. }) => {
                    damping *= options.damping_increase;
                    if damping > options.max_damping {
                        break 'outer TerminationReason::StepTol;
                    }
                }
                Err(e) => return Err(e),
            }
        }
    };

    let costs = cost_breakdown(problem, &state)?;
    let (rmse, _) = landmark_rmse(problem, &state, None)?;
    Ok(super::FitResult {
        coefficients: state.coefficients.clone(),
        camera: state.camera.canonicalized(),
        final_cost: cost,
        costs,
        iterations,
        converged: termination.is_converged(),
        termination_reason: termination,
        landmark_rmse: rmse,
        diagnostics: super::FitDiagnostics { cost_log, ..Default::default() },
    })
}

/// Largest change of the raw shrinkage parameter in one step.
const MAX_RAW_RHO_STEP: f64 = 2.0;

fn marquardt_diagonal(jtj: &DMatrix<f64>) -> DVector<f64> {
    let d = jtj.diagonal();
    let max = d.amax();
    let floor = if max > 0.0 { max * 1e-12 } else { 1.0 };
    d.map(|v| v.max(floor))
}

fn damped_step(jtj: &DMatrix<f64>, diag: &DVector<f64>, g: &DVector<f64>, damping: f64) -> Option<DVector<f64>> {
    let mut a = jtj.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += damping * diag[i];
    }
    let chol = a.cholesky()?;
    let delta = -chol.solve(g);
    delta.iter().all(|v| v.is_finite()).then_some(delta)
}
