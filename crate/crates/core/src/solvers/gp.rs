use nalgebra::DVector;

use super::{project_lower_bound, SolverConfig, SolverReport, Termination};
use crate::error::{Error, Result};
use crate::model::KernelPair;

/// Projected gradient on `||K f - s||^2` subject to `f >= rho`.
///
/// Each step moves along `-g` with the exact line-minimizing step of the free
/// variables, then backtracks along the projection arc until
/// `Q(P[f - a g]) <= Q(f) - sigma g^T (f - P[f - a g])`. Iteration stops as
/// soon as the residual norm decreases by no more than `tol_gp * ||s||`, so
/// the result is an early-stopped, over-smoothed approximation.
pub fn gp_solve(
    kp: &KernelPair,
    s: &[f64],
    f0: &DVector<f64>,
    rho: f64,
    cfg: &SolverConfig,
) -> Result<(DVector<f64>, SolverReport)> {
    if f0.len() != kp.map_len() {
        return Err(Error::DimensionMismatch {
            what: "distribution",
            expected: kp.map_len(),
            found: f0.len(),
        });
    }
    let s_vec = DVector::from_column_slice(s);
    let s_norm = s_vec.norm();
    if s_norm == 0.0 {
        let f = DVector::from_element(f0.len(), rho.max(0.0));
        return Ok((
            f,
            SolverReport {
                iterations: 0,
                cg_iterations: 0,
                objective: 0.0,
                residual_norm: 0.0,
                termination: Termination::ZeroData,
                objective_history: vec![0.0],
            },
        ));
    }
    let armijo = &cfg.armijo;
    let mut f = project_lower_bound(f0, rho);
    let mut residual = kp.matvec(f.as_slice())? - &s_vec;
    let mut value = residual.norm_squared();
    let mut history = vec![value];
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;

    while iterations < cfg.kmax_gp {
        let grad = kp.rmatvec(residual.as_slice())? * 2.0;
        let mut dir = -&grad;
        for i in 0..dir.len() {
            if f[i] <= rho && grad[i] > 0.0 {
                dir[i] = 0.0;
            }
        }
        let dir_sq = dir.norm_squared();
        if dir_sq == 0.0 {
            termination = Termination::Stationary;
            break;
        }
        let curvature = 2.0 * dir.dot(&kp.gram_matvec(dir.as_slice())?);
        let mut step = if curvature > 0.0 { dir_sq / curvature } else { 1.0 };

        let mut accepted = None;
        for _ in 0..=armijo.max_backtracks {
            let trial = project_lower_bound(&(&f - &grad * step), rho);
            let trial_residual = kp.matvec(trial.as_slice())? - &s_vec;
            let trial_value = trial_residual.norm_squared();
            let required = armijo.sigma * grad.dot(&(&f - &trial));
            if value - trial_value >= required {
                accepted = Some((trial, trial_residual, trial_value));
                break;
            }
            step *= armijo.backtrack;
        }
        let Some((trial, trial_residual, trial_value)) = accepted else {
            termination = Termination::LineSearchFailed;
            break;
        };
        iterations += 1;
        let decrease = value.sqrt() - trial_value.sqrt();
        f = trial;
        residual = trial_residual;
        value = trial_value;
        history.push(value);
        if decrease <= cfg.tol_gp * s_norm {
            termination = Termination::Converged;
            break;
        }
    }

    Ok((
        f,
        SolverReport {
            iterations,
            cg_iterations: 0,
            objective: value,
            residual_norm: value.sqrt(),
            termination,
            objective_history: history,
        },
    ))
}
