//! Bound-constrained quadratic solvers: the penalized least-squares
//! objective, conjugate gradients, Newton-Projection with inexact CG and the
//! gradient-projection warm start.

use nalgebra::DVector;

mod cg;
mod gp;
mod npcg;
mod objective;

pub use cg::{cg_solve, CgOutcome};
pub use gp::gp_solve;
pub use npcg::{
    active_set_detect, armijo_projection_arc, newton_direction, npcg_solve, unconstrained_solve,
    ActiveSet, ArmijoStep,
};
pub use objective::QuadraticObjective;

pub fn objective_value(obj: &QuadraticObjective<'_>, f: &[f64]) -> crate::Result<f64> {
    obj.value(f)
}

pub fn objective_gradient(obj: &QuadraticObjective<'_>, f: &[f64]) -> crate::Result<DVector<f64>> {
    obj.gradient(f)
}

pub fn hessian_vector_product(
    obj: &QuadraticObjective<'_>,
    v: &[f64],
) -> crate::Result<DVector<f64>> {
    obj.hessian_vector(v)
}

/// Elementwise `max(f_i, rho)`.
pub fn project_lower_bound(f: &DVector<f64>, rho: f64) -> DVector<f64> {
    f.map(|v| v.max(rho))
}

/// Backtracking parameters for the projection-arc Armijo rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoParams {
    pub sigma: f64,
    pub backtrack: f64,
    pub initial_step: f64,
    pub max_backtracks: usize,
}

impl Default for ArmijoParams {
    fn default() -> Self {
        Self {
            sigma: 1e-4,
            backtrack: 0.5,
            initial_step: 1.0,
            max_backtracks: 60,
        }
    }
}

/// Tolerances and caps for the inner solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub tol_gp: f64,
    pub tol_np: f64,
    pub tol_cg: f64,
    pub kmax_gp: usize,
    /// Newton-Projection iteration cap; `None` means `N_x * N_y`.
    pub max_np_iter: Option<usize>,
    /// CG iteration cap per linear solve; `None` means `N_x * N_y`.
    pub max_cg_iter: Option<usize>,
    /// Activity threshold cap; `None` means `1e-8 * max(1, ||f||_inf)`.
    pub eps_bar: Option<f64>,
    pub armijo: ArmijoParams,
}

impl SolverConfig {
    /// `(Tol_GP, Tol_NP, Tol_CG) = (1e-2, 1e-6, 1e-3)`.
    pub fn simulated() -> Self {
        Self {
            tol_gp: 1e-2,
            tol_np: 1e-6,
            tol_cg: 1e-3,
            kmax_gp: 50_000,
            max_np_iter: None,
            max_cg_iter: None,
            eps_bar: None,
            armijo: ArmijoParams::default(),
        }
    }

    /// `(1e-3, 1e-8, 1e-4)`, for noise levels of 1e-3 and below.
    pub fn low_noise() -> Self {
        Self {
            tol_gp: 1e-3,
            tol_np: 1e-8,
            tol_cg: 1e-4,
            ..Self::simulated()
        }
    }

    /// `(1e-2, 1e-4, 1e-1)`, used for measured data.
    pub fn measured() -> Self {
        Self {
            tol_gp: 1e-2,
            tol_np: 1e-4,
            tol_cg: 1e-1,
            ..Self::simulated()
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let in_unit = |name: &'static str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(crate::Error::InvalidParameter {
                    name,
                    reason: format!("must lie in (0, 1), got {v}"),
                })
            }
        };
        in_unit("tol_gp", self.tol_gp)?;
        in_unit("tol_np", self.tol_np)?;
        in_unit("tol_cg", self.tol_cg)?;
        let caps = [
            ("kmax_gp", Some(self.kmax_gp)),
            ("max_np_iter", self.max_np_iter),
            ("max_cg_iter", self.max_cg_iter),
        ];
        for (name, cap) in caps {
            if cap == Some(0) {
                return Err(crate::Error::InvalidParameter {
                    name,
                    reason: "must be at least 1".into(),
                });
            }
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::simulated()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Relative decrease of the monitored quantity fell below tolerance.
    Converged,
    /// Projected gradient vanished.
    Stationary,
    MaxIterations,
    LineSearchFailed,
    /// Data vector is identically zero.
    ZeroData,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Converged => "converged",
            Self::Stationary => "stationary",
            Self::MaxIterations => "max-iterations",
            Self::LineSearchFailed => "line-search-failed",
            Self::ZeroData => "zero-data",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub iterations: usize,
    pub cg_iterations: usize,
    pub objective: f64,
    pub residual_norm: f64,
    pub termination: Termination,
    /// Objective after each accepted step, starting with the initial value.
    pub objective_history: Vec<f64>,
}
