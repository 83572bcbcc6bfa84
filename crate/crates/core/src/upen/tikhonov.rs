use nalgebra::DVector;

use super::{ConstraintMode, UpenConfig};
use crate::error::{Error, Result};
use crate::metrics::relative_error;
use crate::model::{geometric_space, Distribution, KernelPair};
use crate::solvers::{gp_solve, npcg_solve, unconstrained_solve, QuadraticObjective, SolverReport};

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "alpha",
            reason: format!("must be positive and finite, got {alpha}"),
        })
    }
}

fn warm_start(kp: &KernelPair, s: &[f64], cfg: &UpenConfig) -> Result<DVector<f64>> {
    let bound = match cfg.mode {
        ConstraintMode::LowerBound => cfg.rho,
        _ => 0.0,
    };
    let start = DVector::from_element(kp.map_len(), bound.max(0.0));
    Ok(gp_solve(kp, s, &start, bound, &cfg.solver)?.0)
}

/// Single-parameter Tikhonov: `min ||K f - s||^2 + alpha ||L f||^2` on the
/// feasible set of `cfg.mode`, started from the gradient-projection iterate.
pub fn tikhonov_solve(
    kp: &KernelPair,
    s: &[f64],
    alpha: f64,
    cfg: &UpenConfig,
) -> Result<(Distribution, SolverReport)> {
    check_alpha(alpha)?;
    cfg.validate()?;
    let f0 = warm_start(kp, s, cfg)?;
    let (f, report) = tikhonov_solve_from(kp, s, alpha, &f0, cfg)?;
    let (nx, ny) = kp.map_shape();
    Ok((Distribution::from_vec(nx, ny, f.as_slice())?, report))
}

/// As [`tikhonov_solve`] from a caller-supplied feasible start.
pub fn tikhonov_solve_from(
    kp: &KernelPair,
    s: &[f64],
    alpha: f64,
    f0: &DVector<f64>,
    cfg: &UpenConfig,
) -> Result<(DVector<f64>, SolverReport)> {
    check_alpha(alpha)?;
    let obj = QuadraticObjective::tikhonov(kp, s, alpha, cfg.effective_bound())?;
    match cfg.mode {
        ConstraintMode::Unconstrained => unconstrained_solve(&obj, f0, &cfg.solver),
        _ => npcg_solve(&obj, f0, &cfg.solver),
    }
}

/// 40 values log-spaced over `[1e-8, 1e2]`.
pub fn default_alpha_grid() -> Vec<f64> {
    geometric_space(1e-8, 1e2, 40)
}

#[derive(Debug, Clone)]
pub struct AlphaSearch {
    pub alpha: f64,
    pub distribution: Distribution,
    pub err: f64,
    pub report: SolverReport,
    /// `(alpha, Err)` for every grid entry, in grid order.
    pub profile: Vec<(f64, f64)>,
}

/// Grid search for the `alpha` minimizing the relative error against a
/// known distribution.
///
/// Distinct grid values are solved once each, from the largest to the
/// smallest, each warm-started from the previous solution (the largest from
/// the gradient-projection iterate). The result therefore does not depend on
/// grid order or duplicates; ties go to the larger `alpha`.
pub fn optimal_alpha_search(
    kp: &KernelPair,
    s: &[f64],
    f_true: &Distribution,
    alphas: &[f64],
    cfg: &UpenConfig,
) -> Result<AlphaSearch> {
    if alphas.is_empty() {
        return Err(Error::InvalidParameter {
            name: "alpha grid",
            reason: "must not be empty".into(),
        });
    }
    if f_true.shape() != kp.map_shape() {
        return Err(Error::DimensionMismatch {
            what: "true distribution",
            expected: kp.map_len(),
            found: f_true.len(),
        });
    }
    for &a in alphas {
        check_alpha(a)?;
    }
    cfg.validate()?;
    let mut order: Vec<f64> = alphas.to_vec();
    order.sort_by(|a, b| b.total_cmp(a));
    order.dedup();

    let mut f = warm_start(kp, s, cfg)?;
    let mut errs = Vec::with_capacity(order.len());
    let mut best: Option<(f64, f64, DVector<f64>, SolverReport)> = None;
    for &alpha in &order {
        let (next, report) = tikhonov_solve_from(kp, s, alpha, &f, cfg)?;
        let err = relative_error(next.as_slice(), f_true.as_slice())?;
        errs.push((alpha, err));
        if best.as_ref().is_none_or(|b| err < b.1) {
            best = Some((alpha, err, next.clone(), report));
        }
        f = next;
    }
    let profile = alphas
        .iter()
        .map(|a| *errs.iter().find(|(b, _)| b == a).expect("every alpha was solved"))
        .collect();
    let (alpha, err, f, report) = best.expect("grid is not empty");
    let (nx, ny) = kp.map_shape();
    Ok(AlphaSearch {
        alpha,
        distribution: Distribution::from_vec(nx, ny, f.as_slice())?,
        err,
        report,
        profile,
    })
}

/// Residual and smoothness bounds `||K f* - s|| <= epsilon`,
/// `||L f*|| <= smoothness`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MillerBounds {
    pub epsilon: f64,
    pub smoothness: f64,
}

/// `alpha = epsilon^2 / E^2`.
pub fn miller_alpha(bounds: &MillerBounds) -> Result<f64> {
    let ok = |v: f64| v > 0.0 && v.is_finite();
    if !ok(bounds.epsilon) || !ok(bounds.smoothness) {
        return Err(Error::InvalidParameter {
            name: "Miller bounds",
            reason: format!(
                "epsilon={} E={} must be positive",
                bounds.epsilon, bounds.smoothness
            ),
        });
    }
    Ok((bounds.epsilon / bounds.smoothness).powi(2))
}
