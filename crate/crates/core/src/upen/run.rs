use nalgebra::DVector;

use super::{update_lambda_relaxed, ConstraintMode, RegularizationField, UpenConfig};
use crate::error::{Error, Result};
use crate::model::{Distribution, KernelPair};
use crate::solvers::{gp_solve, npcg_solve, unconstrained_solve, QuadraticObjective, SolverReport};

#[derive(Debug, Clone, PartialEq)]
pub struct UpenIteration {
    /// `||K f^(k+1) - s||` after the inner solve.
    pub residual_norm: f64,
    /// `||f^(k+1) - f^(k)|| / ||f^(k)||`.
    pub relative_change: f64,
    pub inner: SolverReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpenTermination {
    Converged,
    MaxIterations,
    ZeroData,
}

impl std::fmt::Display for UpenTermination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Converged => "converged",
            Self::MaxIterations => "max-iterations",
            Self::ZeroData => "zero data",
        })
    }
}

#[derive(Debug, Clone)]
pub struct UpenResult {
    pub distribution: Distribution,
    /// Field used for the last inner solve.
    pub lambda: RegularizationField,
    pub history: Vec<UpenIteration>,
    pub termination: UpenTermination,
    pub warm_start: SolverReport,
}

impl UpenResult {
    /// Outer iterations performed.
    pub fn iterations(&self) -> usize {
        self.history.len()
    }

    /// Total inner CG iterations.
    pub fn cg_iterations(&self) -> usize {
        self.history.iter().map(|h| h.inner.cg_iterations).sum()
    }

    pub fn residual_norm(&self) -> f64 {
        self.history
            .last()
            .map_or(self.warm_start.residual_norm, |h| h.residual_norm)
    }
}

/// State handed to an observer before each inner solve.
#[derive(Debug)]
pub struct UpenStep<'a> {
    pub iteration: usize,
    /// Iterate the field was computed from.
    pub iterate: &'a Distribution,
    pub residual_norm: f64,
    pub lambda: &'a RegularizationField,
}

pub fn upen_run(kp: &KernelPair, s: &[f64], cfg: &UpenConfig) -> Result<UpenResult> {
    upen_run_observed(kp, s, cfg, |_| {})
}

/// Runs the outer iteration, calling `observer` with every field it emits.
pub fn upen_run_observed(
    kp: &KernelPair,
    s: &[f64],
    cfg: &UpenConfig,
    mut observer: impl FnMut(&UpenStep<'_>),
) -> Result<UpenResult> {
    cfg.validate()?;
    if s.len() != kp.data_len() {
        return Err(Error::DimensionMismatch {
            what: "signal",
            expected: kp.data_len(),
            found: s.len(),
        });
    }
    let (nx, ny) = kp.map_shape();
    let bound = cfg.effective_bound();
    let gp_bound = match cfg.mode {
        ConstraintMode::Unconstrained => 0.0,
        _ => bound,
    };
    let start = DVector::from_element(nx * ny, gp_bound.max(0.0));
    let (mut f, warm_start) = gp_solve(kp, s, &start, gp_bound, &cfg.solver)?;

    if s.iter().all(|v| *v == 0.0) {
        let dist = Distribution::from_vec(nx, ny, f.as_slice())?;
        return Ok(UpenResult {
            distribution: dist,
            lambda: RegularizationField::constant(nx, ny, 0.0)?,
            history: Vec::new(),
            termination: UpenTermination::ZeroData,
            warm_start,
        });
    }

    let mut history = Vec::new();
    let mut res_norm = warm_start.residual_norm;
    let mut lambda = RegularizationField::constant(nx, ny, 0.0)?;
    let mut termination = UpenTermination::MaxIterations;

    for k in 0..cfg.kmax_upen {
        let wrap = |e: Error| Error::Iteration {
            iteration: k,
            source: Box::new(e),
        };
        let dist = Distribution::from_vec(nx, ny, f.as_slice()).map_err(wrap)?;
        lambda = update_lambda_relaxed(&dist, res_norm, cfg).map_err(wrap)?;
        observer(&UpenStep {
            iteration: k,
            iterate: &dist,
            residual_norm: res_norm,
            lambda: &lambda,
        });

        let obj = QuadraticObjective::new(kp, s, lambda.to_vec(), bound).map_err(wrap)?;
        let (next, inner) = match cfg.mode {
            ConstraintMode::Unconstrained => unconstrained_solve(&obj, &f, &cfg.solver),
            _ => npcg_solve(&obj, &f, &cfg.solver),
        }
        .map_err(wrap)?;

        let f_norm = f.norm();
        let change = (&next - &f).norm();
        let relative_change = if f_norm > 0.0 { change / f_norm } else { change };
        res_norm = inner.residual_norm;
        history.push(UpenIteration {
            residual_norm: res_norm,
            relative_change,
            inner,
        });
        f = next;
        if relative_change < cfg.tol_upen {
            termination = UpenTermination::Converged;
            break;
        }
    }

    Ok(UpenResult {
        distribution: Distribution::from_vec(nx, ny, f.as_slice())?,
        lambda,
        history,
        termination,
        warm_start,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{forward_model, add_noise, make_phantom, AcquisitionGrid, PhantomKind, RelaxationGrid};
    use crate::upen::{uniform_penalty_check, PenaltyRule};

    fn small_problem(delta: f64) -> (KernelPair, Vec<f64>, Distribution) {
        let grid = AcquisitionGrid::default_ir_cpmg(24, 24).unwrap();
        let relax = RelaxationGrid::log_spaced(12, 12).unwrap();
        let kp = KernelPair::from_grids(&grid, &relax);
        let truth = make_phantom(PhantomKind::TwoPeaks, &relax);
        let clean = forward_model(&kp, &truth).unwrap();
        let sig = add_noise(&clean, delta, 11).unwrap();
        (kp, sig.as_slice().to_vec(), truth)
    }

    #[test]
    fn zero_data_short_circuits() {
        let (kp, s, _) = small_problem(1e-2);
        let zeros = vec![0.0; s.len()];
        let out = upen_run(&kp, &zeros, &UpenConfig::default()).unwrap();
        assert_eq!(out.termination, UpenTermination::ZeroData);
        assert!(out.distribution.as_slice().iter().all(|v| *v == 0.0));
        assert_eq!(out.iterations(), 0);
    }

    #[test]
    fn emitted_fields_satisfy_relaxed_identity() {
        let (kp, s, _) = small_problem(1e-2);
        let cfg = UpenConfig::default();
        let mut worst: f64 = 0.0;
        let mut seen = 0;
        let out = upen_run_observed(&kp, &s, &cfg, |step| {
            let check = uniform_penalty_check(
                step.iterate,
                step.lambda,
                step.residual_norm,
                &cfg,
                PenaltyRule::Relaxed,
            )
            .unwrap();
            worst = worst.max(check.max_deviation);
            seen += 1;
        })
        .unwrap();
        assert_eq!(seen, out.iterations());
        assert!(worst <= 1e-10);
        assert!(out.distribution.min() >= 0.0);
        let res = QuadraticObjective::tikhonov(&kp, &s, 0.0, 0.0)
            .unwrap()
            .residual_norm(out.distribution.as_slice())
            .unwrap();
        assert!((res - out.residual_norm()).abs() <= 1e-12 * res.max(1.0));
    }

    #[test]
    fn runs_are_deterministic() {
        let (kp, s, _) = small_problem(1e-2);
        let cfg = UpenConfig::default();
        let a = upen_run(&kp, &s, &cfg).unwrap();
        let b = upen_run(&kp, &s, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.distribution, b.distribution);
    }

    #[test]
    fn lower_bound_mode_is_feasible() {
        let (kp, s, _) = small_problem(1e-2);
        let cfg = UpenConfig {
            rho: 0.01,
            mode: ConstraintMode::LowerBound,
            kmax_upen: 5,
            ..UpenConfig::default()
        };
        let out = upen_run(&kp, &s, &cfg).unwrap();
        assert!(out.distribution.min() >= 0.01);
    }

    #[test]
    fn rejects_mismatched_data() {
        let (kp, s, _) = small_problem(1e-2);
        assert!(upen_run(&kp, &s[1..], &UpenConfig::default()).is_err());
    }
}
