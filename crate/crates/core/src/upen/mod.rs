//! Locally adapted multi-parameter Tikhonov regularization.
//!
//! The outer iteration alternates between choosing one regularization
//! parameter per map point from the current iterate (so that every penalty
//! term carries roughly the same weight) and re-solving the bound-constrained
//! penalized least-squares problem with Newton-Projection. The scalar
//! Tikhonov baseline and small dense diagnostics live here as well.

mod lambda;
mod lemmas;
mod run;
mod tikhonov;

pub use lambda::{
    uniform_penalty_check, update_lambda_relaxed, update_lambda_strict, PenaltyCheck, PenaltyRule,
};
pub use lemmas::{lemma1_objective_check, lemma2_operator_apply, Lemma1Report};
pub use run::{upen_run, upen_run_observed, UpenIteration, UpenResult, UpenStep, UpenTermination};
pub use tikhonov::{
    default_alpha_grid, miller_alpha, optimal_alpha_search, tikhonov_solve, tikhonov_solve_from,
    AlphaSearch, MillerBounds,
};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::solvers::SolverConfig;

/// One regularization parameter per map point, `N_x x N_y`, column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizationField {
    values: DMatrix<f64>,
}

impl RegularizationField {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter {
                name: "regularization field",
                reason: "entries must be finite and nonnegative".into(),
            });
        }
        Ok(Self { values })
    }

    pub fn constant(nx: usize, ny: usize, alpha: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(nx, ny, alpha))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.values.as_slice().to_vec()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn min(&self) -> f64 {
        self.values.min()
    }

    pub fn max(&self) -> f64 {
        self.values.max()
    }
}

/// Feasible set of the inner problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintMode {
    /// `f >= 0`.
    NonNegative,
    /// `f >= rho` with `rho` from the config.
    LowerBound,
    /// No constraint; inner problems are solved by plain CG.
    Unconstrained,
}

impl std::str::FromStr for ConstraintMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nonneg" => Ok(Self::NonNegative),
            "bound" => Ok(Self::LowerBound),
            "unconstrained" => Ok(Self::Unconstrained),
            other => Err(Error::InvalidParameter {
                name: "constraint mode",
                reason: format!("`{other}` (expected nonneg, bound or unconstrained)"),
            }),
        }
    }
}

/// Named tolerance/coefficient profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Simulated data at noise levels around 1e-2 .. 1e-1.
    Simulated,
    /// Simulated data at noise levels of 1e-3 and below.
    LowNoise,
    /// Measured IR-CPMG data.
    Measured,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sim" => Ok(Self::Simulated),
            "lownoise" => Ok(Self::LowNoise),
            "real" => Ok(Self::Measured),
            other => Err(Error::InvalidParameter {
                name: "preset",
                reason: format!("`{other}` (expected sim, lownoise or real)"),
            }),
        }
    }
}

impl Preset {
    /// The simulated-data preset matching a known noise level.
    pub fn for_noise_level(delta: f64) -> Self {
        if delta <= 1e-3 {
            Self::LowNoise
        } else {
            Self::Simulated
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpenConfig {
    /// Compliance floor.
    pub beta0: f64,
    /// Weight of the squared gradient magnitude.
    pub beta_p: f64,
    /// Weight of the squared curvature.
    pub beta_c: f64,
    pub tol_upen: f64,
    pub kmax_upen: usize,
    pub solver: SolverConfig,
    pub rho: f64,
    pub mode: ConstraintMode,
    /// Sentinel scale for zero-curvature points in the strict rule.
    pub gamma: f64,
}

impl UpenConfig {
    pub fn preset(preset: Preset) -> Self {
        let base = Self {
            beta0: 1e-6,
            beta_p: 1.0,
            beta_c: 1.0,
            tol_upen: 1e-3,
            kmax_upen: 500,
            solver: SolverConfig::simulated(),
            rho: 0.0,
            mode: ConstraintMode::NonNegative,
            gamma: 1.0,
        };
        match preset {
            Preset::Simulated => base,
            Preset::LowNoise => Self {
                solver: SolverConfig::low_noise(),
                ..base
            },
            Preset::Measured => Self {
                beta0: 5e-7,
                beta_p: 5e-2,
                beta_c: 2e-2,
                solver: SolverConfig::measured(),
                ..base
            },
        }
    }

    /// Lower bound actually enforced by the inner solver.
    pub fn effective_bound(&self) -> f64 {
        match self.mode {
            ConstraintMode::NonNegative => 0.0,
            ConstraintMode::LowerBound => self.rho,
            ConstraintMode::Unconstrained => f64::NEG_INFINITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: String| Err(Error::InvalidParameter { name, reason });
        if !(self.beta0 > 0.0) || !self.beta0.is_finite() {
            return bad("beta0", format!("must be positive, got {}", self.beta0));
        }
        if !(self.beta_p >= 0.0) || !(self.beta_c >= 0.0) {
            return bad("beta", format!("betap={} betac={}", self.beta_p, self.beta_c));
        }
        if !(self.tol_upen > 0.0 && self.tol_upen < 1.0) {
            return bad("tol_upen", format!("must lie in (0, 1), got {}", self.tol_upen));
        }
        if self.kmax_upen == 0 {
            return bad("kmax_upen", "must be at least 1".into());
        }
        if !self.rho.is_finite() {
            return bad("rho", format!("{}", self.rho));
        }
        if !(self.gamma > 0.0) {
            return bad("gamma", format!("must be positive, got {}", self.gamma));
        }
        self.solver.validate()
    }
}

impl Default for UpenConfig {
    fn default() -> Self {
        Self::preset(Preset::Simulated)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let sim = UpenConfig::preset(Preset::Simulated);
        assert_eq!((sim.beta0, sim.beta_p, sim.beta_c), (1e-6, 1.0, 1.0));
        assert_eq!((sim.tol_upen, sim.kmax_upen), (1e-3, 500));
        let low = UpenConfig::preset(Preset::LowNoise);
        assert_eq!(
            (low.solver.tol_gp, low.solver.tol_np, low.solver.tol_cg),
            (1e-3, 1e-8, 1e-4)
        );
        let real = UpenConfig::preset(Preset::Measured);
        assert_eq!((real.beta0, real.beta_p, real.beta_c), (5e-7, 5e-2, 2e-2));
        assert_eq!(Preset::for_noise_level(1e-3), Preset::LowNoise);
        assert_eq!(Preset::for_noise_level(1e-2), Preset::Simulated);
        for p in [sim, low, real] {
            assert!(p.validate().is_ok());
        }
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = UpenConfig::default();
        cfg.beta0 = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = UpenConfig::default();
        cfg.beta_c = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = UpenConfig::default();
        cfg.tol_upen = 1.0;
        assert!(cfg.validate().is_err());
        assert!("box".parse::<ConstraintMode>().is_err());
        assert_eq!("bound".parse::<ConstraintMode>().unwrap(), ConstraintMode::LowerBound);
        assert!("fast".parse::<Preset>().is_err());
    }

    #[test]
    fn effective_bounds() {
        let mut cfg = UpenConfig {
            rho: 0.25,
            ..UpenConfig::default()
        };
        assert_eq!(cfg.effective_bound(), 0.0);
        cfg.mode = ConstraintMode::LowerBound;
        assert_eq!(cfg.effective_bound(), 0.25);
        cfg.mode = ConstraintMode::Unconstrained;
        assert_eq!(cfg.effective_bound(), f64::NEG_INFINITY);
    }
}
