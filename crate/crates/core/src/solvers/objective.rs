use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::KernelPair;
use crate::operators::LaplacianOp;

/// `Q(f) = ||K f - s||^2 + sum_i lambda_i (L f)_i^2` on the feasible set
/// `f >= rho`.
#[derive(Debug, Clone)]
pub struct QuadraticObjective<'a> {
    kp: &'a KernelPair,
    s: &'a [f64],
    kts: DVector<f64>,
    lambda: Vec<f64>,
    lap: LaplacianOp,
    rho: f64,
}

impl<'a> QuadraticObjective<'a> {
    pub fn new(kp: &'a KernelPair, s: &'a [f64], lambda: Vec<f64>, rho: f64) -> Result<Self> {
        let (nx, ny) = kp.map_shape();
        if lambda.len() != nx * ny {
            return Err(Error::DimensionMismatch {
                what: "regularization field",
                expected: nx * ny,
                found: lambda.len(),
            });
        }
        if lambda.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::InvalidParameter {
                name: "regularization field",
                reason: "entries must be finite and nonnegative".into(),
            });
        }
        if rho.is_nan() || rho == f64::INFINITY {
            return Err(Error::InvalidParameter {
                name: "lower bound",
                reason: format!("{rho}"),
            });
        }
        let kts = kp.rmatvec(s)?;
        Ok(Self {
            kp,
            s,
            kts,
            lambda,
            lap: LaplacianOp::new(nx, ny),
            rho,
        })
    }

    /// Constant field `lambda_i = alpha`.
    pub fn tikhonov(kp: &'a KernelPair, s: &'a [f64], alpha: f64, rho: f64) -> Result<Self> {
        Self::new(kp, s, vec![alpha; kp.map_len()], rho)
    }

    pub fn kernels(&self) -> &KernelPair {
        self.kp
    }

    pub fn data(&self) -> &[f64] {
        self.s
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn laplacian(&self) -> &LaplacianOp {
        &self.lap
    }

    pub fn lower_bound(&self) -> f64 {
        self.rho
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.len() {
            return Err(Error::DimensionMismatch {
                what: "distribution",
                expected: self.len(),
                found: v.len(),
            });
        }
        Ok(())
    }

    /// `K f - s`.
    pub fn residual(&self, f: &[f64]) -> Result<DVector<f64>> {
        let mut r = self.kp.matvec(f)?;
        r.iter_mut().zip(self.s).for_each(|(r, s)| *r -= s);
        Ok(r)
    }

    pub fn residual_norm(&self, f: &[f64]) -> Result<f64> {
        Ok(self.residual(f)?.norm())
    }

    pub fn penalty(&self, f: &[f64]) -> Result<f64> {
        let lf = self.lap.apply(f)?;
        Ok(lf.iter().zip(&self.lambda).map(|(c, l)| l * c * c).sum())
    }

    pub fn value(&self, f: &[f64]) -> Result<f64> {
        self.check(f)?;
        Ok(self.residual(f)?.norm_squared() + self.penalty(f)?)
    }

    /// `2 (K^T K f - K^T s) + 2 L^T (lambda .* L f)`.
    pub fn gradient(&self, f: &[f64]) -> Result<DVector<f64>> {
        self.check(f)?;
        let mut g = self.kp.gram_matvec(f)?;
        g -= &self.kts;
        let reg = self.weighted_penalty_grad(f)?;
        g.iter_mut().zip(&reg).for_each(|(g, r)| *g = 2.0 * (*g + r));
        Ok(g)
    }

    /// `2 K^T K v + 2 L^T (lambda .* L v)`; `Q` is quadratic, so this does
    /// not depend on the expansion point.
    pub fn hessian_vector(&self, v: &[f64]) -> Result<DVector<f64>> {
        self.check(v)?;
        let mut h = self.kp.gram_matvec(v)?;
        let reg = self.weighted_penalty_grad(v)?;
        h.iter_mut().zip(&reg).for_each(|(h, r)| *h = 2.0 * (*h + r));
        Ok(h)
    }

    fn weighted_penalty_grad(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut lv = self.lap.apply(v)?;
        lv.iter_mut().zip(&self.lambda).for_each(|(c, l)| *c *= l);
        self.lap.adjoint_apply(&lv)
    }
}
