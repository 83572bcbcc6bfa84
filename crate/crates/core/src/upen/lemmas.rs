use nalgebra::{DMatrix, DVector};

use super::update_lambda_strict;
use crate::error::{Error, Result};
use crate::model::{Distribution, KernelPair};
use crate::operators::{LaplacianOp, ZERO_CURVATURE_SQ};

/// Terms of the penalized objective under the strict rule at level `eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma1Report {
    pub residual_sq: f64,
    pub penalty: f64,
    pub total: f64,
    pub eps: f64,
    /// Points with nonzero curvature.
    pub n0: usize,
}

impl Lemma1Report {
    /// Relative gap between `total` and `residual^2 + eps^2`.
    pub fn identity_deviation(&self) -> f64 {
        let expected = self.residual_sq + self.eps * self.eps;
        (self.total - expected).abs() / expected
    }

    pub fn residual_within(&self) -> bool {
        self.residual_sq <= self.eps * self.eps
    }

    pub fn total_within(&self) -> bool {
        self.total <= 2.0 * self.eps * self.eps
    }
}

/// Evaluates `||K f - s||^2 + sum lambda_i (L f)_i^2` with the strict field
/// built at level `eps` around `f`. Zero-curvature points contribute nothing
/// regardless of their sentinel value.
pub fn lemma1_objective_check(
    kp: &KernelPair,
    s: &[f64],
    f: &Distribution,
    eps: f64,
    gamma: f64,
) -> Result<Lemma1Report> {
    let lambda = update_lambda_strict(f, eps, gamma)?;
    let (nx, ny) = f.shape();
    let lf = LaplacianOp::new(nx, ny).apply(f.as_slice())?;
    let mut n0 = 0;
    let mut penalty = 0.0;
    for (c, l) in lf.iter().zip(lambda.as_slice()) {
        if c * c > ZERO_CURVATURE_SQ {
            n0 += 1;
            penalty += l * c * c;
        }
    }
    let mut r = kp.matvec(f.as_slice())?;
    if s.len() != r.len() {
        return Err(Error::DimensionMismatch {
            what: "signal",
            expected: r.len(),
            found: s.len(),
        });
    }
    r.iter_mut().zip(s).for_each(|(r, s)| *r -= s);
    let residual_sq = r.norm_squared();
    Ok(Lemma1Report {
        residual_sq,
        penalty,
        total: residual_sq + penalty,
        eps,
        n0,
    })
}

/// `R K f_ref` with `R = (K^T K + L^T D L)^{-1} K^T`, where `D_ii = lambda_i^2`
/// for the strict field at level `eps` on nonzero-curvature points and
/// `gamma eps^2` elsewhere.
///
/// Dense; computed as the least-squares solution of the stacked system
/// `[K; sqrt(D) L] x = [K f_ref; 0]` by QR.
pub fn lemma2_operator_apply(
    kp: &KernelPair,
    f_ref: &Distribution,
    eps: f64,
    gamma: f64,
) -> Result<DVector<f64>> {
    const MAX_DENSE: usize = 256;
    let n = f_ref.len();
    if f_ref.shape() != kp.map_shape() {
        return Err(Error::DimensionMismatch {
            what: "distribution",
            expected: kp.map_len(),
            found: n,
        });
    }
    if n > MAX_DENSE {
        return Err(Error::InvalidParameter {
            name: "problem size",
            reason: format!("dense operator limited to {MAX_DENSE} unknowns, got {n}"),
        });
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter {
            name: "gamma",
            reason: format!("must be positive, got {gamma}"),
        });
    }
    let (nx, ny) = f_ref.shape();
    let lap = LaplacianOp::new(nx, ny);
    let lf = lap.apply(f_ref.as_slice())?;
    let lambda = update_lambda_strict(f_ref, eps, gamma)?;
    let d: Vec<f64> = lf
        .iter()
        .zip(lambda.as_slice())
        .map(|(c, l)| {
            if c * c > ZERO_CURVATURE_SQ {
                l * l
            } else {
                gamma * eps * eps
            }
        })
        .collect();

    let k = kp.dense();
    let m = k.nrows();
    let mut l = lap.dense();
    for (i, di) in d.iter().enumerate() {
        l.row_mut(i).scale_mut(di.sqrt());
    }
    let mut a = DMatrix::zeros(m + n, n);
    a.rows_mut(0, m).copy_from(&k);
    a.rows_mut(m, n).copy_from(&l);
    let mut b = DVector::zeros(m + n);
    b.rows_mut(0, m)
        .copy_from(&(&k * DVector::from_column_slice(f_ref.as_slice())));

    let qr = a.qr();
    let qtb = qr.q().transpose() * b;
    let r = qr.r();
    if r.diagonal().iter().any(|v| *v == 0.0 || !v.is_finite()) {
        return Err(Error::Singular("stacked regularized operator"));
    }
    r.solve_upper_triangular(&qtb)
        .ok_or(Error::Singular("stacked regularized operator"))
}
