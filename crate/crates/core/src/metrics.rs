//! Error and residual metrics, plus 1-D sum projections of a map.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{Distribution, KernelPair};

fn diff_norm(f: &[f64], f_true: &[f64]) -> Result<f64> {
    if f.len() != f_true.len() {
        return Err(Error::DimensionMismatch {
            what: "distribution",
            expected: f_true.len(),
            found: f.len(),
        });
    }
    Ok(f.iter()
        .zip(f_true)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `||f - f*|| / ||f*||`.
pub fn relative_error(f: &[f64], f_true: &[f64]) -> Result<f64> {
    let denom = norm(f_true);
    if denom == 0.0 {
        return Err(Error::InvalidParameter {
            name: "true distribution",
            reason: "has zero norm".into(),
        });
    }
    Ok(diff_norm(f, f_true)? / denom)
}

/// `||f - f*|| / sqrt(N)`.
pub fn mse(f: &[f64], f_true: &[f64]) -> Result<f64> {
    Ok(diff_norm(f, f_true)? / (f.len() as f64).sqrt())
}

/// `||K f - s||`.
pub fn residual_norm(kp: &KernelPair, f: &[f64], s: &[f64]) -> Result<f64> {
    if s.len() != kp.data_len() {
        return Err(Error::DimensionMismatch {
            what: "signal",
            expected: kp.data_len(),
            found: s.len(),
        });
    }
    let mut r = kp.matvec(f)?;
    r.iter_mut().zip(s).for_each(|(r, s)| *r -= s);
    Ok(r.norm())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub err: f64,
    pub res: f64,
    pub chi: f64,
    pub n: usize,
}

impl ErrorReport {
    pub fn compute(kp: &KernelPair, f: &[f64], f_true: &[f64], s: &[f64]) -> Result<Self> {
        Ok(Self {
            err: relative_error(f, f_true)?,
            res: residual_norm(kp, f, s)?,
            chi: mse(f, f_true)?,
            n: f.len(),
        })
    }
}

/// Sums over the T2 axis (one value per T1) and over the T1 axis (one value
/// per T2).
pub fn sum_projections(dist: &Distribution) -> (DVector<f64>, DVector<f64>) {
    let m = dist.matrix();
    let along_t1 = DVector::from_iterator(m.nrows(), m.row_iter().map(|r| r.sum()));
    let along_t2 = DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum()));
    (along_t1, along_t2)
}
