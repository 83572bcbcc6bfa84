//! Finite-difference operators on `N_x x N_y` fields stored column-major.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::Distribution;

/// Squared curvature terms at or below this value count as exact zeros.
pub const ZERO_CURVATURE_SQ: f64 = 1e-30;

/// Five-point Laplacian `[+4 center, -1 neighbors]` with replicated
/// (Neumann) boundary values, on unit index spacing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LaplacianOp {
    nx: usize,
    ny: usize,
}

impl LaplacianOp {
    pub fn new(nx: usize, ny: usize) -> Self {
        Self { nx, ny }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self, found: usize) -> Result<()> {
        if found != self.len() {
            return Err(Error::DimensionMismatch {
                what: "field",
                expected: self.len(),
                found,
            });
        }
        Ok(())
    }

    /// Visits the stencil neighbors present in the domain. A replicated ghost
    /// value cancels against the center, so missing neighbors contribute
    /// nothing.
    #[inline]
    fn for_each_neighbor(&self, j: usize, k: usize, mut visit: impl FnMut(usize)) {
        let nx = self.nx;
        if j > 0 {
            visit(j - 1 + nx * k);
        }
        if j + 1 < nx {
            visit(j + 1 + nx * k);
        }
        if k > 0 {
            visit(j + nx * (k - 1));
        }
        if k + 1 < self.ny {
            visit(j + nx * (k + 1));
        }
    }

    /// `out = L f`.
    pub fn apply_into(&self, f: &[f64], out: &mut [f64]) -> Result<()> {
        self.check(f.len())?;
        self.check(out.len())?;
        for k in 0..self.ny {
            for j in 0..self.nx {
                let i = j + self.nx * k;
                let center = f[i];
                let mut acc = 0.0;
                self.for_each_neighbor(j, k, |n| acc += center - f[n]);
                out[i] = acc;
            }
        }
        Ok(())
    }

    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; f.len()];
        self.apply_into(f, &mut out)?;
        Ok(out)
    }

    /// `out = L^T v`, scattering each row of the stencil.
    pub fn adjoint_apply_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        self.check(v.len())?;
        self.check(out.len())?;
        out.iter_mut().for_each(|o| *o = 0.0);
        for k in 0..self.ny {
            for j in 0..self.nx {
                let i = j + self.nx * k;
                let vi = v[i];
                let mut deg = 0.0;
                self.for_each_neighbor(j, k, |n| {
                    deg += 1.0;
                    out[n] -= vi;
                });
                out[i] += deg * vi;
            }
        }
        Ok(())
    }

    pub fn adjoint_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; v.len()];
        self.adjoint_apply_into(v, &mut out)?;
        Ok(out)
    }

    /// Dense `N x N` matrix of the operator, for small oracles.
    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for k in 0..self.ny {
            for j in 0..self.nx {
                let i = j + self.nx * k;
                self.for_each_neighbor(j, k, |nb| {
                    m[(i, i)] += 1.0;
                    m[(i, nb)] -= 1.0;
                });
            }
        }
        m
    }
}

pub fn laplacian_apply(op: &LaplacianOp, f: &[f64]) -> Result<Vec<f64>> {
    op.apply(f)
}

pub fn laplacian_adjoint_apply(op: &LaplacianOp, v: &[f64]) -> Result<Vec<f64>> {
    op.adjoint_apply(v)
}

/// Curvature field `C`: the reshape of `L f`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureField(pub DMatrix<f64>);

impl CurvatureField {
    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}

/// Gradient-magnitude field `P` (nonnegative).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField(pub DMatrix<f64>);

impl GradientField {
    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}

pub fn curvature_map(op: &LaplacianOp, dist: &Distribution) -> Result<CurvatureField> {
    let (nx, ny) = op.shape();
    let c = op.apply(dist.as_slice())?;
    Ok(CurvatureField(DMatrix::from_vec(nx, ny, c)))
}

/// `P = sqrt(Dx^2 + Dy^2)` from forward differences; the difference past the
/// last row or column is zero.
pub fn gradient_magnitude_map(dist: &Distribution) -> GradientField {
    let m = dist.matrix();
    let (nx, ny) = m.shape();
    GradientField(DMatrix::from_fn(nx, ny, |j, k| {
        let dx = if j + 1 < nx { m[(j + 1, k)] - m[(j, k)] } else { 0.0 };
        let dy = if k + 1 < ny { m[(j, k + 1)] - m[(j, k)] } else { 0.0 };
        dx.hypot(dy)
    }))
}

/// Maximum of `field^2` over the 3x3 window centered at linear index `i`,
/// clipped to the domain.
pub fn neighborhood_max_sq(field: &DMatrix<f64>, i: usize) -> Result<f64> {
    let (nx, ny) = field.shape();
    if i >= nx * ny {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: nx * ny,
        });
    }
    let (j, k) = (i % nx, i / nx);
    let mut best: f64 = 0.0;
    for kk in k.saturating_sub(1)..=(k + 1).min(ny - 1) {
        for jj in j.saturating_sub(1)..=(j + 1).min(nx - 1) {
            let v = field[(jj, kk)];
            best = best.max(v * v);
        }
    }
    Ok(best)
}

/// [`neighborhood_max_sq`] evaluated at every point, as a separable
/// running max (rows, then columns).
pub fn neighborhood_max_sq_field(field: &DMatrix<f64>) -> DMatrix<f64> {
    let (nx, ny) = field.shape();
    let sq = field.map(|v| v * v);
    let rows = DMatrix::from_fn(nx, ny, |j, k| {
        let lo = j.saturating_sub(1);
        let hi = (j + 1).min(nx - 1);
        (lo..=hi).map(|jj| sq[(jj, k)]).fold(0.0, f64::max)
    });
    DMatrix::from_fn(nx, ny, |j, k| {
        let lo = k.saturating_sub(1);
        let hi = (k + 1).min(ny - 1);
        (lo..=hi).map(|kk| rows[(j, kk)]).fold(0.0, f64::max)
    })
}
