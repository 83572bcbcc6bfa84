use nalgebra::DVector;

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub x: DVector<f64>,
    pub iterations: usize,
    /// `||A x - b|| <= tol ||b||` was reached.
    pub converged: bool,
    /// A direction with nonpositive curvature stopped the iteration early.
    pub breakdown: bool,
}

/// Conjugate gradients from `x = 0` on a symmetric positive (semi)definite
/// operator, stopping at relative residual `tol` or after `maxit` steps.
pub fn cg_solve<F>(mut matvec: F, b: &DVector<f64>, tol: f64, maxit: usize) -> CgOutcome
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
{
    let n = b.len();
    let mut x = DVector::zeros(n);
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return CgOutcome {
            x,
            iterations: 0,
            converged: true,
            breakdown: false,
        };
    }
    let target = tol * b_norm;
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = r.norm_squared();
    let mut iterations = 0;
    while iterations < maxit {
        let ap = matvec(&p);
        let curvature = p.dot(&ap);
        if !(curvature > 0.0) {
            return CgOutcome {
                x,
                iterations,
                converged: false,
                breakdown: true,
            };
        }
        let alpha = rr / curvature;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        iterations += 1;
        let rr_next = r.norm_squared();
        if rr_next.sqrt() <= target {
            return CgOutcome {
                x,
                iterations,
                converged: true,
                breakdown: false,
            };
        }
        let beta = rr_next / rr;
        rr = rr_next;
        p.axpy(1.0, &r, beta);
    }
    CgOutcome {
        x,
        iterations,
        converged: false,
        breakdown: false,
    }
}
