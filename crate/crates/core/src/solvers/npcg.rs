use nalgebra::DVector;

use super::{cg_solve, project_lower_bound, ArmijoParams, QuadraticObjective, SolverConfig};
use super::{SolverReport, Termination};
use crate::error::{Error, Result};

/// Indices held at the lower bound for one Newton-Projection step.
///
/// `i` is active when `rho <= f_i <= rho + epsilon` and `(grad Q)_i > 0`, with
/// `epsilon = min(eps_bar, ||f - [f - grad Q]^+||)`. The diagonal mask `E`
/// keeps the inactive indices and `F = I - E` the active ones.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSet {
    mask: Vec<bool>,
    pub epsilon: f64,
    pub eps_bar: f64,
}

impl ActiveSet {
    /// An explicit mask, bypassing detection.
    pub fn from_mask(mask: Vec<bool>) -> Self {
        Self {
            mask,
            epsilon: 0.0,
            eps_bar: 0.0,
        }
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.mask[i]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&i| self.mask[i]).collect()
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|a| **a).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Applies `E` in place (zeroes active entries).
    pub fn restrict_inactive(&self, v: &mut DVector<f64>) {
        v.iter_mut()
            .zip(&self.mask)
            .filter(|(_, a)| **a)
            .for_each(|(x, _)| *x = 0.0);
    }
}

/// Projected-gradient norm `||f - [f - g]^+||`.
fn projected_gradient_norm(f: &DVector<f64>, g: &DVector<f64>, rho: f64) -> f64 {
    f.iter()
        .zip(g.iter())
        .map(|(f, g)| {
            let d = f - (f - g).max(rho);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

pub fn active_set_detect(f: &DVector<f64>, grad: &DVector<f64>, rho: f64, eps_bar: f64) -> ActiveSet {
    let epsilon = eps_bar.min(projected_gradient_norm(f, grad, rho));
    let mask = f
        .iter()
        .zip(grad.iter())
        .map(|(f, g)| *f >= rho && *f <= rho + epsilon && *g > 0.0)
        .collect();
    ActiveSet {
        mask,
        epsilon,
        eps_bar,
    }
}

fn default_eps_bar(f: &DVector<f64>) -> f64 {
    1e-8 * f.amax().max(1.0)
}

/// Solves `(E H E + F) d = -g`: active entries take `d_i = -g_i`, the
/// inactive block is solved by CG from zero. Returns `(d, cg iterations)`.
pub fn newton_direction(
    obj: &QuadraticObjective<'_>,
    grad: &DVector<f64>,
    active: &ActiveSet,
    tol: f64,
    maxit: usize,
) -> Result<(DVector<f64>, usize)> {
    let mut b = -grad;
    active.restrict_inactive(&mut b);
    let mut failure = None;
    let out = cg_solve(
        |v| match obj.hessian_vector(v.as_slice()) {
            Ok(mut hv) => {
                active.restrict_inactive(&mut hv);
                hv
            }
            Err(e) => {
                failure.get_or_insert(e);
                DVector::zeros(v.len())
            }
        },
        &b,
        tol,
        maxit,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let mut d = out.x;
    for i in active.indices() {
        d[i] = -grad[i];
    }
    Ok((d, out.iterations))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmijoStep {
    pub step: f64,
    pub point: DVector<f64>,
    pub value: f64,
}

/// Backtracks `alpha = s0 * beta^t` until
/// `Q(f) - Q(P[f + alpha d]) >= sigma * (-alpha sum_{i not in A} g_i d_i
///  + sum_{i in A} g_i (f_i - P[f + alpha d]_i))`.
///
/// Returns `None` when no step passes within `max_backtracks` reductions.
#[allow(clippy::too_many_arguments)]
pub fn armijo_projection_arc(
    obj: &QuadraticObjective<'_>,
    f: &DVector<f64>,
    value: f64,
    grad: &DVector<f64>,
    d: &DVector<f64>,
    active: &ActiveSet,
    params: &ArmijoParams,
) -> Result<Option<ArmijoStep>> {
    let rho = obj.lower_bound();
    let inactive_slope: f64 = (0..f.len())
        .filter(|&i| !active.is_active(i))
        .map(|i| grad[i] * d[i])
        .sum();
    let mut step = params.initial_step;
    for _ in 0..=params.max_backtracks {
        let trial = project_lower_bound(&(f + d * step), rho);
        let trial_value = obj.value(trial.as_slice())?;
        if !trial_value.is_finite() {
            return Err(Error::NonFiniteObjective);
        }
        let active_term: f64 = active
            .indices()
            .into_iter()
            .map(|i| grad[i] * (f[i] - trial[i]))
            .sum();
        let required = params.sigma * (-step * inactive_slope + active_term);
        if value - trial_value >= required {
            return Ok(Some(ArmijoStep {
                step,
                point: trial,
                value: trial_value,
            }));
        }
        step *= params.backtrack;
    }
    Ok(None)
}

fn check_feasible(f: &DVector<f64>, rho: f64) -> Result<()> {
    if let Some((index, value)) = f.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "starting point",
            reason: format!("non-finite entry {value} at {index}"),
        });
    }
    match f.iter().enumerate().find(|(_, v)| **v < rho) {
        Some((index, value)) => Err(Error::Infeasible {
            index,
            value: *value,
            bound: rho,
        }),
        None => Ok(()),
    }
}

/// Newton-Projection with inexact CG inner solves for `min Q(f), f >= rho`.
///
/// Stops when `|Q_prev - Q| / Q < tol_np` after a step, when the projected
/// gradient vanishes, when no Armijo step exists, or at the iteration cap.
pub fn npcg_solve(
    obj: &QuadraticObjective<'_>,
    f0: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<(DVector<f64>, SolverReport)> {
    let rho = obj.lower_bound();
    check_feasible(f0, rho)?;
    let n = obj.len();
    let max_np = cfg.max_np_iter.unwrap_or(n);
    let max_cg = cfg.max_cg_iter.unwrap_or(n);

    let mut f = f0.clone();
    let mut value = obj.value(f.as_slice())?;
    if !value.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    let mut history = vec![value];
    let mut cg_total = 0;
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;

    while iterations < max_np {
        let grad = obj.gradient(f.as_slice())?;
        if projected_gradient_norm(&f, &grad, rho) == 0.0 {
            termination = Termination::Stationary;
            break;
        }
        let eps_bar = cfg.eps_bar.unwrap_or_else(|| default_eps_bar(&f));
        let active = active_set_detect(&f, &grad, rho, eps_bar);
        let (d, cg_its) = newton_direction(obj, &grad, &active, cfg.tol_cg, max_cg)?;
        cg_total += cg_its;
        let Some(step) = armijo_projection_arc(obj, &f, value, &grad, &d, &active, &cfg.armijo)?
        else {
            termination = Termination::LineSearchFailed;
            break;
        };
        iterations += 1;
        let decrease = value - step.value;
        f = step.point;
        value = step.value;
        history.push(value);
        if value == 0.0 || decrease.abs() / value < cfg.tol_np {
            termination = Termination::Converged;
            break;
        }
    }

    let residual_norm = obj.residual_norm(f.as_slice())?;
    Ok((
        f,
        SolverReport {
            iterations,
            cg_iterations: cg_total,
            objective: value,
            residual_norm,
            termination,
            objective_history: history,
        },
    ))
}

/// Unconstrained minimizer of `Q` by a single CG solve of `H delta = -g(f0)`.
pub fn unconstrained_solve(
    obj: &QuadraticObjective<'_>,
    f0: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<(DVector<f64>, SolverReport)> {
    let n = obj.len();
    let start = obj.value(f0.as_slice())?;
    let grad = obj.gradient(f0.as_slice())?;
    let active = ActiveSet::from_mask(vec![false; n]);
    let (delta, cg_its) =
        newton_direction(obj, &grad, &active, cfg.tol_cg, cfg.max_cg_iter.unwrap_or(n))?;
    let f = f0 + delta;
    let value = obj.value(f.as_slice())?;
    if !value.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    let residual_norm = obj.residual_norm(f.as_slice())?;
    Ok((
        f,
        SolverReport {
            iterations: 1,
            cg_iterations: cg_its,
            objective: value,
            residual_norm,
            termination: Termination::Converged,
            objective_history: vec![start, value],
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::KernelPair;
    use nalgebra::DMatrix;

    fn tight() -> SolverConfig {
        SolverConfig {
            tol_np: 1e-15,
            tol_cg: 1e-13,
            ..SolverConfig::default()
        }
    }

    /// Well-conditioned 2-variable problem: a 2x2 `K1` paired with a 1x1 `K2`.
    fn two_var() -> KernelPair {
        let k1 = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.2, 2.0]);
        let k2 = DMatrix::from_element(1, 1, 1.0);
        KernelPair::new(k1, k2).unwrap()
    }

    /// Enumerates every active set of `min ||A x - b||^2 + x^T W x, x >= rho`
    /// and returns the best KKT point.
    fn kkt_enumeration(h: &DMatrix<f64>, c: &DVector<f64>, rho: f64) -> DVector<f64> {
        // minimize 0.5 x^T H x - c^T x
        let n = c.len();
        let mut best: Option<(f64, DVector<f64>)> = None;
        for mask in 0u32..(1 << n) {
            let free: Vec<usize> = (0..n).filter(|i| mask & (1 << i) == 0).collect();
            let mut x = DVector::from_element(n, rho);
            if !free.is_empty() {
                let hff = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
                let rhs = DVector::from_fn(free.len(), |a, _| {
                    c[free[a]]
                        - (0..n)
                            .filter(|j| mask & (1 << j) != 0)
                            .map(|j| h[(free[a], j)] * rho)
                            .sum::<f64>()
                });
                let Some(sol) = hff.lu().solve(&rhs) else { continue };
                for (a, &i) in free.iter().enumerate() {
                    x[i] = sol[a];
                }
            }
            let g = h * &x - c;
            let ok = (0..n).all(|i| {
                if mask & (1 << i) == 0 {
                    x[i] >= rho - 1e-12
                } else {
                    g[i] >= -1e-10
                }
            });
            if ok {
                let val = 0.5 * x.dot(&(h * &x)) - c.dot(&x);
                if best.as_ref().is_none_or(|(b, _)| val < *b) {
                    best = Some((val, x));
                }
            }
        }
        best.unwrap().1
    }

    #[test]
    fn two_variable_with_one_active_bound() {
        let kp = two_var();
        // unconstrained solution has x1 < 0
        let s = [1.0, -1.5];
        let obj = QuadraticObjective::tikhonov(&kp, &s, 0.0, 0.0).unwrap();
        let (f, report) = npcg_solve(&obj, &DVector::from_vec(vec![1.0, 1.0]), &tight()).unwrap();
        let k = kp.dense();
        let h = k.transpose() * &k * 2.0;
        let c = k.transpose() * DVector::from_column_slice(&s) * 2.0;
        let oracle = kkt_enumeration(&h, &c, 0.0);
        assert!(oracle.iter().any(|v| *v == 0.0));
        assert!((&f - &oracle).amax() < 1e-6, "{f} vs {oracle}");
        assert!(f.iter().all(|v| *v >= 0.0));
        for w in report.objective_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn interior_minimizer_matches_dense_solve() {
        let kp = two_var();
        let x_true = [0.8, 1.3];
        let s = kp.matvec(&x_true).unwrap();
        let obj = QuadraticObjective::tikhonov(&kp, s.as_slice(), 0.0, 0.0).unwrap();
        let (f, _) = npcg_solve(&obj, &DVector::from_vec(vec![0.0, 0.0]), &tight()).unwrap();
        assert!((f[0] - 0.8).abs() < 1e-6 && (f[1] - 1.3).abs() < 1e-6);
    }

    #[test]
    fn optimal_start_stops_immediately() {
        let kp = two_var();
        let s = kp.matvec(&[0.8, 1.3]).unwrap();
        let obj = QuadraticObjective::tikhonov(&kp, s.as_slice(), 0.1, 0.0).unwrap();
        let (opt, _) = npcg_solve(&obj, &DVector::from_vec(vec![0.0, 0.0]), &tight()).unwrap();
        let (again, report) = npcg_solve(&obj, &opt, &SolverConfig::default()).unwrap();
        assert!(report.iterations <= 1);
        assert!((again - opt).amax() < 1e-10);
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let kp = two_var();
        let obj = QuadraticObjective::tikhonov(&kp, &[1.0, 1.0], 0.0, 0.0).unwrap();
        let err = npcg_solve(&obj, &DVector::from_vec(vec![-0.1, 1.0]), &tight()).unwrap_err();
        assert!(matches!(err, Error::Infeasible { index: 0, .. }));
    }

    #[test]
    fn active_set_definition() {
        let f = DVector::from_vec(vec![0.0, 0.0]);
        let g = DVector::from_vec(vec![1.0, -1.0]);
        let a = active_set_detect(&f, &g, 0.0, 1.0);
        assert_eq!(a.indices(), vec![0]);
        let g = DVector::from_vec(vec![-1.0, -2.0]);
        assert!(active_set_detect(&f, &g, 0.0, 1.0).is_empty());
    }

    #[test]
    fn active_set_matches_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let rho = rng.gen_range(-1.0..1.0);
            let f = DVector::from_fn(10, |_, _| {
                if rng.gen_bool(0.5) {
                    rho + rng.gen_range(0.0..1e-3)
                } else {
                    rho + rng.gen_range(0.0..2.0)
                }
            });
            let g = DVector::from_fn(10, |_, _| rng.gen_range(-1.0..1.0));
            let eps_bar = rng.gen_range(0.0..0.5);
            let a = active_set_detect(&f, &g, rho, eps_bar);
            let pg: f64 = (0..10)
                .map(|i| (f[i] - (f[i] - g[i]).max(rho)).powi(2))
                .sum::<f64>()
                .sqrt();
            let eps = eps_bar.min(pg);
            assert_eq!(a.epsilon, eps);
            for i in 0..10 {
                let expect = f[i] <= rho + eps && g[i] > 0.0;
                assert_eq!(a.is_active(i), expect);
            }
        }
    }

    #[test]
    fn direction_is_negative_gradient_on_active_indices() {
        let kp = two_var();
        let obj = QuadraticObjective::tikhonov(&kp, &[1.0, -1.5], 0.5, 0.0).unwrap();
        let f = DVector::from_vec(vec![0.0, 1.0]);
        let g = obj.gradient(f.as_slice()).unwrap();
        let active = ActiveSet::from_mask(vec![true, false]);
        let (d, _) = newton_direction(&obj, &g, &active, 1e-14, 10).unwrap();
        assert_eq!(d[0], -g[0]);
        // full system residual of (E H E + F) d = -g
        let mut ed = d.clone();
        active.restrict_inactive(&mut ed);
        let mut lhs = obj.hessian_vector(ed.as_slice()).unwrap();
        active.restrict_inactive(&mut lhs);
        lhs[0] += d[0];
        assert!((lhs + &g).amax() < 1e-12);
    }

    #[test]
    fn armijo_accepts_unit_newton_step_on_parabola() {
        let kp = KernelPair::new(DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0))
            .unwrap();
        let obj = QuadraticObjective::tikhonov(&kp, &[2.0], 0.0, f64::NEG_INFINITY).unwrap();
        let f = DVector::from_vec(vec![0.0]);
        let v = obj.value(f.as_slice()).unwrap();
        let g = obj.gradient(f.as_slice()).unwrap();
        // Newton step to the vertex of (x - 2)^2
        let d = DVector::from_vec(vec![2.0]);
        let none = ActiveSet::from_mask(vec![false]);
        let step = armijo_projection_arc(&obj, &f, v, &g, &d, &none, &ArmijoParams::default())
            .unwrap()
            .unwrap();
        assert_eq!(step.step, 1.0);
        assert_eq!(step.value, 0.0);
    }

    #[test]
    fn armijo_zero_direction_and_blocked_direction() {
        let kp = KernelPair::new(DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0))
            .unwrap();
        let obj = QuadraticObjective::tikhonov(&kp, &[-2.0], 0.0, 0.0).unwrap();
        let f = DVector::from_vec(vec![0.0]);
        let v = obj.value(f.as_slice()).unwrap();
        let g = obj.gradient(f.as_slice()).unwrap();
        let none = ActiveSet::from_mask(vec![false]);
        let zero = DVector::zeros(1);
        let step = armijo_projection_arc(&obj, &f, v, &g, &zero, &none, &ArmijoParams::default())
            .unwrap()
            .unwrap();
        assert_eq!(step.value, v);
        assert_eq!(step.point, f);
        // descent direction pointing straight into the bound: no progress possible
        let d = DVector::from_vec(vec![-1.0]);
        let blocked =
            armijo_projection_arc(&obj, &f, v, &g, &d, &none, &ArmijoParams::default()).unwrap();
        assert!(blocked.is_none());
    }

    #[test]
    fn unconstrained_matches_dense() {
        let kp = two_var();
        let s = [1.0, -1.5];
        let obj = QuadraticObjective::tikhonov(&kp, &s, 0.0, f64::NEG_INFINITY).unwrap();
        let (f, _) = unconstrained_solve(&obj, &DVector::zeros(2), &tight()).unwrap();
        let k = kp.dense();
        let exact = k.lu().solve(&DVector::from_column_slice(&s)).unwrap();
        assert!((f - exact).amax() < 1e-8);
    }
}
