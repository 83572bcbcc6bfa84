use nalgebra::DMatrix;

use super::{RegularizationField, UpenConfig};
use crate::error::{Error, Result};
use crate::model::Distribution;
use crate::operators::{
    curvature_map, gradient_magnitude_map, neighborhood_max_sq_field, LaplacianOp,
    ZERO_CURVATURE_SQ,
};

/// Strict rule: `lambda_i = res^2 / (N0 (L f)_i^2)` on the `N0` points with
/// nonzero curvature and `gamma * res^2` elsewhere.
pub fn update_lambda_strict(
    dist: &Distribution,
    res_norm: f64,
    gamma: f64,
) -> Result<RegularizationField> {
    if !(res_norm > 0.0) || !res_norm.is_finite() {
        return Err(Error::InvalidParameter {
            name: "residual norm",
            reason: format!("must be positive, got {res_norm}"),
        });
    }
    let (nx, ny) = dist.shape();
    let lf = LaplacianOp::new(nx, ny).apply(dist.as_slice())?;
    let n0 = lf.iter().filter(|c| *c * *c > ZERO_CURVATURE_SQ).count();
    if n0 == 0 {
        return Err(Error::DegenerateField);
    }
    let res_sq = res_norm * res_norm;
    let values = lf
        .iter()
        .map(|c| {
            let sq = c * c;
            if sq > ZERO_CURVATURE_SQ {
                res_sq / (n0 as f64 * sq)
            } else {
                gamma * res_sq
            }
        })
        .collect();
    RegularizationField::new(DMatrix::from_vec(nx, ny, values))
}

/// Per-point denominator `beta0 + betap max_I p^2 + betac max_I c^2` over
/// the clipped 3x3 windows.
fn relaxed_denominator(dist: &Distribution, cfg: &UpenConfig) -> Result<DMatrix<f64>> {
    let (nx, ny) = dist.shape();
    let p = gradient_magnitude_map(dist);
    let c = curvature_map(&LaplacianOp::new(nx, ny), dist)?;
    let max_p = neighborhood_max_sq_field(&p.0);
    let max_c = neighborhood_max_sq_field(&c.0);
    Ok(max_p.zip_map(&max_c, |mp, mc| {
        cfg.beta0 + cfg.beta_p * mp + cfg.beta_c * mc
    }))
}

/// Relaxed rule:
/// `lambda_i = res^2 / (N (beta0 + betap max_I p^2 + betac max_I c^2))`.
pub fn update_lambda_relaxed(
    dist: &Distribution,
    res_norm: f64,
    cfg: &UpenConfig,
) -> Result<RegularizationField> {
    if !(res_norm >= 0.0) || !res_norm.is_finite() {
        return Err(Error::InvalidParameter {
            name: "residual norm",
            reason: format!("must be nonnegative, got {res_norm}"),
        });
    }
    if !(cfg.beta0 > 0.0) {
        return Err(Error::InvalidParameter {
            name: "beta0",
            reason: format!("must be positive, got {}", cfg.beta0),
        });
    }
    let n = dist.len() as f64;
    let res_sq = res_norm * res_norm;
    let denom = relaxed_denominator(dist, cfg)?;
    RegularizationField::new(denom.map(|d| res_sq / (n * d)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltyRule {
    Strict,
    Relaxed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyCheck {
    /// Largest relative deviation from the rule's identity.
    pub max_deviation: f64,
    /// Number of points the identity was checked on.
    pub checked: usize,
}

/// Checks that `lambda` satisfies the uniform-penalty identity of `rule` at
/// `dist`.
///
/// Relaxed: `lambda_i N (beta0 + betap max p^2 + betac max c^2) = res^2` at
/// every point. Strict: `lambda_i (L f)_i^2` equal across nonzero-curvature
/// points; the deviation is `(max - min) / max` of those terms.
pub fn uniform_penalty_check(
    dist: &Distribution,
    lambda: &RegularizationField,
    res_norm: f64,
    cfg: &UpenConfig,
    rule: PenaltyRule,
) -> Result<PenaltyCheck> {
    if lambda.shape() != dist.shape() {
        return Err(Error::DimensionMismatch {
            what: "regularization field",
            expected: dist.len(),
            found: lambda.as_slice().len(),
        });
    }
    match rule {
        PenaltyRule::Relaxed => {
            let n = dist.len() as f64;
            let res_sq = res_norm * res_norm;
            let denom = relaxed_denominator(dist, cfg)?;
            let max_deviation = lambda
                .as_slice()
                .iter()
                .zip(denom.iter())
                .map(|(l, d)| {
                    let lhs = l * n * d;
                    if res_sq == 0.0 {
                        lhs.abs()
                    } else {
                        (lhs - res_sq).abs() / res_sq
                    }
                })
                .fold(0.0, f64::max);
            Ok(PenaltyCheck {
                max_deviation,
                checked: dist.len(),
            })
        }
        PenaltyRule::Strict => {
            let (nx, ny) = dist.shape();
            let lf = LaplacianOp::new(nx, ny).apply(dist.as_slice())?;
            let terms: Vec<f64> = lf
                .iter()
                .zip(lambda.as_slice())
                .filter(|(c, _)| *c * *c > ZERO_CURVATURE_SQ)
                .map(|(c, l)| l * c * c)
                .collect();
            let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = terms.iter().copied().fold(f64::INFINITY, f64::min);
            let max_deviation = if terms.is_empty() || max == 0.0 {
                0.0
            } else {
                (max - min) / max
            };
            Ok(PenaltyCheck {
                max_deviation,
                checked: terms.len(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dist(nx: usize, ny: usize, seed: u64) -> Distribution {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Distribution::new(DMatrix::from_fn(nx, ny, |_, _| rng.gen_range(0.0..1.0))).unwrap()
    }

    #[test]
    fn strict_rule_with_uniform_curvature() {
        // 2x2 checkerboard: each point has two neighbors of the opposite value
        let dist = Distribution::from_vec(2, 2, &[1.0, 0.0, 0.0, 1.0]).unwrap();
        let lf = LaplacianOp::new(2, 2).apply(dist.as_slice()).unwrap();
        assert!(lf.iter().all(|c| c.abs() == 2.0));
        let res = 0.3;
        let field = update_lambda_strict(&dist, res, 1.0).unwrap();
        let expected = res * res / (4.0 * 4.0);
        for v in field.as_slice() {
            assert!((v - expected).abs() < 1e-16);
        }
    }

    #[test]
    fn strict_rule_penalty_terms_are_uniform() {
        let dist = random_dist(6, 6, 1);
        let res = 0.05;
        let field = update_lambda_strict(&dist, res, 1.0).unwrap();
        let lf = LaplacianOp::new(6, 6).apply(dist.as_slice()).unwrap();
        let n0 = lf.iter().filter(|c| *c * *c > ZERO_CURVATURE_SQ).count() as f64;
        for (l, c) in field.as_slice().iter().zip(&lf) {
            if c * c > ZERO_CURVATURE_SQ {
                let direct = res * res / (n0 * c * c);
                assert!((l - direct).abs() <= 1e-14 * direct);
                assert!((l * c * c - res * res / n0).abs() <= 1e-12 * res * res / n0);
            }
        }
        let check = uniform_penalty_check(
            &dist,
            &field,
            res,
            &UpenConfig::default(),
            PenaltyRule::Strict,
        )
        .unwrap();
        assert!(check.max_deviation <= 1e-10);
    }

    #[test]
    fn strict_rule_sentinel_and_degenerate() {
        let mut m = DMatrix::zeros(5, 5);
        m[(2, 2)] = 1.0;
        let dist = Distribution::new(m).unwrap();
        let field = update_lambda_strict(&dist, 0.1, 3.0).unwrap();
        // corner is far from the spike: zero curvature
        assert!((field.matrix()[(0, 0)] - 3.0 * 0.01).abs() < 1e-16);
        assert!((field.matrix()[(2, 2)] - 0.01 / (5.0 * 16.0)).abs() < 1e-16);
        let flat = Distribution::new(DMatrix::from_element(3, 3, 0.7)).unwrap();
        assert!(matches!(
            update_lambda_strict(&flat, 0.1, 1.0),
            Err(Error::DegenerateField)
        ));
        assert!(update_lambda_strict(&dist, 0.0, 1.0).is_err());
    }

    #[test]
    fn relaxed_rule_on_constant_field() {
        let dist = Distribution::new(DMatrix::from_element(4, 5, 2.5)).unwrap();
        let cfg = UpenConfig::default();
        let res = 0.02;
        let field = update_lambda_relaxed(&dist, res, &cfg).unwrap();
        let expected = res * res / (20.0 * cfg.beta0);
        for v in field.as_slice() {
            assert!((v - expected).abs() <= 1e-14 * expected);
        }
    }

    #[test]
    fn relaxed_rule_matches_brute_force_windows() {
        let dist = random_dist(5, 5, 2);
        let cfg = UpenConfig {
            beta0: 1e-3,
            beta_p: 0.7,
            beta_c: 0.2,
            ..UpenConfig::default()
        };
        let res = 0.4;
        let field = update_lambda_relaxed(&dist, res, &cfg).unwrap();
        let m = dist.matrix();
        let at = |j: i64, k: i64| m[(j.clamp(0, 4) as usize, k.clamp(0, 4) as usize)];
        let p = |j: i64, k: i64| {
            let dx = if j < 4 { at(j + 1, k) - at(j, k) } else { 0.0 };
            let dy = if k < 4 { at(j, k + 1) - at(j, k) } else { 0.0 };
            (dx * dx + dy * dy).sqrt()
        };
        let c = |j: i64, k: i64| {
            4.0 * at(j, k) - at(j - 1, k) - at(j + 1, k) - at(j, k - 1) - at(j, k + 1)
        };
        for j in 0..5i64 {
            for k in 0..5i64 {
                let (mut mp, mut mc) = (0.0f64, 0.0f64);
                for jj in (j - 1).max(0)..=(j + 1).min(4) {
                    for kk in (k - 1).max(0)..=(k + 1).min(4) {
                        mp = mp.max(p(jj, kk).powi(2));
                        mc = mc.max(c(jj, kk).powi(2));
                    }
                }
                let expected = res * res / (25.0 * (cfg.beta0 + cfg.beta_p * mp + cfg.beta_c * mc));
                let got = field.matrix()[(j as usize, k as usize)];
                assert!((got - expected).abs() <= 1e-13 * expected);
            }
        }
        let check = uniform_penalty_check(&dist, &field, res, &cfg, PenaltyRule::Relaxed).unwrap();
        assert!(check.max_deviation <= 1e-10);
    }

    #[test]
    fn perturbed_field_is_detected() {
        let dist = random_dist(4, 4, 3);
        let cfg = UpenConfig::default();
        let field = update_lambda_relaxed(&dist, 0.1, &cfg).unwrap();
        let mut m = field.matrix().clone();
        m[(1, 2)] *= 1.01;
        let perturbed = RegularizationField::new(m).unwrap();
        let check =
            uniform_penalty_check(&dist, &perturbed, 0.1, &cfg, PenaltyRule::Relaxed).unwrap();
        assert!(check.max_deviation > 1e-3);
        let strict = update_lambda_strict(&dist, 0.1, 1.0).unwrap();
        let mut m = strict.matrix().clone();
        m[(0, 0)] *= 2.0;
        let perturbed = RegularizationField::new(m).unwrap();
        let check =
            uniform_penalty_check(&dist, &perturbed, 0.1, &cfg, PenaltyRule::Strict).unwrap();
        assert!(check.max_deviation > 0.1);
    }

    #[test]
    fn default_coefficients_for_simulated_data() {
        let cfg = UpenConfig::default();
        assert_eq!(cfg.beta_p, 1.0);
        assert_eq!(cfg.beta_c, 1.0);
        assert_eq!(cfg.beta0, 1e-6);
        let field = update_lambda_relaxed(&random_dist(6, 6, 4), 1e-2, &cfg).unwrap();
        assert!(field.as_slice().iter().all(|v| *v > 0.0 && v.is_finite()));
    }
}
