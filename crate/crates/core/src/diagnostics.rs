//! Fit-quality and inference utilities: deviance, pseudo-R2, z-tests with a
//! multiple-testing-corrected threshold, and coefficient summary tables.

use crate::error::FitError;
use crate::gwpr::ModelFit;
use crate::scalar::Scalar;

/// Poisson residual deviance `2 sum[y log(y/lambda) - (y - lambda)]`.
///
/// The `y = 0` term uses the limit convention `0 log(0/lambda) = 0`, so a
/// zero count contributes `2 lambda`.
pub fn deviance<F: Scalar>(y: &[F], fitted: &[F]) -> F {
    debug_assert_eq!(y.len(), fitted.len());
    let two = F::from_f(2.0);
    let mut acc = F::zero();
    for (yi, li) in y.iter().zip(fitted) {
        if *yi == F::zero() {
            acc = acc + two * *li;
        } else {
            acc = acc + two * (*yi * (*yi / *li).ln() - (*yi - *li));
        }
    }
    acc
}

/// Deviance of the offset-only intercept Poisson fit.
///
/// The intercept-only ML fit with offsets has the closed form
/// `lambda_i = o_i * sum(y) / sum(o)`.
pub fn null_deviance<F: Scalar>(y: &[F], offset: &[F]) -> F {
    let ysum: F = y.iter().copied().sum();
    let osum: F = offset.iter().copied().sum();
    let rate = ysum / osum;
    let fitted: Vec<F> = offset.iter().map(|o| *o * rate).collect();
    deviance(y, &fitted)
}

/// McFadden pseudo-R2, `1 - D / D0`.
pub fn pseudo_r2<F: Scalar>(deviance: F, null_deviance: F) -> Result<F, FitError> {
    if !(null_deviance > F::zero()) {
        return Err(FitError::DegenerateNull);
    }
    Ok(F::one() - deviance / null_deviance)
}

/// Standard normal CDF via West's double-precision rational approximation
/// (absolute error below 1e-12; no statistical tables involved).
pub fn normal_cdf<F: Scalar>(x: F) -> F {
    let xabs = x.abs();
    let c = |v: f64| F::from_f(v);
    let cum = if xabs > c(37.0) {
        F::zero()
    } else {
        let e = (-xabs * xabs * c(0.5)).exp();
        if xabs < c(7.071067811865475) {
            let mut num = c(3.52624965998911e-2) * xabs + c(0.700383064443688);
            num = num * xabs + c(6.37396220353165);
            num = num * xabs + c(33.912866078383);
            num = num * xabs + c(112.079291497871);
            num = num * xabs + c(221.213596169931);
            num = num * xabs + c(220.206867912376);
            let mut den = c(8.83883476483184e-2) * xabs + c(1.75566716318264);
            den = den * xabs + c(16.064177579207);
            den = den * xabs + c(86.7807322029461);
            den = den * xabs + c(296.564248779674);
            den = den * xabs + c(637.333633378831);
            den = den * xabs + c(793.826512519948);
            den = den * xabs + c(440.413735824752);
            e * num / den
        } else {
            let mut build = xabs + c(0.65);
            build = xabs + c(4.0) / build;
            build = xabs + c(3.0) / build;
            build = xabs + c(2.0) / build;
            build = xabs + F::one() / build;
            e / build / c(2.506628274631)
        }
    };
    if x > F::zero() {
        F::one() - cum
    } else {
        cum
    }
}

/// z statistic and two-sided p-value for one coefficient.
///
/// A zero variance makes the test degenerate: the z value is reported as
/// signed infinity (or 0 when the coefficient is also 0) with p forced to
/// the corresponding limit.
pub fn z_test<F: Scalar>(beta: F, variance: F) -> ZTest<F> {
    let se = variance.max(F::zero()).sqrt();
    if se > F::zero() {
        let z = beta / se;
        let p = F::from_f(2.0) * normal_cdf(-z.abs());
        ZTest {
            z,
            p,
            degenerate: false,
        }
    } else if beta == F::zero() {
        ZTest {
            z: F::zero(),
            p: F::one(),
            degenerate: true,
        }
    } else {
        ZTest {
            z: if beta > F::zero() {
                F::infinity()
            } else {
                F::neg_infinity()
            },
            p: F::zero(),
            degenerate: true,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ZTest<F> {
    pub z: F,
    pub p: F,
    pub degenerate: bool,
}

/// One tested coefficient at one location.
#[derive(Debug, Clone, Copy)]
pub struct SigCell<F> {
    pub z: F,
    pub p: F,
    pub significant: bool,
    pub degenerate: bool,
}

/// z-tests for every location and coefficient of a fit, with an
/// effective-number-of-tests correction of the significance threshold.
#[derive(Debug, Clone)]
pub struct SignificanceTable<F> {
    pub alpha: F,
    /// Threshold actually compared against: `alpha * (k+1) / enp`, floored
    /// at `alpha / n`.
    pub corrected_alpha: F,
    pub enp: F,
    pub method: &'static str,
    /// `cells[i][c]` tests coefficient `c` at location `i`.
    pub cells: Vec<Vec<SigCell<F>>>,
}

pub fn significance<F: Scalar>(fit: &ModelFit<F>, alpha: F) -> SignificanceTable<F> {
    let n = fit.locals.len();
    let p = fit.locals.first().map(|l| l.beta.len()).unwrap_or(0);
    let corrected = (alpha * F::from_usize_(p) / fit.enp).max(alpha / F::from_usize_(n.max(1)));
    let cells = fit
        .locals
        .iter()
        .map(|local| {
            (0..p)
                .map(|c| {
                    let t = z_test(local.beta[c], local.var[c * p + c]);
                    SigCell {
                        z: t.z,
                        p: t.p,
                        significant: t.p < corrected,
                        degenerate: t.degenerate,
                    }
                })
                .collect()
        })
        .collect();
    SignificanceTable {
        alpha,
        corrected_alpha: corrected,
        enp: fit.enp,
        method: "effective-tests ratio: alpha * (k+1) / enp, floored at alpha / n",
        cells,
    }
}

/// Five-number summary of one coefficient across locations.
#[derive(Debug, Clone)]
pub struct CoefficientSummary<F> {
    pub min: F,
    pub q1: F,
    pub median: F,
    pub q3: F,
    pub max: F,
}

/// Linear-interpolation quantile on a sorted slice (R type 7).
pub(crate) fn quantile_sorted<F: Scalar>(sorted: &[F], q: f64) -> F {
    let n = sorted.len();
    assert!(n > 0);
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = lo.min(n - 2) + 1;
    let frac = F::from_f(h - lo as f64);
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Per-coefficient min/Q1/median/Q3/max across locations.
pub fn coefficient_summary<F: Scalar>(fit: &ModelFit<F>) -> Vec<CoefficientSummary<F>> {
    let p = fit.locals.first().map(|l| l.beta.len()).unwrap_or(0);
    (0..p)
        .map(|c| {
            let mut values: Vec<F> = fit.locals.iter().map(|l| l.beta[c]).collect();
            values.sort_by(|a, b| a.partial_cmp(b).expect("finite coefficients"));
            CoefficientSummary {
                min: values[0],
                q1: quantile_sorted(&values, 0.25),
                median: quantile_sorted(&values, 0.5),
                q3: quantile_sorted(&values, 0.75),
                max: *values.last().unwrap(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn deviance_saturated_fit_is_zero() {
        let y = [1.0, 4.0, 2.0];
        assert_eq!(deviance(&y, &y), 0.0);
    }

    #[test]
    fn deviance_hand_values() {
        assert_relative_eq!(
            deviance(&[2.0], &[1.0]),
            2.0 * (2.0 * 2.0f64.ln() - 1.0),
            epsilon = 1e-12
        );
        assert_relative_eq!(deviance(&[2.0], &[1.0]), 0.7725887222397812, epsilon = 1e-12);
        assert_relative_eq!(deviance(&[0.0], &[1.0]), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn deviance_matches_termwise_oracle() {
        let y: [f64; 6] = [0.0, 3.0, 1.0, 7.0, 0.0, 2.0];
        let lam: [f64; 6] = [0.4, 2.5, 1.4, 6.0, 1.1, 2.0];
        let mut oracle = 0.0;
        for i in 0..y.len() {
            let term = if y[i] == 0.0 {
                lam[i]
            } else {
                y[i] * (y[i] / lam[i]).ln() - (y[i] - lam[i])
            };
            oracle += 2.0 * term;
        }
        assert_relative_eq!(deviance(&y, &lam), oracle, epsilon = 1e-12);
        assert!(deviance(&y, &lam) >= 0.0);
    }

    #[test]
    fn pseudo_r2_limits() {
        assert_eq!(pseudo_r2(5.0, 5.0).unwrap(), 0.0);
        assert_eq!(pseudo_r2(0.0, 5.0).unwrap(), 1.0);
        assert!(matches!(pseudo_r2(1.0, 0.0), Err(FitError::DegenerateNull)));
    }

    #[test]
    fn null_model_pseudo_r2_is_exactly_zero() {
        let y = [0.0, 1.0, 5.0, 2.0];
        let o = [1.0, 2.0, 1.0, 0.5];
        let d0 = null_deviance(&y, &o);
        assert_eq!(pseudo_r2(d0, d0).unwrap(), 0.0);
    }

    #[test]
    fn normal_cdf_reference_values() {
        assert_relative_eq!(normal_cdf(0.0), 0.5, epsilon = 1e-12);
        assert_relative_eq!(normal_cdf(1.96), 0.9750021048517795, epsilon = 1e-9);
        assert_relative_eq!(normal_cdf(-1.0), 0.15865525393145705, epsilon = 1e-9);
        assert_relative_eq!(normal_cdf(1.6448536269514722), 0.95, epsilon = 1e-9);
        assert_relative_eq!(normal_cdf(8.0), 1.0, epsilon = 1e-12);
        assert!(normal_cdf(-40.0) == 0.0);
    }

    #[test]
    fn z_of_1_96_gives_p_near_0_05() {
        let t: ZTest<f64> = z_test(1.96, 1.0);
        assert_relative_eq!(t.p, 0.04999579029644087, epsilon = 1e-9);
        assert!((t.p - 0.05).abs() < 1e-4);
    }

    #[test]
    fn zero_coefficient_not_significant() {
        let t = z_test(0.0, 2.0);
        assert_eq!(t.z, 0.0);
        assert_eq!(t.p, 1.0);
        assert!(!t.degenerate);
    }

    #[test]
    fn zero_variance_is_degenerate() {
        let t: ZTest<f64> = z_test(0.7, 0.0);
        assert!(t.z.is_infinite() && t.z > 0.0);
        assert_eq!(t.p, 0.0);
        assert!(t.degenerate);
        let t: ZTest<f64> = z_test(-0.7, 0.0);
        assert!(t.z.is_infinite() && t.z < 0.0);
    }

    #[test]
    fn quantiles_hand_case() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 5.0);
        assert_eq!(quantile_sorted(&v, 0.25), 2.0);
        assert_eq!(quantile_sorted(&v, 0.75), 4.0);
    }
}
