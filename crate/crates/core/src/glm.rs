//! Global (non-geographic) Poisson and quasi-Poisson regression.
//!
//! Three estimation routes live here:
//!
//! * [`fit_poisson_irls`]: the standard iteratively reweighted least squares
//!   fit of the log-linear Poisson model `y ~ Poisson(o * exp(x'b))`;
//! * [`fit_poisson_linearized`]: the two-step estimator that first fits a
//!   weighted log-linear model to the transformed response `z+` and then
//!   applies a single closed-form Poisson update — no iteration, and no
//!   Poisson identification problem in step one;
//! * [`check_identification`]: the rank-based necessary condition for the
//!   existence of the Poisson ML estimator. A passing check does not prove
//!   existence; a failing one proves non-existence.

use crate::data::Dataset;
use crate::diagnostics;
use crate::error::FitError;
use crate::linalg;
use crate::scalar::Scalar;

/// Default IRLS convergence tolerance on the max-norm coefficient change.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Default IRLS iteration cap.
pub const DEFAULT_MAX_ITER: usize = 100;
/// Linear predictors beyond this magnitude abort the fit as divergent.
pub const DIVERGENCE_GUARD: f64 = 30.0;

/// Result of a global Poisson fit.
#[derive(Debug, Clone)]
pub struct GlmFit<F> {
    /// Coefficients, intercept first.
    pub beta: Vec<F>,
    /// Fitted means `o_i * exp(x_i' beta)`.
    pub fitted: Vec<F>,
    /// `(X' A X)^-1` at the fit, the basic-Poisson coefficient variance.
    pub var: Vec<F>,
    /// Pearson dispersion estimate with `k + 1` model degrees of freedom.
    pub dispersion: F,
    pub deviance: F,
    pub null_deviance: F,
    pub iterations: usize,
    pub converged: bool,
}

/// Transformed response of the log-linear approximation.
#[derive(Debug, Clone)]
pub struct LinearizedResponse<F> {
    /// `z+_i = log((y_i + 0.5) / o_i) - (1 + 0.5 psi) / (y_i + 0.5)`.
    pub z: Vec<F>,
    /// Regression weights `y_i + 0.5`.
    pub weights: Vec<F>,
    /// Zero-count ratio used in the transform.
    pub psi: F,
}

/// Outcome of the rank-based identification check.
#[derive(Debug, Clone)]
pub struct IdentificationReport {
    /// Samples with `y_i > 0` among the (weight-masked) rows.
    pub n_positive: usize,
    /// Rank of the design restricted to those samples.
    pub design_rank_on_positive: usize,
    /// Design column count the rank must reach.
    pub required_rank: usize,
    /// Necessary condition for ML existence; `false` proves non-existence.
    pub identifiable_necessary: bool,
}

impl std::fmt::Display for IdentificationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} positive-count samples, design rank {} of {} required{}",
            self.n_positive,
            self.design_rank_on_positive,
            self.required_rank,
            if self.identifiable_necessary {
                ""
            } else {
                "; Poisson ML estimator cannot exist"
            }
        )
    }
}

/// Rank-based necessary condition for Poisson ML existence.
///
/// Rows with non-positive weight are masked out; among the rest, the design
/// restricted to samples with `y_i > 0` must have full column rank.
pub fn check_identification<F: Scalar>(
    data: &Dataset<F>,
    weights: Option<&[F]>,
) -> IdentificationReport {
    let p = data.p();
    let mut n_positive = 0usize;
    let mut masked = Vec::new();
    for i in 0..data.n() {
        if let Some(w) = weights {
            if !(w[i] > F::zero()) {
                continue;
            }
        }
        if data.y()[i] > F::zero() {
            n_positive += 1;
            masked.extend_from_slice(data.row(i));
        }
    }
    let rank = linalg::rank(&masked, n_positive, p);
    IdentificationReport {
        n_positive,
        design_rank_on_positive: rank,
        required_rank: p,
        identifiable_necessary: n_positive >= p && rank == p,
    }
}

/// Converged state of a weighted IRLS run, shared by the global and
/// per-location fits.
pub(crate) struct IrlsCore<F> {
    pub beta: Vec<F>,
    /// Fitted means at the returned coefficients.
    pub lambda: Vec<F>,
    /// Final weighted normal matrix `X' A W X`.
    pub normal: Vec<F>,
    pub iterations: usize,
    pub converged: bool,
}

/// One weighted Poisson IRLS run from `init`.
///
/// `w = None` means unit sample weights. Errors on divergence of the linear
/// predictor and on a singular weighted normal matrix; hitting `max_iter`
/// is reported through the `converged` flag, not an error.
pub(crate) fn irls_weighted<F: Scalar>(
    data: &Dataset<F>,
    w: Option<&[F]>,
    init: &[F],
    max_iter: usize,
    tol: F,
    focal: Option<usize>,
) -> Result<IrlsCore<F>, FitError> {
    let n = data.n();
    let p = data.p();
    let guard = F::from_f(DIVERGENCE_GUARD);
    let mut beta = init.to_vec();
    let mut lambda = vec![F::zero(); n];
    let mut normal = vec![F::zero(); p * p];
    let mut converged = false;
    let mut iterations = 0;

    let weight_at = |j: usize| -> F {
        match w {
            Some(w) => w[j],
            None => F::one(),
        }
    };

    for iter in 0..max_iter {
        iterations = iter + 1;
        normal.iter_mut().for_each(|v| *v = F::zero());
        let mut rhs = vec![F::zero(); p];
        for j in 0..n {
            let wj = weight_at(j);
            if !(wj > F::zero()) {
                continue;
            }
            let row = data.row(j);
            let eta = linalg::dot(row, &beta);
            if eta.abs() > guard {
                return Err(FitError::Divergence {
                    focal,
                    sample: j,
                    guard: DIVERGENCE_GUARD,
                });
            }
            let lam = data.offset()[j] * eta.exp();
            lambda[j] = lam;
            let wl = wj * lam;
            // lambda * z = lambda * eta + (y - lambda), avoiding the large
            // working response when lambda is tiny.
            let wlz = wj * (lam * eta + (data.y()[j] - lam));
            for a in 0..p {
                let ra = row[a];
                rhs[a] = rhs[a] + wlz * ra;
                let base = a * p;
                for b in a..p {
                    normal[base + b] = normal[base + b] + wl * ra * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                normal[a * p + b] = normal[b * p + a];
            }
        }
        let beta_new = linalg::solve(&normal, p, &rhs).ok_or_else(|| FitError::SingularSystem {
            focal,
            report: check_identification(data, w),
        })?;
        let delta = beta_new
            .iter()
            .zip(&beta)
            .fold(F::zero(), |acc, (a, b)| acc.max((*a - *b).abs()));
        beta = beta_new;
        if delta < tol {
            converged = true;
            break;
        }
    }

    // Refresh the means and normal matrix at the returned coefficients. The
    // divergence guard only applies to samples that carry weight; a local
    // fit must not abort because of a zero-weight sample far away.
    normal.iter_mut().for_each(|v| *v = F::zero());
    for j in 0..n {
        let wj = weight_at(j);
        if !(wj > F::zero()) {
            lambda[j] = F::zero();
            continue;
        }
        let row = data.row(j);
        let eta = linalg::dot(row, &beta);
        if eta.abs() > guard {
            return Err(FitError::Divergence {
                focal,
                sample: j,
                guard: DIVERGENCE_GUARD,
            });
        }
        let lam = data.offset()[j] * eta.exp();
        lambda[j] = lam;
        let wl = wj * lam;
        for a in 0..p {
            let base = a * p;
            for b in a..p {
                normal[base + b] = normal[base + b] + wl * row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            normal[a * p + b] = normal[b * p + a];
        }
    }

    Ok(IrlsCore {
        beta,
        lambda,
        normal,
        iterations,
        converged,
    })
}

/// Standard IRLS starting point: `(log((mean(y) + 0.5) / mean(o)), 0, ...)`.
pub(crate) fn irls_init<F: Scalar>(data: &Dataset<F>) -> Vec<F> {
    let n = F::from_usize_(data.n());
    let ybar = data.y().iter().copied().sum::<F>() / n;
    let obar = data.offset().iter().copied().sum::<F>() / n;
    let mut beta = vec![F::zero(); data.p()];
    beta[0] = ((ybar + F::from_f(0.5)) / obar).ln();
    beta
}

/// Global (quasi-)Poisson regression by IRLS.
///
/// The identification check runs first; a failing necessary condition is a
/// [`FitError::SingularSystem`] carrying the report.
pub fn fit_poisson_irls<F: Scalar>(
    data: &Dataset<F>,
    weights: Option<&[F]>,
    max_iter: usize,
    tol: F,
) -> Result<GlmFit<F>, FitError> {
    let report = check_identification(data, weights);
    if !report.identifiable_necessary {
        return Err(FitError::SingularSystem {
            focal: None,
            report,
        });
    }
    let core = irls_weighted(data, weights, &irls_init(data), max_iter, tol, None)?;
    finish_global_fit(data, core)
}

fn finish_global_fit<F: Scalar>(
    data: &Dataset<F>,
    core: IrlsCore<F>,
) -> Result<GlmFit<F>, FitError> {
    let p = data.p();
    let var = linalg::invert(&core.normal, p).ok_or_else(|| FitError::SingularSystem {
        focal: None,
        report: check_identification(data, None),
    })?;
    let deviance = diagnostics::deviance(data.y(), &core.lambda);
    let null_deviance = diagnostics::null_deviance(data.y(), data.offset());
    let enp = F::from_usize_(p);
    let disp = if data.n() > p {
        dispersion(data, &core.lambda, enp)?
    } else {
        F::one()
    };
    Ok(GlmFit {
        beta: core.beta,
        fitted: core.lambda,
        var,
        dispersion: disp,
        deviance,
        null_deviance,
        iterations: core.iterations,
        converged: core.converged,
    })
}

/// Transformed response and weights of the log-linear approximation.
///
/// Total for `y_i >= 0`, `o_i > 0`, `0 <= psi <= 1`.
pub fn linearized_response<F: Scalar>(data: &Dataset<F>, psi: F) -> LinearizedResponse<F> {
    let half = F::from_f(0.5);
    let shift = F::one() + half * psi;
    let n = data.n();
    let mut z = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let a = data.y()[i] + half;
        z.push((a / data.offset()[i]).ln() - shift / a);
        weights.push(a);
    }
    LinearizedResponse { z, weights, psi }
}

/// Two-step linearized Poisson fit: WLS on `z+`, then one closed-form
/// Poisson update. No iteration.
pub fn fit_poisson_linearized<F: Scalar>(data: &Dataset<F>) -> Result<GlmFit<F>, FitError> {
    let lr = linearized_response(data, data.zero_ratio());
    let beta_star = solve_global_wls(data, &lr.weights, &lr.z)?;

    let n = data.n();
    let p = data.p();
    let mut normal = vec![F::zero(); p * p];
    let mut rhs = vec![F::zero(); p];
    for j in 0..n {
        let row = data.row(j);
        let eta = linalg::dot(row, &beta_star);
        let lam = data.offset()[j] * eta.exp();
        if !lam.is_finite() || !(lam > F::zero()) {
            return Err(FitError::DegenerateMean {
                focal: None,
                sample: j,
            });
        }
        let lz = lam * eta + (data.y()[j] - lam);
        for a in 0..p {
            rhs[a] = rhs[a] + lz * row[a];
            let base = a * p;
            for b in a..p {
                normal[base + b] = normal[base + b] + lam * row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            normal[a * p + b] = normal[b * p + a];
        }
    }
    let beta = linalg::solve(&normal, p, &rhs).ok_or_else(|| FitError::SingularSystem {
        focal: None,
        report: check_identification(data, None),
    })?;

    let mut fitted = Vec::with_capacity(n);
    let mut final_normal = vec![F::zero(); p * p];
    for j in 0..n {
        let row = data.row(j);
        let eta = linalg::dot(row, &beta);
        let lam = data.offset()[j] * eta.exp();
        if !lam.is_finite() || !(lam > F::zero()) {
            return Err(FitError::DegenerateMean {
                focal: None,
                sample: j,
            });
        }
        fitted.push(lam);
        for a in 0..p {
            let base = a * p;
            for b in a..p {
                final_normal[base + b] = final_normal[base + b] + lam * row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            final_normal[a * p + b] = final_normal[b * p + a];
        }
    }
    let var = linalg::invert(&final_normal, p).ok_or_else(|| FitError::SingularSystem {
        focal: None,
        report: check_identification(data, None),
    })?;

    let deviance = diagnostics::deviance(data.y(), &fitted);
    let null_deviance = diagnostics::null_deviance(data.y(), data.offset());
    let enp = F::from_usize_(p);
    let disp = if data.n() > p {
        dispersion(data, &fitted, enp)?
    } else {
        F::one()
    };
    Ok(GlmFit {
        beta,
        fitted,
        var,
        dispersion: disp,
        deviance,
        null_deviance,
        iterations: 1,
        converged: true,
    })
}

fn solve_global_wls<F: Scalar>(
    data: &Dataset<F>,
    weights: &[F],
    response: &[F],
) -> Result<Vec<F>, FitError> {
    let p = data.p();
    let mut normal = vec![F::zero(); p * p];
    let mut rhs = vec![F::zero(); p];
    for j in 0..data.n() {
        let row = data.row(j);
        let w = weights[j];
        let wz = w * response[j];
        for a in 0..p {
            rhs[a] = rhs[a] + wz * row[a];
            let base = a * p;
            for b in a..p {
                normal[base + b] = normal[base + b] + w * row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            normal[a * p + b] = normal[b * p + a];
        }
    }
    linalg::solve(&normal, p, &rhs).ok_or_else(|| FitError::SingularSystem {
        focal: None,
        report: check_identification(data, None),
    })
}

/// Pearson dispersion estimate with `enp` effective parameters.
pub fn dispersion<F: Scalar>(data: &Dataset<F>, fitted: &[F], enp: F) -> Result<F, FitError> {
    let n = data.n();
    let dof = F::from_usize_(n) - enp;
    if !(dof > F::zero()) {
        return Err(FitError::DegreesOfFreedom {
            n,
            enp: enp.into_f(),
        });
    }
    let mut acc = F::zero();
    for i in 0..n {
        let r = data.y()[i] - fitted[i];
        acc = acc + r * r / fitted[i];
    }
    Ok(acc / dof)
}
