//! Linearized GWPR and its ridge-regularized and local-psi variants.
//!
//! The estimator replaces the per-location IRLS of conventional GWPR with a
//! single-loop procedure:
//!
//! 1. select the bandwidth (and optionally a ridge penalty) by LOOCV on the
//!    transformed response `z+`;
//! 2. solve one weighted least squares per location for the stage-one
//!    coefficients and approximate means;
//! 3. apply one closed-form Poisson update per location.
//!
//! No step iterates, which is what removes the double loop of the
//! conventional estimator.

use std::time::Instant;

use rayon::prelude::*;

use crate::data::Dataset;
use crate::diagnostics;
use crate::error::FitError;
use crate::glm::{self, check_identification};
use crate::gwpr::{LocalFit, ModelFit, SelectionTrace};
use crate::kernel::{self, DistanceMatrix, KernelShape, KernelSpec};
use crate::linalg;
use crate::scalar::Scalar;
use crate::selection::{self, CvCriterion, PsiMode, SearchSettings};

/// Ridge handling: none, or a grid searched jointly with the bandwidth.
#[derive(Debug, Clone)]
pub enum RidgeMode<F> {
    None,
    Search(Vec<F>),
}

/// How step three evaluates the approximate means `lambda*_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeanEval {
    /// `lambda*_j = o_j exp(x_j' beta*_i)` with the focal coefficients,
    /// making step three exactly a one-step IRLS refinement.
    #[default]
    Focal,
    /// `lambda*_j = o_j exp(x_j' beta*_j)` with each sample's own stage-one
    /// fit.
    OwnFit,
}

/// Configuration of a linearized fit.
#[derive(Debug, Clone)]
pub struct LgwprConfig<F> {
    pub kernel: KernelShape,
    pub cv: CvCriterion,
    pub ridge: RidgeMode<F>,
    pub psi: PsiMode,
    pub search: SearchSettings<F>,
    pub mean_eval: MeanEval,
}

/// Ridge candidates searched by default: exact zero plus ten log-spaced
/// values from 1e-6 to 10. Zero stays in the grid so cross-validation can
/// reject regularization outright.
pub fn default_delta_grid<F: Scalar>() -> Vec<F> {
    let mut grid = vec![F::zero()];
    for i in 0..10 {
        let exponent = -6.0 + 7.0 * i as f64 / 9.0;
        grid.push(F::from_f(10f64.powf(exponent)));
    }
    grid
}

impl<F: Scalar> LgwprConfig<F> {
    pub fn new(kernel: KernelShape) -> Self {
        Self {
            kernel,
            cv: CvCriterion::SquaredError,
            ridge: RidgeMode::None,
            psi: PsiMode::Global,
            search: SearchSettings::default(),
            mean_eval: MeanEval::default(),
        }
    }

    pub fn with_ridge_search(mut self) -> Self {
        self.ridge = RidgeMode::Search(default_delta_grid());
        self
    }

    pub fn validate(&self) -> Result<(), FitError> {
        if let RidgeMode::Search(grid) = &self.ridge {
            if grid.is_empty() {
                return Err(FitError::InvalidConfig("empty ridge grid".into()));
            }
            if grid.iter().any(|d| !d.is_finite() || *d < F::zero()) {
                return Err(FitError::InvalidConfig(
                    "ridge candidates must be finite and non-negative".into(),
                ));
            }
            if !grid.iter().any(|d| *d == F::zero()) {
                return Err(FitError::InvalidConfig(
                    "ridge grid must contain 0 so regularization can be rejected".into(),
                ));
            }
        }
        Ok(())
    }

    /// Model name in the comparison menu, e.g. "L-GWPRR_dev".
    pub fn model_tag(&self) -> String {
        let mut tag = String::from(match self.ridge {
            RidgeMode::None => "L-GWPR",
            RidgeMode::Search(_) => "L-GWPRR",
        });
        if self.cv == CvCriterion::Deviance {
            tag.push_str("_dev");
        }
        if self.psi == PsiMode::Local {
            tag.push_str("_loc");
        }
        tag
    }

    fn deltas(&self) -> Vec<F> {
        match &self.ridge {
            RidgeMode::None => vec![F::zero()],
            RidgeMode::Search(grid) => grid.clone(),
        }
    }
}

/// Zero-count ratio among samples within the effective bandwidth of the
/// focal location. Falls back to the global ratio (flagged `true`) when the
/// neighbourhood is empty, which cannot happen for a finite bandwidth since
/// the focal sample itself sits at distance zero.
pub fn local_psi<F: Scalar>(
    data: &Dataset<F>,
    dists: &DistanceMatrix<F>,
    spec: &KernelSpec<F>,
    focal: usize,
) -> (F, bool) {
    let radius = spec.effective_bandwidth();
    let row = dists.row(focal);
    let mut total = 0usize;
    let mut zeros = 0usize;
    for (j, d) in row.iter().enumerate() {
        if *d <= radius {
            total += 1;
            if data.y()[j] == F::zero() {
                zeros += 1;
            }
        }
    }
    if total == 0 {
        (data.zero_ratio(), true)
    } else {
        (F::from_usize_(zeros) / F::from_usize_(total), false)
    }
}

/// Transformed response where each sample's entry uses its own local
/// zero-count ratio at this kernel's effective bandwidth.
///
/// Returns `(z, weights, fallback_count)`.
pub(crate) fn local_response<F: Scalar>(
    data: &Dataset<F>,
    dists: &DistanceMatrix<F>,
    spec: &KernelSpec<F>,
) -> (Vec<F>, Vec<F>, usize) {
    let n = data.n();
    let half = F::from_f(0.5);
    let mut z = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut fallbacks = 0usize;
    for j in 0..n {
        let (psi, fellback) = local_psi(data, dists, spec, j);
        if fellback {
            fallbacks += 1;
        }
        let a = data.y()[j] + half;
        z.push((a / data.offset()[j]).ln() - (F::one() + half * psi) / a);
        weights.push(a);
    }
    (z, weights, fallbacks)
}

fn response_for<F: Scalar>(
    data: &Dataset<F>,
    dists: &DistanceMatrix<F>,
    spec: &KernelSpec<F>,
    psi: PsiMode,
) -> (Vec<F>, Vec<F>, usize) {
    match psi {
        PsiMode::Global => {
            let lr = glm::linearized_response(data, data.zero_ratio());
            (lr.z, lr.weights, 0)
        }
        PsiMode::Local => local_response(data, dists, spec),
    }
}

/// Stage-one coefficients at one location: the closed-form ridge-weighted
/// least squares solve of the transformed response.
///
/// With `exclude_self` the focal weight is zeroed first (the leave-one-out
/// configuration). Singular systems are only possible at `delta = 0`.
pub fn stage1_local_wls<F: Scalar>(
    data: &Dataset<F>,
    dists: &DistanceMatrix<F>,
    spec: &KernelSpec<F>,
    focal: usize,
    delta: F,
    z: &[F],
    weights: &[F],
    exclude_self: bool,
) -> Result<Vec<F>, FitError> {
    let n = data.n();
    let p = data.p();
    let drow = dists.row(focal);
    let mut normal = vec![F::zero(); p * p];
    let mut rhs = vec![F::zero(); p];
    let mut kern = vec![F::zero(); n];
    for j in 0..n {
        if exclude_self && j == focal {
            continue;
        }
        let w = spec.weight_at(drow[j]);
        if !(w > F::zero()) {
            continue;
        }
        kern[j] = w;
        let row = data.row(j);
        let aw = weights[j] * w;
        let awz = aw * z[j];
        for r in 0..p {
            rhs[r] = rhs[r] + awz * row[r];
            let base = r * p;
            for c in r..p {
                normal[base + c] = normal[base + c] + aw * row[r] * row[c];
            }
        }
    }
    for r in 0..p {
        for c in 0..r {
            normal[r * p + c] = normal[c * p + r];
        }
    }
    if delta > F::zero() {
        for d in 0..p {
            normal[d * p + d] = normal[d * p + d] + delta;
        }
    }
    linalg::solve(&normal, p, &rhs).ok_or_else(|| FitError::SingularSystem {
        focal: Some(focal),
        report: check_identification(data, Some(&kern)),
    })
}

/// The full linearized fit: LOOCV selection, stage-one solves, one Poisson
/// update per location, variances, dispersion, deviance.
pub fn fit_lgwpr<F: Scalar>(data: &Dataset<F>, config: &LgwprConfig<F>) -> Result<ModelFit<F>, FitError> {
    let start = Instant::now();
    config.validate()?;
    let dists = kernel::distance_matrix(data.coords());

    // Step 1: bandwidth (and ridge) by LOOCV.
    let sel = selection::select(
        data,
        &dists,
        config.kernel,
        config.cv,
        config.psi,
        &config.deltas(),
        &config.search,
    )?;
    let spec = config.kernel.at(sel.bandwidth);
    let delta = sel.delta;

    // Step 2: stage-one coefficients with the self-weight included.
    let (z, a_weights, _fallbacks) = response_for(data, &dists, &spec, config.psi);
    let n = data.n();
    let stage1: Vec<Vec<F>> = {
        let results: Vec<Result<Vec<F>, FitError>> = (0..n)
            .into_par_iter()
            .map(|i| stage1_local_wls(data, &dists, &spec, i, delta, &z, &a_weights, false))
            .collect();
        let mut out = Vec::with_capacity(n);
        for r in results {
            out.push(r?);
        }
        out
    };

    // Own-fit means are shared across focal locations when requested.
    let own_means: Option<Vec<F>> = match config.mean_eval {
        MeanEval::Focal => None,
        MeanEval::OwnFit => {
            let mut lam = Vec::with_capacity(n);
            for j in 0..n {
                let eta = linalg::dot(data.row(j), &stage1[j]);
                let v = data.offset()[j] * eta.exp();
                if !v.is_finite() || !(v > F::zero()) {
                    return Err(FitError::DegenerateMean {
                        focal: Some(j),
                        sample: j,
                    });
                }
                lam.push(v);
            }
            Some(lam)
        }
    };

    // Step 3: one closed-form Poisson update per location.
    let locals: Vec<LocalFit<F>> = {
        let results: Vec<Result<LocalFit<F>, FitError>> = (0..n)
            .into_par_iter()
            .map(|i| {
                stage3_update(
                    data,
                    &dists,
                    &spec,
                    i,
                    delta,
                    &stage1[i],
                    own_means.as_deref(),
                )
            })
            .collect();
        let mut out = Vec::with_capacity(n);
        for r in results {
            out.push(r?);
        }
        out
    };

    let enp = crate::gwpr::effective_parameters(&locals);
    let fitted: Vec<F> = locals.iter().map(|l| l.fitted).collect();
    let deviance = diagnostics::deviance(data.y(), &fitted);
    let null_deviance = diagnostics::null_deviance(data.y(), data.offset());
    let pseudo_r2 = diagnostics::pseudo_r2(deviance, null_deviance)?;
    let dispersion = glm::dispersion(data, &fitted, enp)?;

    Ok(ModelFit {
        model: config.model_tag(),
        locals,
        bandwidth: sel.bandwidth,
        delta,
        dispersion,
        enp,
        deviance,
        null_deviance,
        pseudo_r2,
        trace: SelectionTrace::Loocv(sel.trace),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// One closed-form Poisson update (the ridge form when `delta > 0`) with
/// variance `C A^-1 C'` and the hat diagonal at the focal entry.
fn stage3_update<F: Scalar>(
    data: &Dataset<F>,
    dists: &DistanceMatrix<F>,
    spec: &KernelSpec<F>,
    focal: usize,
    delta: F,
    beta_star: &[F],
    own_means: Option<&[F]>,
) -> Result<LocalFit<F>, FitError> {
    let n = data.n();
    let p = data.p();
    let drow = dists.row(focal);
    let mut normal = vec![F::zero(); p * p];
    let mut sandwich = vec![F::zero(); p * p];
    let mut rhs = vec![F::zero(); p];
    let mut kern = vec![F::zero(); n];
    let mut lam_focal = F::zero();

    for j in 0..n {
        let w = spec.weight_at(drow[j]);
        let row = data.row(j);
        let (lam, eta_star) = match own_means {
            Some(lam) => (lam[j], linalg::dot(row, beta_star)),
            None => {
                let eta = linalg::dot(row, beta_star);
                (data.offset()[j] * eta.exp(), eta)
            }
        };
        if j == focal {
            if !lam.is_finite() || !(lam > F::zero()) {
                return Err(FitError::DegenerateMean {
                    focal: Some(focal),
                    sample: j,
                });
            }
            lam_focal = lam;
        }
        if !(w > F::zero()) {
            continue;
        }
        if !lam.is_finite() || !(lam > F::zero()) {
            return Err(FitError::DegenerateMean {
                focal: Some(focal),
                sample: j,
            });
        }
        kern[j] = w;
        let wl = w * lam;
        // lambda * z = lambda * eta* + (y - lambda).
        let wlz = w * (lam * eta_star + (data.y()[j] - lam));
        let wwl = w * wl;
        for r in 0..p {
            rhs[r] = rhs[r] + wlz * row[r];
            let base = r * p;
            for c in r..p {
                normal[base + c] = normal[base + c] + wl * row[r] * row[c];
                sandwich[base + c] = sandwich[base + c] + wwl * row[r] * row[c];
            }
        }
    }
    for r in 0..p {
        for c in 0..r {
            normal[r * p + c] = normal[c * p + r];
            sandwich[r * p + c] = sandwich[c * p + r];
        }
    }
    if delta > F::zero() {
        for d in 0..p {
            normal[d * p + d] = normal[d * p + d] + delta;
        }
    }

    let singular = || FitError::SingularSystem {
        focal: Some(focal),
        report: check_identification(data, Some(&kern)),
    };
    let beta = linalg::solve(&normal, p, &rhs).ok_or_else(singular)?;
    let m_inv = linalg::invert(&normal, p).ok_or_else(singular)?;
    // Var = M^-1 (X' A W A^-1 W A X) M^-1 = M^-1 (sum w^2 lam x x') M^-1.
    let inner = linalg::mul(&m_inv, &sandwich, p);
    let var = linalg::mul(&inner, &m_inv, p);

    let x_focal = data.row(focal);
    let hat_diag = lam_focal * kern[focal] * linalg::quad_form(&m_inv, x_focal, p);
    let eta_fit = linalg::dot(x_focal, &beta);
    let fitted = data.offset()[focal] * eta_fit.exp();
    if !fitted.is_finite() || !(fitted > F::zero()) {
        return Err(FitError::DegenerateMean {
            focal: Some(focal),
            sample: focal,
        });
    }

    Ok(LocalFit {
        focal,
        beta,
        var,
        hat_diag,
        converged: true,
        fitted,
    })
}
