//! Single-loop LOOCV over bandwidth (and ridge) for the linearized models.
//!
//! The criterion for a candidate `(b, delta)` solves, for every location,
//! the stage-one weighted least squares with the focal self-weight zeroed,
//! then scores the held-out residual either as an unweighted squared error
//! on the transformed response or as the held-out Poisson deviance.
//!
//! Per ridge candidate the bandwidth is searched by golden section; the
//! ridge grid is walked outside. Everything a candidate bandwidth needs that
//! does not depend on `delta` (kernel weights, the self-excluded normal
//! matrices and right-hand sides) is assembled once per distinct bandwidth
//! and cached, so probing the same bandwidth under another ridge value
//! costs only the small per-location solves.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::FitError;
use crate::kernel::{DistanceMatrix, KernelShape};
use crate::lgwpr;
use crate::linalg;
use crate::scalar::Scalar;

/// Cost function evaluated during LOOCV.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvCriterion {
    /// Unweighted squared error on the transformed response.
    SquaredError,
    /// Held-out Poisson residual deviance, with `0 log(0/l) = 0`.
    Deviance,
}

/// Whether the zero-count ratio in the response transform is global or
/// recomputed per location within the effective bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsiMode {
    Global,
    Local,
}

/// One LOOCV evaluation.
#[derive(Debug, Clone)]
pub struct LoocvTraceEntry<F> {
    pub delta: F,
    pub bandwidth: F,
    pub criterion: F,
    pub feasible: bool,
}

/// Outcome of the joint bandwidth/ridge search.
#[derive(Debug, Clone)]
pub struct SelectionResult<F> {
    pub bandwidth: F,
    pub delta: F,
    pub criterion: F,
    pub trace: Vec<LoocvTraceEntry<F>>,
    pub evaluations: usize,
}

/// Bandwidth search bracket and tolerance; `None` fields use defaults
/// derived from the data: half the smallest nonzero inter-point distance up
/// to the data diameter, with tolerance `1e-3 * diameter`.
#[derive(Debug, Clone, Copy)]
pub struct SearchSettings<F> {
    pub bandwidth_lo: Option<F>,
    pub bandwidth_hi: Option<F>,
    pub tolerance: Option<F>,
    /// Skip the bandwidth search entirely and evaluate only this value.
    pub fixed_bandwidth: Option<F>,
}

impl<F> Default for SearchSettings<F> {
    fn default() -> Self {
        Self {
            bandwidth_lo: None,
            bandwidth_hi: None,
            tolerance: None,
            fixed_bandwidth: None,
        }
    }
}

impl<F: Scalar> SearchSettings<F> {
    pub(crate) fn resolve(&self, dists: &DistanceMatrix<F>) -> Result<(F, F, F), FitError> {
        let diameter = dists.diameter();
        if !(diameter > F::zero()) {
            return Err(FitError::SelectionFailure {
                reason: "all coordinates coincide; no bandwidth scale".into(),
                evaluations: 0,
            });
        }
        let lo = match self.bandwidth_lo {
            Some(v) => v,
            None => {
                F::from_f(0.5)
                    * dists.min_nonzero().ok_or_else(|| FitError::SelectionFailure {
                        reason: "no nonzero inter-point distance".into(),
                        evaluations: 0,
                    })?
            }
        };
        let hi = self.bandwidth_hi.unwrap_or(diameter);
        let tol = self.tolerance.unwrap_or(F::from_f(1e-3) * diameter);
        if !(lo > F::zero()) || !(hi > lo) || !(tol > F::zero()) {
            return Err(FitError::InvalidConfig(format!(
                "bad bandwidth bracket [{lo}, {hi}] with tolerance {tol}"
            )));
        }
        Ok((lo, hi, tol))
    }
}

/// Golden-section minimization of `f` on `[lo, hi]`.
///
/// Returns the best finite evaluation seen, preferring the smaller abscissa
/// on ties; `None` when every probe was infeasible. Infinite plateaus move
/// the bracket toward larger values, where geographic support is denser.
pub(crate) fn golden_section<F: Scalar>(
    lo: F,
    hi: F,
    tol: F,
    mut f: impl FnMut(F) -> F,
) -> Option<(F, F)> {
    let ratio = F::from_f(0.618_033_988_749_894_9);
    let mut a = lo;
    let mut b = hi;
    let mut best: Option<(F, F)> = None;
    let track = |x: F, fx: F, best: &mut Option<(F, F)>| {
        if fx.is_finite() {
            let better = match best {
                Some((bx, bfx)) => fx < *bfx || (fx == *bfx && x < *bx),
                None => true,
            };
            if better {
                *best = Some((x, fx));
            }
        }
    };

    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    track(x1, f1, &mut best);
    track(x2, f2, &mut best);

    while b - a > tol {
        if f1 <= f2 && f1.is_finite() {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = f(x1);
            track(x1, f1, &mut best);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = f(x2);
            track(x2, f2, &mut best);
        }
    }
    best
}

/// Self-excluded per-location normal equations at one bandwidth, shared by
/// every ridge candidate probing that bandwidth.
struct Assembled<F> {
    /// Upper-triangular packed `X' A+ W_i X` without the focal sample,
    /// `n` blocks of `p(p+1)/2`.
    normals: Vec<F>,
    /// `X' A+ W_i z+` without the focal sample, `n` blocks of `p`.
    rhs: Vec<F>,
    /// Transformed response at this bandwidth (per-sample psi when local).
    z: Vec<F>,
}

pub(crate) struct CriterionEvaluator<'a, F> {
    data: &'a Dataset<F>,
    dists: &'a DistanceMatrix<F>,
    shape: KernelShape,
    cv: CvCriterion,
    psi: PsiMode,
    /// `a_j x_j x_j'` packed upper-triangular, per sample.
    products: Vec<F>,
    /// Global-psi response, reused when `psi == Global`.
    global_z: Vec<F>,
    weights: Vec<F>,
    cache: HashMap<u64, Assembled<F>>,
}

impl<'a, F: Scalar> CriterionEvaluator<'a, F> {
    pub(crate) fn new(
        data: &'a Dataset<F>,
        dists: &'a DistanceMatrix<F>,
        shape: KernelShape,
        cv: CvCriterion,
        psi: PsiMode,
    ) -> Self {
        let n = data.n();
        let p = data.p();
        let tri = p * (p + 1) / 2;
        let lr = crate::glm::linearized_response(data, data.zero_ratio());
        let mut products = vec![F::zero(); n * tri];
        for j in 0..n {
            let row = data.row(j);
            let a = lr.weights[j];
            let mut t = 0;
            for r in 0..p {
                for c in r..p {
                    products[j * tri + t] = a * row[r] * row[c];
                    t += 1;
                }
            }
        }
        Self {
            data,
            dists,
            shape,
            cv,
            psi,
            products,
            global_z: lr.z,
            weights: lr.weights,
            cache: HashMap::new(),
        }
    }

    fn assemble(&mut self, bandwidth: F) -> &Assembled<F> {
        let key = bandwidth.into_f().to_bits();
        if !self.cache.contains_key(&key) {
            let n = self.data.n();
            let p = self.data.p();
            let tri = p * (p + 1) / 2;
            let spec = self.shape.at(bandwidth);
            let z = match self.psi {
                PsiMode::Global => self.global_z.clone(),
                PsiMode::Local => lgwpr::local_response(self.data, self.dists, &spec).0,
            };
            let mut rhs_products = vec![F::zero(); n * p];
            for j in 0..n {
                let row = self.data.row(j);
                let az = self.weights[j] * z[j];
                for c in 0..p {
                    rhs_products[j * p + c] = az * row[c];
                }
            }

            let mut normals = vec![F::zero(); n * tri];
            let mut rhs = vec![F::zero(); n * p];
            let products = &self.products;
            let dists = self.dists;
            normals
                .par_chunks_mut(tri)
                .zip(rhs.par_chunks_mut(p))
                .enumerate()
                .for_each(|(i, (m, v))| {
                    let drow = dists.row(i);
                    for j in 0..n {
                        if j == i {
                            continue;
                        }
                        let w = spec.weight_at(drow[j]);
                        if !(w > F::zero()) {
                            continue;
                        }
                        let pj = &products[j * tri..j * tri + tri];
                        for (mt, pt) in m.iter_mut().zip(pj) {
                            *mt = *mt + w * *pt;
                        }
                        let qj = &rhs_products[j * p..j * p + p];
                        for (vt, qt) in v.iter_mut().zip(qj) {
                            *vt = *vt + w * *qt;
                        }
                    }
                });
            self.cache.insert(key, Assembled { normals, rhs, z });
        }
        self.cache.get(&key).expect("just inserted")
    }

    /// LOOCV criterion at one `(bandwidth, delta)` candidate.
    pub(crate) fn criterion(&mut self, bandwidth: F, delta: F) -> F {
        // (n implicit in the cached assembly)
        let p = self.data.p();
        let tri = p * (p + 1) / 2;
        let data = self.data;
        let cv = self.cv;
        let assembled = self.assemble(bandwidth);
        let z = &assembled.z;
        let terms: Vec<F> = assembled
            .normals
            .par_chunks(tri)
            .zip(assembled.rhs.par_chunks(p))
            .enumerate()
            .map(|(i, (m, v))| {
                match solve_packed(m, v, p, delta) {
                    Some(beta) => {
                        let fit = linalg::dot(data.row(i), &beta);
                        match cv {
                            CvCriterion::SquaredError => {
                                let r = z[i] - fit;
                                r * r
                            }
                            CvCriterion::Deviance => held_out_deviance_term(
                                data.y()[i],
                                data.offset()[i],
                                fit,
                            ),
                        }
                    }
                    None => F::infinity(),
                }
            })
            .collect();
        let total: F = terms.into_iter().sum();
        if total.is_finite() {
            total
        } else {
            F::infinity()
        }
    }
}

/// Expand a packed upper-triangular normal matrix, add the ridge, solve.
fn solve_packed<F: Scalar>(packed: &[F], rhs: &[F], p: usize, delta: F) -> Option<Vec<F>> {
    let mut full = vec![F::zero(); p * p];
    let mut t = 0;
    for r in 0..p {
        for c in r..p {
            full[r * p + c] = packed[t];
            full[c * p + r] = packed[t];
            t += 1;
        }
    }
    if delta > F::zero() {
        for d in 0..p {
            full[d * p + d] = full[d * p + d] + delta;
        }
    }
    linalg::solve(&full, p, rhs)
}

fn held_out_deviance_term<F: Scalar>(y: F, offset: F, eta: F) -> F {
    let lam = offset * eta.exp();
    if !lam.is_finite() || !(lam > F::zero()) {
        return F::infinity();
    }
    let two = F::from_f(2.0);
    if y == F::zero() {
        two * lam
    } else {
        two * (y * (y / lam).ln() - (y - lam))
    }
}

/// LOOCV criterion at one candidate; returns the value and its feasibility.
pub fn loocv_criterion<F: Scalar>(
    data: &Dataset<F>,
    dists: &DistanceMatrix<F>,
    shape: KernelShape,
    bandwidth: F,
    delta: F,
    cv: CvCriterion,
    psi: PsiMode,
) -> (F, bool) {
    let mut evaluator = CriterionEvaluator::new(data, dists, shape, cv, psi);
    let c = evaluator.criterion(bandwidth, delta);
    (c, c.is_finite())
}

/// Sequential instrumented variant: `hook(i, w_self)` receives the weight
/// applied to sample `i` inside its own held-out solve, which must be zero.
pub fn loocv_criterion_instrumented<F: Scalar>(
    data: &Dataset<F>,
    dists: &DistanceMatrix<F>,
    shape: KernelShape,
    bandwidth: F,
    delta: F,
    cv: CvCriterion,
    psi: PsiMode,
    hook: &mut dyn FnMut(usize, F),
) -> (F, bool) {
    let n = data.n();
    let p = data.p();
    let spec = shape.at(bandwidth);
    let lr = crate::glm::linearized_response(data, data.zero_ratio());
    let z = match psi {
        PsiMode::Global => lr.z.clone(),
        PsiMode::Local => lgwpr::local_response(data, dists, &spec).0,
    };
    let mut total = F::zero();
    for i in 0..n {
        let mut normal = vec![F::zero(); p * p];
        let mut rhs = vec![F::zero(); p];
        let mut self_weight = F::zero();
        for j in 0..n {
            let w = if j == i {
                F::zero()
            } else {
                spec.weight_at(dists.get(i, j))
            };
            if j == i {
                self_weight = w;
            }
            if !(w > F::zero()) {
                continue;
            }
            let row = data.row(j);
            let aw = lr.weights[j] * w;
            let awz = aw * z[j];
            for r in 0..p {
                rhs[r] = rhs[r] + awz * row[r];
                for c in r..p {
                    normal[r * p + c] = normal[r * p + c] + aw * row[r] * row[c];
                }
            }
        }
        hook(i, self_weight);
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
        let term = match linalg::solve(&normal, p, &rhs) {
            Some(beta) => {
                let fit = linalg::dot(data.row(i), &beta);
                match cv {
                    CvCriterion::SquaredError => {
                        let r = z[i] - fit;
                        r * r
                    }
                    CvCriterion::Deviance => {
                        held_out_deviance_term(data.y()[i], data.offset()[i], fit)
                    }
                }
            }
            None => F::infinity(),
        };
        total = total + term;
    }
    if !total.is_finite() {
        total = F::infinity();
    }
    (total, total.is_finite())
}

/// Joint `(bandwidth, delta)` LOOCV selection: golden section over the
/// bandwidth per ridge candidate, ridge candidates walked in ascending
/// order. Ties prefer the smaller ridge, then the smaller bandwidth.
pub fn select<F: Scalar>(
    data: &Dataset<F>,
    dists: &DistanceMatrix<F>,
    shape: KernelShape,
    cv: CvCriterion,
    psi: PsiMode,
    deltas: &[F],
    search: &SearchSettings<F>,
) -> Result<SelectionResult<F>, FitError> {
    if deltas.is_empty() {
        return Err(FitError::InvalidConfig("empty ridge candidate list".into()));
    }
    if deltas.iter().any(|d| *d < F::zero() || !d.is_finite()) {
        return Err(FitError::InvalidConfig(
            "ridge candidates must be finite and non-negative".into(),
        ));
    }
    let mut deltas: Vec<F> = deltas.to_vec();
    deltas.sort_by(|a, b| a.partial_cmp(b).expect("finite deltas"));
    deltas.dedup();

    let mut evaluator = CriterionEvaluator::new(data, dists, shape, cv, psi);
    let mut trace: Vec<LoocvTraceEntry<F>> = Vec::new();

    if let Some(b) = search.fixed_bandwidth {
        if !(b > F::zero()) {
            return Err(FitError::InvalidConfig(format!(
                "fixed bandwidth must be positive, got {b}"
            )));
        }
        for &delta in &deltas {
            let c = evaluator.criterion(b, delta);
            trace.push(LoocvTraceEntry {
                delta,
                bandwidth: b,
                criterion: c,
                feasible: c.is_finite(),
            });
        }
    } else {
        let (lo, hi, tol) = search.resolve(dists)?;
        for &delta in &deltas {
            golden_section(lo, hi, tol, |b| {
                let c = evaluator.criterion(b, delta);
                trace.push(LoocvTraceEntry {
                    delta,
                    bandwidth: b,
                    criterion: c,
                    feasible: c.is_finite(),
                });
                c
            });
        }
    }

    let mut best: Option<&LoocvTraceEntry<F>> = None;
    for entry in trace.iter().filter(|e| e.feasible) {
        best = Some(match best {
            None => entry,
            Some(cur) => {
                let better = entry.criterion < cur.criterion
                    || (entry.criterion == cur.criterion
                        && (entry.delta < cur.delta
                            || (entry.delta == cur.delta && entry.bandwidth < cur.bandwidth)));
                if better {
                    entry
                } else {
                    cur
                }
            }
        });
    }
    match best {
        Some(entry) => Ok(SelectionResult {
            bandwidth: entry.bandwidth,
            delta: entry.delta,
            criterion: entry.criterion,
            evaluations: trace.len(),
            trace,
        }),
        None => Err(FitError::SelectionFailure {
            reason: "every (bandwidth, ridge) candidate was infeasible".into(),
            evaluations: trace.len(),
        }),
    }
}
