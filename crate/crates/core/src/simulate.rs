//! Monte Carlo experiment engine: the spatial count DGP, per-coefficient
//! accuracy metrics, scenario sweeps, and timing benchmarks.
//!
//! Replicate streams come from ChaCha8 with the stream index set to the
//! replicate number, so replicate `i`'s data never depends on how many
//! replicates ran before it and sweeps parallelize without changing
//! results.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::Deserialize;

use crate::data::Dataset;
use crate::error::{DataError, FitError};
use crate::glm::{self, GlmFit, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::gwpr::{self, ModelFit};
use crate::kernel::KernelShape;
use crate::lgwpr::{self, LgwprConfig};
use crate::selection::{CvCriterion, PsiMode, SearchSettings};

/// The eight-model comparison menu.
pub const MODEL_MENU: [&str; 8] = [
    "PR",
    "GWPR",
    "L-GWPR",
    "L-GWPR_dev",
    "L-GWPRR",
    "L-GWPRR_dev",
    "L-GWPR_loc",
    "L-GWPRR_loc",
];

fn default_models() -> Vec<String> {
    MODEL_MENU.iter().map(|s| s.to_string()).collect()
}

fn default_coef_means() -> Vec<f64> {
    Vec::new()
}

fn default_coef_sds() -> Vec<f64> {
    vec![1.0, 2.0, 1.0]
}

fn default_replicates() -> usize {
    200
}

fn default_seed() -> u64 {
    1
}

fn default_kernel() -> String {
    "gaussian".into()
}

/// One Monte Carlo configuration.
///
/// Parses from a plain TOML key-value file. `coef_means` defaults to
/// `[mu0, 2.0, -0.5]` and `coef_sds` to `[1.0, 2.0, 1.0]`; overriding them
/// changes the covariate count accordingly.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub n: usize,
    /// Mean of the intercept field; -1 is the many-zero scenario, 2 the
    /// few-zero one.
    pub mu0: f64,
    /// Range parameter of the coefficient smoothing process (distinct from
    /// any estimation bandwidth).
    pub range: f64,
    #[serde(default = "default_coef_means")]
    pub coef_means: Vec<f64>,
    #[serde(default = "default_coef_sds")]
    pub coef_sds: Vec<f64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// "gaussian" or "bisquare".
    #[serde(default = "default_kernel")]
    pub kernel: String,
    #[serde(default = "default_models")]
    pub models: Vec<String>,
}

impl Scenario {
    pub fn new(n: usize, mu0: f64, range: f64) -> Self {
        Self {
            n,
            mu0,
            range,
            coef_means: default_coef_means(),
            coef_sds: default_coef_sds(),
            replicates: default_replicates(),
            seed: default_seed(),
            kernel: default_kernel(),
            models: default_models(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, DataError> {
        let scenario: Scenario =
            toml::from_str(text).map_err(|e| DataError::Invalid(format!("scenario file: {e}")))?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Coefficient means with the `mu0` default applied.
    pub fn means(&self) -> Vec<f64> {
        if self.coef_means.is_empty() {
            vec![self.mu0, 2.0, -0.5]
        } else {
            self.coef_means.clone()
        }
    }

    pub fn kernel_shape(&self) -> Result<KernelShape, DataError> {
        match self.kernel.as_str() {
            "gaussian" => Ok(KernelShape::gaussian()),
            "bisquare" => Ok(KernelShape::bisquare()),
            other => Err(DataError::Invalid(format!("unknown kernel {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.n == 0 {
            return Err(DataError::Invalid("scenario n must be positive".into()));
        }
        if self.replicates == 0 {
            return Err(DataError::Invalid("replicate count must be >= 1".into()));
        }
        if !(self.range > 0.0) {
            return Err(DataError::Invalid(
                "range parameter must be positive".into(),
            ));
        }
        let means = self.means();
        if means.len() != self.coef_sds.len() || means.is_empty() {
            return Err(DataError::Invalid(
                "coef_means and coef_sds must be non-empty and equally long".into(),
            ));
        }
        if self.coef_sds.iter().any(|s| !(*s > 0.0)) {
            return Err(DataError::Invalid(
                "coefficient SDs must be positive".into(),
            ));
        }
        self.kernel_shape()?;
        if self.models.is_empty() {
            return Err(DataError::Invalid("model list is empty".into()));
        }
        for m in &self.models {
            if !MODEL_MENU.contains(&m.as_str()) {
                return Err(DataError::Invalid(format!(
                    "unknown model {m:?}; menu: {}",
                    MODEL_MENU.join(", ")
                )));
            }
        }
        Ok(())
    }

    /// Identifier used in output files.
    pub fn id(&self) -> String {
        format!("n{}_mu{}_r{}", self.n, self.mu0, self.range)
    }

    /// The full 2 x 3 x 3 parameter grid of the simulation study.
    pub fn paper_grid(replicates: usize, seed: u64) -> Vec<Scenario> {
        let mut scenarios = Vec::new();
        for &mu0 in &[-1.0, 2.0] {
            for &range in &[0.5, 1.0, 2.0] {
                for &n in &[200usize, 500, 2000] {
                    let mut s = Scenario::new(n, mu0, range);
                    s.replicates = replicates;
                    s.seed = seed;
                    scenarios.push(s);
                }
            }
        }
        scenarios
    }
}

/// Standardize to mean zero and unit sample variance (n-1 denominator);
/// all-equal input standardizes to zeros.
fn standardize(values: &mut [f64]) {
    let n = values.len();
    if n < 2 {
        values.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    if ss == 0.0 {
        values.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let sd = (ss / (n as f64 - 1.0)).sqrt();
    values.iter_mut().for_each(|v| *v = (*v - mean) / sd);
}

/// One replicate of the DGP: coordinates uniform on `[-2, 2]^2`,
/// coefficients from standardized spatial moving averages with range
/// `scenario.range`, covariates standard normal, counts Poisson with unit
/// offset. Pure function of `(scenario, replicate)`.
///
/// Returns the dataset and the true coefficient matrix (one row per
/// location, intercept first).
pub fn generate_replicate(scenario: &Scenario, replicate: usize) -> (Dataset<f64>, Vec<Vec<f64>>) {
    let n = scenario.n;
    let means = scenario.means();
    let sds = &scenario.coef_sds;
    let p = means.len();
    let k = p - 1;

    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    rng.set_stream(replicate as u64);

    let unif = Uniform::new(-2.0f64, 2.0).expect("static bounds");
    let coords: Vec<[f64; 2]> = (0..n)
        .map(|_| [unif.sample(&mut rng), unif.sample(&mut rng)])
        .collect();

    // Smoothing weights of the moving-average process.
    let inv_r2 = 1.0 / (scenario.range * scenario.range);
    let mut g = vec![0.0f64; n * n];
    for i in 0..n {
        g[i * n + i] = 1.0;
        for j in (i + 1)..n {
            let dx = coords[i][0] - coords[j][0];
            let dy = coords[i][1] - coords[j][1];
            let w = (-(dx * dx + dy * dy) * inv_r2).exp();
            g[i * n + j] = w;
            g[j * n + i] = w;
        }
    }
    let row_sums: Vec<f64> = (0..n).map(|i| g[i * n..(i + 1) * n].iter().sum()).collect();

    let mut betas = vec![vec![0.0f64; p]; n];
    for c in 0..p {
        let u: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut field: Vec<f64> = (0..n)
            .map(|i| {
                let row = &g[i * n..(i + 1) * n];
                let s: f64 = row.iter().zip(&u).map(|(w, uj)| w * uj).sum();
                s / row_sums[i]
            })
            .collect();
        standardize(&mut field);
        for i in 0..n {
            betas[i][c] = means[c] + sds[c] * field[i];
        }
    }

    let mut xcols: Vec<Vec<f64>> = vec![Vec::with_capacity(n); k];
    let mut x_rows = vec![vec![0.0f64; k]; n];
    for i in 0..n {
        for c in 0..k {
            let v: f64 = StandardNormal.sample(&mut rng);
            xcols[c].push(v);
            x_rows[i][c] = v;
        }
    }

    let y: Vec<f64> = (0..n)
        .map(|i| {
            let mut eta = betas[i][0];
            for c in 0..k {
                eta += x_rows[i][c] * betas[i][c + 1];
            }
            let mu = eta.exp();
            if mu == 0.0 {
                0.0
            } else {
                Poisson::new(mu).expect("finite mean").sample(&mut rng)
            }
        })
        .collect();

    let data = Dataset::from_parts(coords, y, None, &xcols, &[]).expect("generated data is valid");
    (data, betas)
}

/// Accuracy of one estimated coefficient field against the truth.
#[derive(Debug, Clone, Copy)]
pub struct CoefMetrics {
    /// Pearson correlation across locations; `None` when either field has
    /// zero variance.
    pub cc: Option<f64>,
    pub rmse: f64,
    pub bias: f64,
    /// Cross-location sample SD of the estimate.
    pub sd_est: f64,
    /// Cross-location sample SD of the truth.
    pub sd_true: f64,
}

/// Per-coefficient CC, RMSE, bias and SDs between two coefficient matrices
/// of shape `n x p`.
pub fn metrics(estimated: &[Vec<f64>], truth: &[Vec<f64>]) -> Vec<CoefMetrics> {
    assert_eq!(estimated.len(), truth.len());
    let n = truth.len();
    let p = truth.first().map(|r| r.len()).unwrap_or(0);
    let nf = n as f64;
    (0..p)
        .map(|c| {
            let est: Vec<f64> = estimated.iter().map(|r| r[c]).collect();
            let tru: Vec<f64> = truth.iter().map(|r| r[c]).collect();
            let mean_e = est.iter().sum::<f64>() / nf;
            let mean_t = tru.iter().sum::<f64>() / nf;
            let mut sse = 0.0;
            let mut cov = 0.0;
            let mut var_e = 0.0;
            let mut var_t = 0.0;
            for i in 0..n {
                let d = est[i] - tru[i];
                sse += d * d;
                let de = est[i] - mean_e;
                let dt = tru[i] - mean_t;
                cov += de * dt;
                var_e += de * de;
                var_t += dt * dt;
            }
            let cc = if var_e > 0.0 && var_t > 0.0 {
                // sqrt of the product keeps metrics(b, b) at exactly 1.
                Some(cov / (var_e * var_t).sqrt())
            } else {
                None
            };
            let denom = if n > 1 { nf - 1.0 } else { 1.0 };
            CoefMetrics {
                cc,
                rmse: (sse / nf).sqrt(),
                bias: mean_e - mean_t,
                sd_est: (var_e / denom).sqrt(),
                sd_true: (var_t / denom).sqrt(),
            }
        })
        .collect()
}

/// A fitted model of either family, with uniform access to the
/// per-location coefficient matrix.
pub enum FittedModel {
    Global { fit: GlmFit<f64>, seconds: f64 },
    Local(Box<ModelFit<f64>>),
}

impl FittedModel {
    pub fn beta_matrix(&self, n: usize) -> Vec<Vec<f64>> {
        match self {
            FittedModel::Global { fit, .. } => vec![fit.beta.clone(); n],
            FittedModel::Local(fit) => fit.beta_matrix(),
        }
    }

    pub fn bandwidth(&self) -> Option<f64> {
        match self {
            FittedModel::Global { .. } => None,
            FittedModel::Local(fit) => Some(fit.bandwidth),
        }
    }

    pub fn delta(&self) -> Option<f64> {
        match self {
            FittedModel::Global { .. } => None,
            FittedModel::Local(fit) => Some(fit.delta),
        }
    }

    pub fn seconds(&self) -> f64 {
        match self {
            FittedModel::Global { seconds, .. } => *seconds,
            FittedModel::Local(fit) => fit.seconds,
        }
    }
}

/// Configuration of one linearized model tag.
fn lgwpr_config_for(tag: &str, kernel: KernelShape) -> Option<LgwprConfig<f64>> {
    let mut config = LgwprConfig::new(kernel);
    match tag {
        "L-GWPR" => {}
        "L-GWPR_dev" => config.cv = CvCriterion::Deviance,
        "L-GWPR_loc" => config.psi = PsiMode::Local,
        "L-GWPRR" => config = config.with_ridge_search(),
        "L-GWPRR_dev" => {
            config = config.with_ridge_search();
            config.cv = CvCriterion::Deviance;
        }
        "L-GWPRR_loc" => {
            config = config.with_ridge_search();
            config.psi = PsiMode::Local;
        }
        _ => return None,
    }
    Some(config)
}

/// Fit one menu model the way the simulation study does: PR by IRLS, GWPR
/// by the AICc grid, the linearized family by LOOCV.
pub fn fit_model(
    tag: &str,
    data: &Dataset<f64>,
    kernel: KernelShape,
) -> Result<FittedModel, FitError> {
    match tag {
        "PR" => {
            let start = Instant::now();
            let fit = glm::fit_poisson_irls(data, None, DEFAULT_MAX_ITER, DEFAULT_TOL)?;
            Ok(FittedModel::Global {
                fit,
                seconds: start.elapsed().as_secs_f64(),
            })
        }
        "GWPR" => {
            let grid = gwpr::paper_bandwidth_grid();
            let fit = gwpr::fit_gwpr(
                data,
                &kernel.at(1.0),
                &grid,
                false,
                DEFAULT_MAX_ITER,
                DEFAULT_TOL,
            )?;
            Ok(FittedModel::Local(Box::new(fit)))
        }
        other => {
            let config = lgwpr_config_for(other, kernel)
                .ok_or_else(|| FitError::InvalidConfig(format!("unknown model tag {other:?}")))?;
            let fit = lgwpr::fit_lgwpr(data, &config)?;
            Ok(FittedModel::Local(Box::new(fit)))
        }
    }
}

/// Same menu, but GWPR's bandwidth is optimized by golden-section LOOCV so
/// its search budget matches the linearized models'; used for timing
/// comparisons.
pub fn fit_model_loocv_budget(
    tag: &str,
    data: &Dataset<f64>,
    kernel: KernelShape,
) -> Result<FittedModel, FitError> {
    match tag {
        "GWPR" => {
            let fit = gwpr::fit_gwpr_loocv(
                data,
                &kernel.at(1.0),
                &SearchSettings::default(),
                false,
                DEFAULT_MAX_ITER,
                DEFAULT_TOL,
            )?;
            Ok(FittedModel::Local(Box::new(fit)))
        }
        other => fit_model(other, data, kernel),
    }
}

/// One model's outcome on one replicate.
#[derive(Debug, Clone)]
pub struct ReplicateRecord {
    pub scenario: String,
    pub model: String,
    pub replicate: usize,
    pub bandwidth: Option<f64>,
    pub delta: Option<f64>,
    pub seconds: f64,
    /// `Some(reason)` when the model failed on this replicate; failures are
    /// data, not errors.
    pub failure: Option<String>,
    pub coef: Vec<CoefMetrics>,
}

/// Median/quartile summary of one (scenario, model, coefficient) cell.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub scenario: String,
    pub model: String,
    pub coef: usize,
    pub replicates: usize,
    pub failures: usize,
    pub cc_q1: Option<f64>,
    pub cc_median: Option<f64>,
    pub cc_q3: Option<f64>,
    pub rmse_q1: Option<f64>,
    pub rmse_median: Option<f64>,
    pub rmse_q3: Option<f64>,
    pub bias_median: Option<f64>,
    pub sd_est_median: Option<f64>,
    pub sd_true_median: Option<f64>,
    pub bandwidth_median: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepArchive {
    pub records: Vec<ReplicateRecord>,
    pub summaries: Vec<SummaryRow>,
}

fn median_opt(values: &mut Vec<f64>) -> Option<f64> {
    quartile_opt(values, 0.5)
}

fn quartile_opt(values: &mut Vec<f64>, q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    Some(crate::diagnostics::quantile_sorted(values, q))
}

/// Run every model of every scenario on every replicate. Replicates run in
/// parallel; failures become records, never aborts.
pub fn run_sweep(scenarios: &[Scenario]) -> Result<SweepArchive, DataError> {
    for s in scenarios {
        s.validate()?;
    }
    let mut records: Vec<ReplicateRecord> = Vec::new();
    for scenario in scenarios {
        let kernel = scenario.kernel_shape()?;
        let mut scenario_records: Vec<Vec<ReplicateRecord>> = (0..scenario.replicates)
            .into_par_iter()
            .map(|rep| {
                let (data, truth) = generate_replicate(scenario, rep);
                scenario
                    .models
                    .iter()
                    .map(|tag| {
                        let start = Instant::now();
                        match fit_model(tag, &data, kernel) {
                            Ok(fitted) => {
                                let est = fitted.beta_matrix(data.n());
                                ReplicateRecord {
                                    scenario: scenario.id(),
                                    model: tag.clone(),
                                    replicate: rep,
                                    bandwidth: fitted.bandwidth(),
                                    delta: fitted.delta(),
                                    seconds: fitted.seconds(),
                                    failure: None,
                                    coef: metrics(&est, &truth),
                                }
                            }
                            Err(e) => ReplicateRecord {
                                scenario: scenario.id(),
                                model: tag.clone(),
                                replicate: rep,
                                bandwidth: None,
                                delta: None,
                                seconds: start.elapsed().as_secs_f64(),
                                failure: Some(e.to_string()),
                                coef: Vec::new(),
                            },
                        }
                    })
                    .collect()
            })
            .collect();
        for rep_records in scenario_records.drain(..) {
            records.extend(rep_records);
        }
    }
    let summaries = summarize(&records);
    Ok(SweepArchive { records, summaries })
}

/// Collapse replicate records into per-(scenario, model, coefficient)
/// quartile rows. Medians are over successful replicates; the failure count
/// rides alongside.
pub fn summarize(records: &[ReplicateRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in records {
        let key = (r.scenario.clone(), r.model.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    let mut rows = Vec::new();
    for (scenario, model) in keys {
        let group: Vec<&ReplicateRecord> = records
            .iter()
            .filter(|r| r.scenario == scenario && r.model == model)
            .collect();
        let failures = group.iter().filter(|r| r.failure.is_some()).count();
        let successes: Vec<&&ReplicateRecord> =
            group.iter().filter(|r| r.failure.is_none()).collect();
        let p = successes.first().map(|r| r.coef.len()).unwrap_or(0);
        for c in 0..p.max(1) {
            let pick = |f: &dyn Fn(&CoefMetrics) -> Option<f64>| -> Vec<f64> {
                successes
                    .iter()
                    .filter_map(|r| r.coef.get(c).and_then(|m| f(m)))
                    .collect()
            };
            let mut cc = pick(&|m| m.cc);
            let mut rmse = pick(&|m| Some(m.rmse));
            let mut bias = pick(&|m| Some(m.bias));
            let mut sd_est = pick(&|m| Some(m.sd_est));
            let mut sd_true = pick(&|m| Some(m.sd_true));
            let mut bw: Vec<f64> = successes.iter().filter_map(|r| r.bandwidth).collect();
            rows.push(SummaryRow {
                scenario: scenario.clone(),
                model: model.clone(),
                coef: c,
                replicates: group.len(),
                failures,
                cc_q1: quartile_opt(&mut cc, 0.25),
                cc_median: median_opt(&mut cc),
                cc_q3: quartile_opt(&mut cc, 0.75),
                rmse_q1: quartile_opt(&mut rmse, 0.25),
                rmse_median: median_opt(&mut rmse),
                rmse_q3: quartile_opt(&mut rmse, 0.75),
                bias_median: median_opt(&mut bias),
                sd_est_median: median_opt(&mut sd_est),
                sd_true_median: median_opt(&mut sd_true),
                bandwidth_median: median_opt(&mut bw),
            });
        }
    }
    rows
}

/// One timing measurement cell.
#[derive(Debug, Clone)]
pub struct TimingRow {
    pub model: String,
    pub n: usize,
    pub median_seconds: f64,
    pub repeats: usize,
    pub failures: usize,
}

/// Wall-clock fit time per (model, n), median over repeats.
///
/// Data come from the few-zero scenario (`mu0 = 2`, `range = 1`). GWPR runs
/// with golden-section LOOCV bandwidth optimization so every model carries
/// the same kind of numerical search; the timed span covers coefficient
/// estimation, standard-error evaluation, and likelihood evaluation.
pub fn bench(
    n_list: &[usize],
    models: &[String],
    repeats: usize,
    seed: u64,
) -> Result<Vec<TimingRow>, DataError> {
    let mut rows = Vec::new();
    for &n in n_list {
        let mut scenario = Scenario::new(n, 2.0, 1.0);
        scenario.seed = seed;
        scenario.models = models.to_vec();
        scenario.replicates = repeats.max(1);
        scenario.validate()?;
        let kernel = scenario.kernel_shape()?;
        for tag in models {
            let mut seconds = Vec::new();
            let mut failures = 0usize;
            for rep in 0..repeats.max(1) {
                let (data, _) = generate_replicate(&scenario, rep);
                let start = Instant::now();
                match fit_model_loocv_budget(tag, &data, kernel) {
                    Ok(_) => seconds.push(start.elapsed().as_secs_f64()),
                    Err(_) => failures += 1,
                }
            }
            rows.push(TimingRow {
                model: tag.clone(),
                n,
                median_seconds: median_opt(&mut seconds).unwrap_or(f64::NAN),
                repeats: repeats.max(1),
                failures,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn replicates_are_bit_reproducible() {
        let scenario = Scenario::new(40, 2.0, 1.0);
        let (a, ta) = generate_replicate(&scenario, 3);
        let (b, tb) = generate_replicate(&scenario, 3);
        assert_eq!(a.y(), b.y());
        for i in 0..40 {
            assert_eq!(a.coords()[i], b.coords()[i]);
            assert_eq!(ta[i], tb[i]);
        }
        // A different replicate index produces a different stream.
        let (c, _) = generate_replicate(&scenario, 4);
        assert_ne!(a.y(), c.y());
    }

    #[test]
    fn beta_fields_have_exact_mean_and_sd() {
        let scenario = Scenario::new(120, -1.0, 1.0);
        let (_, betas) = generate_replicate(&scenario, 0);
        let means = scenario.means();
        for c in 0..3 {
            let vals: Vec<f64> = betas.iter().map(|b| b[c]).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                / (vals.len() as f64 - 1.0))
                .sqrt();
            assert_relative_eq!(mean, means[c], epsilon = 1e-10);
            assert_relative_eq!(sd, scenario.coef_sds[c], epsilon = 1e-10);
        }
    }

    #[test]
    fn zero_sd_forces_constant_coefficients() {
        let mut scenario = Scenario::new(30, 2.0, 1.0);
        // Bypasses validate(): generate_replicate itself tolerates zero SDs.
        scenario.coef_sds = vec![0.0, 0.0, 0.0];
        let (_, betas) = generate_replicate(&scenario, 1);
        for b in betas {
            assert_eq!(b, vec![2.0, 2.0, -0.5]);
        }
    }

    #[test]
    fn zero_ratio_depends_on_intercept_mean() {
        // Small-scale version of the documented zero-count ratios.
        let cases = [(-1.0, 0.568), (2.0, 0.187)];
        for (mu0, expected) in cases {
            let scenario = Scenario::new(500, mu0, 1.0);
            let mut total = 0.0;
            let reps = 40;
            for rep in 0..reps {
                let (data, _) = generate_replicate(&scenario, rep);
                total += data.zero_ratio();
            }
            let mean = total / reps as f64;
            assert!(
                (mean - expected).abs() < 0.05,
                "mu0={mu0}: mean zero ratio {mean} vs {expected}"
            );
        }
    }

    #[test]
    fn metrics_identity_and_shift() {
        let truth = vec![
            vec![0.0, 1.0],
            vec![1.0, 2.0],
            vec![2.0, 0.5],
            vec![3.0, 1.5],
        ];
        let same = metrics(&truth, &truth);
        for m in &same {
            assert_eq!(m.cc, Some(1.0));
            assert_eq!(m.rmse, 0.0);
            assert_eq!(m.bias, 0.0);
            assert_eq!(m.sd_est, m.sd_true);
        }
        let shifted: Vec<Vec<f64>> = truth
            .iter()
            .map(|r| r.iter().map(|v| v + 0.7).collect())
            .collect();
        let m = metrics(&shifted, &truth);
        for mm in &m {
            assert_relative_eq!(mm.cc.unwrap(), 1.0, epsilon = 1e-12);
            assert_relative_eq!(mm.rmse, 0.7, epsilon = 1e-12);
            assert_relative_eq!(mm.bias, 0.7, epsilon = 1e-12);
        }
    }

    #[test]
    fn metrics_hand_case() {
        let truth: Vec<Vec<f64>> = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let est: Vec<Vec<f64>> = vec![vec![1.0]; 4];
        let m = metrics(&est, &truth);
        assert_relative_eq!(m[0].rmse, (6.0f64 / 4.0).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(m[0].bias, -0.5, epsilon = 1e-12);
        // Constant estimates have zero variance: CC undefined, not zero.
        assert_eq!(m[0].cc, None);
    }

    #[test]
    fn smoke_sweep_has_expected_cardinality() {
        let mut scenario = Scenario::new(30, 2.0, 1.0);
        scenario.replicates = 2;
        scenario.models = vec!["PR".into(), "L-GWPR".into()];
        let archive = run_sweep(&[scenario]).unwrap();
        assert_eq!(archive.records.len(), 2 * 2);
        for r in &archive.records {
            if r.failure.is_none() {
                assert_eq!(r.coef.len(), 3);
            }
        }
        // Summaries: 2 models x 3 coefficients.
        assert_eq!(archive.summaries.len(), 6);
    }

    #[test]
    fn sweep_summaries_are_replicate_order_invariant() {
        let mut scenario = Scenario::new(25, 2.0, 1.0);
        scenario.replicates = 3;
        scenario.models = vec!["L-GWPR".into()];
        let archive = run_sweep(&[scenario]).unwrap();
        let mut shuffled = archive.records.clone();
        shuffled.reverse();
        let a = summarize(&archive.records);
        let b = summarize(&shuffled);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.rmse_median, y.rmse_median);
            assert_eq!(x.cc_median, y.cc_median);
        }
    }

    #[test]
    fn scenario_toml_roundtrip() {
        let text = r#"
n = 50
mu0 = 2.0
range = 1.0
replicates = 3
seed = 9
models = ["PR", "L-GWPRR"]
"#;
        let s = Scenario::from_toml(text).unwrap();
        assert_eq!(s.n, 50);
        assert_eq!(s.means(), vec![2.0, 2.0, -0.5]);
        assert_eq!(s.models.len(), 2);
        assert!(Scenario::from_toml("n = 0\nmu0 = 1.0\nrange = 1.0").is_err());
        assert!(
            Scenario::from_toml("n = 10\nmu0 = 1.0\nrange = 1.0\nmodels = [\"bogus\"]").is_err()
        );
    }

    #[test]
    fn bench_smoke() {
        let rows = bench(&[30], &["L-GWPR".to_string()], 1, 5).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].median_seconds.is_finite());
        assert_eq!(rows[0].failures, 0);
    }
}
