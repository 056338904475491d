//! CSV ingestion and export (RFC-4180, UTF-8, header row).
//!
//! Input columns are mapped by name through [`Schema`]. All floating-point
//! output is serialized with 10 significant digits, so re-reading
//! reproduces values to serialization precision. Missing values (an absent
//! offset, an undefined correlation) are written as `NA`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::data::Dataset;
use crate::diagnostics::{self, SignificanceTable};
use crate::error::DataError;
use crate::glm::GlmFit;
use crate::gwpr::{ModelFit, SelectionTrace};
use crate::simulate::{ReplicateRecord, SummaryRow, TimingRow};

/// Column-name mapping for dataset ingestion.
#[derive(Debug, Clone)]
pub struct Schema {
    pub coord_x: String,
    pub coord_y: String,
    pub count: String,
    /// Missing offset column means exposure 1 everywhere.
    pub offset: Option<String>,
    pub covariates: Vec<String>,
    /// Standardize covariates to zero mean, unit variance at ingestion;
    /// the choice is recorded in the dataset and travels into exports.
    pub standardize: bool,
}

impl Schema {
    pub fn new(coord_x: &str, coord_y: &str, count: &str) -> Self {
        Self {
            coord_x: coord_x.into(),
            coord_y: coord_y.into(),
            count: count.into(),
            offset: None,
            covariates: Vec::new(),
            standardize: false,
        }
    }
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        format!("{v:.9e}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(v) => fmt(v),
        None => "NA".into(),
    }
}

/// Read and validate a dataset. Row indices in errors are zero-based data
/// rows (the header excluded).
pub fn read_dataset(path: &Path, schema: &Schema) -> Result<Dataset<f64>, DataError> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.into()))
    };
    let ix = col(&schema.coord_x)?;
    let iy = col(&schema.coord_y)?;
    let icount = col(&schema.count)?;
    let ioffset = match &schema.offset {
        Some(name) => Some(col(name)?),
        None => None,
    };
    let icov: Vec<usize> = schema
        .covariates
        .iter()
        .map(|name| col(name))
        .collect::<Result<_, _>>()?;

    let mut coords = Vec::new();
    let mut y = Vec::new();
    let mut offset = Vec::new();
    let mut cov_cols: Vec<Vec<f64>> = vec![Vec::new(); icov.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let parse = |idx: usize, column: &str| -> Result<f64, DataError> {
            let raw = record.get(idx).unwrap_or("");
            raw.trim().parse::<f64>().map_err(|_| DataError::Parse {
                row,
                column: column.into(),
                value: raw.into(),
            })
        };
        coords.push([parse(ix, &schema.coord_x)?, parse(iy, &schema.coord_y)?]);
        y.push(parse(icount, &schema.count)?);
        if let Some(io) = ioffset {
            offset.push(parse(io, schema.offset.as_deref().unwrap_or("offset"))?);
        }
        for (c, &idx) in icov.iter().enumerate() {
            cov_cols[c].push(parse(idx, &schema.covariates[c])?);
        }
    }

    let offset = if ioffset.is_some() { Some(offset) } else { None };
    let mut data = Dataset::from_parts(coords, y, offset, &cov_cols, &schema.covariates)?;
    if schema.standardize {
        data.standardize();
    }
    Ok(data)
}

/// Write a dataset back out with columns `cx, cy, count, offset` followed
/// by the covariates under their own names.
pub fn write_dataset(data: &Dataset<f64>, path: &Path) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![
        "cx".to_string(),
        "cy".to_string(),
        "count".to_string(),
        "offset".to_string(),
    ];
    header.extend(data.covariate_names()[1..].iter().cloned());
    w.write_record(&header)?;
    for i in 0..data.n() {
        let mut rec = vec![
            fmt(data.coords()[i][0]),
            fmt(data.coords()[i][1]),
            format!("{}", data.y()[i] as u64),
            fmt(data.offset()[i]),
        ];
        rec.extend(data.row(i)[1..].iter().map(|v| fmt(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Sibling path with `_summary` appended to the file stem.
pub fn summary_sidecar_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "fit".into());
    let ext = path
        .extension()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    path.with_file_name(format!("{stem}_summary.{ext}"))
}

fn per_location_header(names: &[String]) -> Vec<String> {
    let mut header = vec!["id".to_string(), "cx".to_string(), "cy".to_string()];
    for name in names {
        header.push(format!("beta_{name}"));
        header.push(format!("se_{name}"));
        header.push(format!("z_{name}"));
    }
    for name in names {
        header.push(format!("p_{name}"));
    }
    for name in names {
        header.push(format!("pflag_{name}"));
    }
    header
}

const GLOBAL_SUMMARY_HEADER: [&str; 12] = [
    "model",
    "bandwidth",
    "delta",
    "dispersion",
    "enp",
    "deviance",
    "null_deviance",
    "pseudo_r2",
    "alpha",
    "corrected_alpha",
    "standardized",
    "seconds",
];

/// Export a GWR-family fit: one row per location at `path`, plus the
/// one-row global summary sidecar. Significance flags use the 5% level
/// with the effective-number-of-tests correction.
pub fn write_fit(fit: &ModelFit<f64>, data: &Dataset<f64>, path: &Path) -> Result<(), DataError> {
    let p = data.p();
    let table = diagnostics::significance(fit, 0.05);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(per_location_header(data.covariate_names()))?;
    for (i, local) in fit.locals.iter().enumerate() {
        let mut rec = vec![
            i.to_string(),
            fmt(data.coords()[i][0]),
            fmt(data.coords()[i][1]),
        ];
        for c in 0..p {
            let cell = table.cells[i][c];
            rec.push(fmt(local.beta[c]));
            rec.push(fmt(local.var[c * p + c].max(0.0).sqrt()));
            rec.push(fmt(cell.z));
        }
        for c in 0..p {
            rec.push(fmt(table.cells[i][c].p));
        }
        for c in 0..p {
            rec.push(if table.cells[i][c].significant { "1" } else { "0" }.into());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut sw = csv::Writer::from_path(summary_sidecar_path(path))?;
    sw.write_record(GLOBAL_SUMMARY_HEADER)?;
    sw.write_record(vec![
        fit.model.clone(),
        fmt(fit.bandwidth),
        fmt(fit.delta),
        fmt(fit.dispersion),
        fmt(fit.enp),
        fmt(fit.deviance),
        fmt(fit.null_deviance),
        fmt(fit.pseudo_r2),
        fmt(table.alpha),
        fmt(table.corrected_alpha),
        data.standardized().to_string(),
        fmt(fit.seconds),
    ])?;
    sw.flush()?;
    Ok(())
}

/// Export a global Poisson fit in the same per-location layout (a single
/// row tagged `global`) plus the summary sidecar.
pub fn write_glm_fit(
    fit: &GlmFit<f64>,
    data: &Dataset<f64>,
    model: &str,
    seconds: f64,
    path: &Path,
) -> Result<(), DataError> {
    let p = data.p();
    let alpha = 0.05;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(per_location_header(data.covariate_names()))?;
    let mut rec = vec!["global".to_string(), "NA".to_string(), "NA".to_string()];
    let tests: Vec<_> = (0..p)
        .map(|c| diagnostics::z_test(fit.beta[c], fit.var[c * p + c]))
        .collect();
    for c in 0..p {
        rec.push(fmt(fit.beta[c]));
        rec.push(fmt(fit.var[c * p + c].max(0.0).sqrt()));
        rec.push(fmt(tests[c].z));
    }
    for t in &tests {
        rec.push(fmt(t.p));
    }
    for t in &tests {
        rec.push(if t.p < alpha { "1" } else { "0" }.into());
    }
    w.write_record(&rec)?;
    w.flush()?;

    let mut sw = csv::Writer::from_path(summary_sidecar_path(path))?;
    sw.write_record(GLOBAL_SUMMARY_HEADER)?;
    sw.write_record(vec![
        model.to_string(),
        "NA".into(),
        "NA".into(),
        fmt(fit.dispersion),
        fmt(p as f64),
        fmt(fit.deviance),
        fmt(fit.null_deviance),
        fmt(1.0 - fit.deviance / fit.null_deviance),
        fmt(alpha),
        fmt(alpha),
        data.standardized().to_string(),
        fmt(seconds),
    ])?;
    sw.flush()?;
    Ok(())
}

/// Export a selection trace: AICc grids as
/// `bandwidth,aicc,enp,deviance,feasible,note`, LOOCV traces as
/// `delta,bandwidth,criterion,feasible`.
pub fn write_trace(trace: &SelectionTrace<f64>, path: &Path) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path)?;
    match trace {
        SelectionTrace::AiccGrid(entries) => {
            w.write_record(["bandwidth", "aicc", "enp", "deviance", "feasible", "note"])?;
            for e in entries {
                w.write_record(vec![
                    fmt(e.bandwidth),
                    fmt(e.aicc),
                    fmt(e.enp),
                    fmt(e.deviance),
                    e.feasible.to_string(),
                    e.note.clone().unwrap_or_default(),
                ])?;
            }
        }
        SelectionTrace::Loocv(entries) => {
            w.write_record(["delta", "bandwidth", "criterion", "feasible"])?;
            for e in entries {
                w.write_record(vec![
                    fmt(e.delta),
                    fmt(e.bandwidth),
                    fmt(e.criterion),
                    e.feasible.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Long-format significance export: one row per (location, covariate).
pub fn write_significance(
    table: &SignificanceTable<f64>,
    names: &[String],
    path: &Path,
) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "location",
        "covariate",
        "z",
        "p",
        "significant",
        "degenerate",
        "alpha",
        "corrected_alpha",
    ])?;
    for (i, row) in table.cells.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            w.write_record(vec![
                i.to_string(),
                names[c].clone(),
                fmt(cell.z),
                fmt(cell.p),
                (cell.significant as u8).to_string(),
                (cell.degenerate as u8).to_string(),
                fmt(table.alpha),
                fmt(table.corrected_alpha),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-covariate quantile table (min, Q1, median, Q3, max).
pub fn write_coefficient_summary(
    fit: &ModelFit<f64>,
    names: &[String],
    path: &Path,
) -> Result<(), DataError> {
    let summaries = diagnostics::coefficient_summary(fit);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["covariate", "min", "q1", "median", "q3", "max"])?;
    for (name, s) in names.iter().zip(&summaries) {
        w.write_record(vec![
            name.clone(),
            fmt(s.min),
            fmt(s.q1),
            fmt(s.median),
            fmt(s.q3),
            fmt(s.max),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-replicate metrics, one row per (replicate, model, coefficient).
pub fn write_replicates(records: &[ReplicateRecord], path: &Path) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "scenario",
        "model",
        "replicate",
        "coef",
        "cc",
        "rmse",
        "bias",
        "sd_est",
        "sd_true",
        "bandwidth",
        "delta",
        "seconds",
        "failure",
    ])?;
    for r in records {
        if let Some(reason) = &r.failure {
            w.write_record(vec![
                r.scenario.clone(),
                r.model.clone(),
                r.replicate.to_string(),
                "NA".into(),
                "NA".into(),
                "NA".into(),
                "NA".into(),
                "NA".into(),
                "NA".into(),
                fmt_opt(r.bandwidth),
                fmt_opt(r.delta),
                fmt(r.seconds),
                reason.clone(),
            ])?;
            continue;
        }
        for (c, m) in r.coef.iter().enumerate() {
            w.write_record(vec![
                r.scenario.clone(),
                r.model.clone(),
                r.replicate.to_string(),
                c.to_string(),
                fmt_opt(m.cc),
                fmt(m.rmse),
                fmt(m.bias),
                fmt(m.sd_est),
                fmt(m.sd_true),
                fmt_opt(r.bandwidth),
                fmt_opt(r.delta),
                fmt(r.seconds),
                String::new(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Boxplot-ready per-(scenario, model, coefficient) summary.
pub fn write_summary(rows: &[SummaryRow], path: &Path) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "scenario",
        "model",
        "coef",
        "replicates",
        "failures",
        "cc_q1",
        "cc_median",
        "cc_q3",
        "rmse_q1",
        "rmse_median",
        "rmse_q3",
        "bias_median",
        "sd_est_median",
        "sd_true_median",
        "bandwidth_median",
    ])?;
    for r in rows {
        w.write_record(vec![
            r.scenario.clone(),
            r.model.clone(),
            r.coef.to_string(),
            r.replicates.to_string(),
            r.failures.to_string(),
            fmt_opt(r.cc_q1),
            fmt_opt(r.cc_median),
            fmt_opt(r.cc_q3),
            fmt_opt(r.rmse_q1),
            fmt_opt(r.rmse_median),
            fmt_opt(r.rmse_q3),
            fmt_opt(r.bias_median),
            fmt_opt(r.sd_est_median),
            fmt_opt(r.sd_true_median),
            fmt_opt(r.bandwidth_median),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Timing table: one row per (model, n).
pub fn write_timings(rows: &[TimingRow], path: &Path) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["model", "n", "median_seconds", "repeats", "failures"])?;
    for r in rows {
        w.write_record(vec![
            r.model.clone(),
            r.n.to_string(),
            fmt(r.median_seconds),
            r.repeats.to_string(),
            r.failures.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Read a whole file as a string with the crate's error type.
pub fn read_to_string(path: &Path) -> Result<String, DataError> {
    Ok(fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelShape;
    use crate::lgwpr::{fit_lgwpr, LgwprConfig};
    use crate::testutil::synthetic_spatial;
    use std::io::Write as _;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn read_without_offset_defaults_to_one() {
        let f = write_temp("x,y,count\n0.0,0.0,3\n1.0,2.0,0\n");
        let data = read_dataset(f.path(), &Schema::new("x", "y", "count")).unwrap();
        assert_eq!(data.n(), 2);
        assert_eq!(data.offset(), &[1.0, 1.0]);
        assert_eq!(data.k(), 0);
    }

    #[test]
    fn negative_count_is_a_validation_error_naming_the_row() {
        let f = write_temp("x,y,count\n0.0,0.0,3\n1.0,2.0,-1\n");
        let err = read_dataset(f.path(), &Schema::new("x", "y", "count")).unwrap_err();
        match err {
            DataError::Validation { row, .. } => assert_eq!(row, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_reports_row_and_column() {
        let f = write_temp("x,y,count,v\n0.0,0.0,3,1.0\n1.0,2.0,2,oops\n");
        let mut schema = Schema::new("x", "y", "count");
        schema.covariates = vec!["v".into()];
        let err = read_dataset(f.path(), &schema).unwrap_err();
        match err {
            DataError::Parse { row, column, value } => {
                assert_eq!(row, 1);
                assert_eq!(column, "v");
                assert_eq!(value, "oops");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_reported() {
        let f = write_temp("x,y\n0.0,0.0\n");
        let err = read_dataset(f.path(), &Schema::new("x", "y", "count")).unwrap_err();
        assert!(matches!(err, DataError::MissingColumn(c) if c == "count"));
    }

    #[test]
    fn dataset_roundtrip_preserves_values() {
        let data = synthetic_spatial(15, 0.8, 0.4, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        write_dataset(&data, &path).unwrap();
        let mut schema = Schema::new("cx", "cy", "count");
        schema.offset = Some("offset".into());
        schema.covariates = vec!["x1".into()];
        let back = read_dataset(&path, &schema).unwrap();
        assert_eq!(back.n(), data.n());
        for i in 0..data.n() {
            assert!((back.coords()[i][0] - data.coords()[i][0]).abs() < 1e-9);
            assert_eq!(back.y()[i], data.y()[i]);
            assert!((back.offset()[i] - data.offset()[i]).abs() < 1e-9);
            assert!((back.row(i)[1] - data.row(i)[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn fit_export_roundtrips_to_serialization_precision() {
        let data = synthetic_spatial(10, 0.8, 0.4, 7);
        let mut config = LgwprConfig::<f64>::new(KernelShape::gaussian());
        config.search.fixed_bandwidth = Some(1.0);
        let fit = fit_lgwpr(&data, &config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fit.csv");
        write_fit(&fit, &data, &path).unwrap();

        let mut reader = csv::Reader::from_path(&path).unwrap();
        let records: Vec<csv::StringRecord> =
            reader.records().collect::<Result<_, _>>().unwrap();
        assert_eq!(records.len(), data.n());
        let p = data.p();
        for (i, rec) in records.iter().enumerate() {
            for c in 0..p {
                let beta: f64 = rec.get(3 + 3 * c).unwrap().parse().unwrap();
                let expected = fit.locals[i].beta[c];
                let tol = 1e-9 * expected.abs().max(1e-300);
                assert!(
                    (beta - expected).abs() <= tol,
                    "row {i} coef {c}: {beta} vs {expected}"
                );
                let se: f64 = rec.get(4 + 3 * c).unwrap().parse().unwrap();
                assert!(se >= 0.0);
            }
        }
        // Summary sidecar exists with one data row.
        let sidecar = summary_sidecar_path(&path);
        let mut sr = csv::Reader::from_path(&sidecar).unwrap();
        let rows: Vec<_> = sr.records().collect::<Result<_, _>>().unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(&rows[0][0], "L-GWPR");
    }

    #[test]
    fn zero_delta_exports_zero_ridge_field() {
        let data = synthetic_spatial(10, 0.8, 0.4, 9);
        let mut config = LgwprConfig::<f64>::new(KernelShape::gaussian());
        config.search.fixed_bandwidth = Some(1.2);
        let fit = fit_lgwpr(&data, &config).unwrap();
        assert_eq!(fit.delta, 0.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fit.csv");
        write_fit(&fit, &data, &path).unwrap();
        let mut sr = csv::Reader::from_path(summary_sidecar_path(&path)).unwrap();
        let row = sr.records().next().unwrap().unwrap();
        let delta: f64 = row[2].parse().unwrap();
        assert_eq!(delta, 0.0);
    }
}
