//! Spatial count dataset: counts, offsets, design matrix, coordinates.

use crate::error::DataError;
use crate::scalar::Scalar;

/// A validated spatial count dataset.
///
/// The design matrix always carries the constant 1 as its first column, so a
/// dataset with `k` covariates has `k + 1` design columns. Coordinates are
/// planar and in the same length unit as every bandwidth; duplicate
/// coordinates are allowed.
#[derive(Debug, Clone)]
pub struct Dataset<F> {
    coords: Vec<[F; 2]>,
    y: Vec<F>,
    offset: Vec<F>,
    design: Vec<F>,
    names: Vec<String>,
    standardized: bool,
}

impl<F: Scalar> Dataset<F> {
    /// Build and validate a dataset from covariate columns.
    ///
    /// `offset = None` means exposure 1 everywhere. Covariate names default
    /// to `x1..xk` when `names` is empty.
    pub fn from_parts(
        coords: Vec<[F; 2]>,
        y: Vec<F>,
        offset: Option<Vec<F>>,
        covariates: &[Vec<F>],
        names: &[String],
    ) -> Result<Self, DataError> {
        let n = coords.len();
        if n == 0 {
            return Err(DataError::Invalid("dataset has no rows".into()));
        }
        if y.len() != n {
            return Err(DataError::Invalid(format!(
                "count column has {} rows, coordinates have {n}",
                y.len()
            )));
        }
        let offset = offset.unwrap_or_else(|| vec![F::one(); n]);
        if offset.len() != n {
            return Err(DataError::Invalid(format!(
                "offset column has {} rows, coordinates have {n}",
                offset.len()
            )));
        }
        let k = covariates.len();
        for (c, col) in covariates.iter().enumerate() {
            if col.len() != n {
                return Err(DataError::Invalid(format!(
                    "covariate column {c} has {} rows, coordinates have {n}",
                    col.len()
                )));
            }
        }

        for (i, c) in coords.iter().enumerate() {
            if !c[0].is_finite() || !c[1].is_finite() {
                return Err(DataError::Validation {
                    row: i,
                    message: "coordinate is not finite".into(),
                });
            }
        }
        for (i, v) in y.iter().enumerate() {
            if !v.is_finite() || *v < F::zero() || v.fract() != F::zero() {
                return Err(DataError::Validation {
                    row: i,
                    message: format!("count must be a non-negative integer, got {v}"),
                });
            }
        }
        for (i, v) in offset.iter().enumerate() {
            if !v.is_finite() || !(*v > F::zero()) {
                return Err(DataError::Validation {
                    row: i,
                    message: format!("offset must be positive, got {v}"),
                });
            }
        }
        for col in covariates {
            for (i, v) in col.iter().enumerate() {
                if !v.is_finite() {
                    return Err(DataError::Validation {
                        row: i,
                        message: "covariate is not finite".into(),
                    });
                }
            }
        }

        let p = k + 1;
        let mut design = vec![F::one(); n * p];
        for (c, col) in covariates.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                design[i * p + c + 1] = *v;
            }
        }
        let mut full_names = Vec::with_capacity(p);
        full_names.push("Intercept".to_string());
        if names.is_empty() {
            full_names.extend((1..=k).map(|c| format!("x{c}")));
        } else {
            if names.len() != k {
                return Err(DataError::Invalid(format!(
                    "{} covariate names given for {k} covariates",
                    names.len()
                )));
            }
            full_names.extend(names.iter().cloned());
        }

        Ok(Self {
            coords,
            y,
            offset,
            design,
            names: full_names,
            standardized: false,
        })
    }

    /// Sample count.
    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Covariate count, excluding the intercept.
    pub fn k(&self) -> usize {
        self.names.len() - 1
    }

    /// Design column count (`k + 1`).
    pub fn p(&self) -> usize {
        self.names.len()
    }

    pub fn coords(&self) -> &[[F; 2]] {
        &self.coords
    }

    pub fn y(&self) -> &[F] {
        &self.y
    }

    pub fn offset(&self) -> &[F] {
        &self.offset
    }

    /// Row `i` of the design matrix, intercept first.
    #[inline]
    pub fn row(&self, i: usize) -> &[F] {
        let p = self.p();
        &self.design[i * p..(i + 1) * p]
    }

    pub fn design(&self) -> &[F] {
        &self.design
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.names
    }

    /// Whether covariates were standardized at ingestion.
    pub fn standardized(&self) -> bool {
        self.standardized
    }

    /// Ratio of zero counts in `y`.
    pub fn zero_ratio(&self) -> F {
        let zeros = self.y.iter().filter(|v| **v == F::zero()).count();
        F::from_usize_(zeros) / F::from_usize_(self.n())
    }

    /// Standardize each covariate column to mean zero, unit sample variance.
    ///
    /// Columns with zero variance are left untouched. The flag is recorded
    /// and travels into every export.
    pub fn standardize(&mut self) {
        let n = self.n();
        let p = self.p();
        let nf = F::from_usize_(n);
        for c in 1..p {
            let mut mean = F::zero();
            for i in 0..n {
                mean = mean + self.design[i * p + c];
            }
            mean = mean / nf;
            let mut ss = F::zero();
            for i in 0..n {
                let d = self.design[i * p + c] - mean;
                ss = ss + d * d;
            }
            if n < 2 || ss == F::zero() {
                continue;
            }
            let sd = (ss / (nf - F::one())).sqrt();
            for i in 0..n {
                self.design[i * p + c] = (self.design[i * p + c] - mean) / sd;
            }
        }
        self.standardized = true;
    }

    /// Reorder rows by the given permutation (`perm[new] = old`); test aid
    /// for permutation-invariance checks.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.n());
        let p = self.p();
        let mut out = self.clone();
        for (new, &old) in perm.iter().enumerate() {
            out.coords[new] = self.coords[old];
            out.y[new] = self.y[old];
            out.offset[new] = self.offset[old];
            out.design[new * p..(new + 1) * p].copy_from_slice(self.row(old));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Dataset<f64> {
        Dataset::from_parts(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![0.0, 2.0, 5.0],
            None,
            &[vec![0.1, -0.3, 0.8]],
            &["cov".to_string()],
        )
        .unwrap()
    }

    #[test]
    fn default_offset_is_one() {
        let d = small();
        assert_eq!(d.offset(), &[1.0, 1.0, 1.0]);
        assert_eq!(d.n(), 3);
        assert_eq!(d.k(), 1);
        assert_eq!(d.covariate_names(), &["Intercept", "cov"]);
    }

    #[test]
    fn intercept_column_is_constant_one() {
        let d = small();
        for i in 0..d.n() {
            assert_eq!(d.row(i)[0], 1.0);
        }
    }

    #[test]
    fn negative_count_names_row() {
        let err = Dataset::from_parts(
            vec![[0.0, 0.0], [1.0, 0.0]],
            vec![1.0, -1.0],
            None,
            &[],
            &[],
        )
        .unwrap_err();
        match err {
            DataError::Validation { row, .. } => assert_eq!(row, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn fractional_count_rejected() {
        let err = Dataset::from_parts(vec![[0.0, 0.0]], vec![1.5], None, &[], &[]).unwrap_err();
        assert!(matches!(err, DataError::Validation { row: 0, .. }));
    }

    #[test]
    fn nonpositive_offset_rejected() {
        let err = Dataset::from_parts(
            vec![[0.0, 0.0], [1.0, 1.0]],
            vec![1.0, 1.0],
            Some(vec![1.0, 0.0]),
            &[],
            &[],
        )
        .unwrap_err();
        assert!(matches!(err, DataError::Validation { row: 1, .. }));
    }

    #[test]
    fn zero_ratio_counts_zeros() {
        let d = small();
        assert!((d.zero_ratio() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn standardize_sets_flag_and_unit_variance() {
        let mut d = small();
        d.standardize();
        assert!(d.standardized());
        let n = d.n();
        let vals: Vec<f64> = (0..n).map(|i| d.row(i)[1]).collect();
        let mean: f64 = vals.iter().sum::<f64>() / n as f64;
        let var: f64 =
            vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
    }
}
