//! Distance computation and geographic weighting kernels.
//!
//! All estimators in this crate weight samples by distance from a focal
//! location through one of two kernels:
//!
//! * Gaussian: `w = exp(-(d/b)^2)`, strictly positive everywhere;
//! * bisquare: compactly supported on `d < b`, zero outside.
//!
//! The bisquare is available in two forms. `Conventional` is the usual
//! `(1 - (d/b)^2)^2`; `Literal` is `(1 - d/b)^2`, kept selectable because
//! some software uses that variant. Conventional is the default.

use crate::error::DataError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Gaussian,
    Bisquare,
}

/// Which algebraic form of the bisquare kernel to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BisquareForm {
    /// `(1 - (d/b)^2)^2` on `d < b`.
    #[default]
    Conventional,
    /// `(1 - d/b)^2` on `d < b`.
    Literal,
}

/// Kernel family and bisquare form without a bandwidth: the part of a
/// [`KernelSpec`] that stays fixed while a bandwidth search varies `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelShape {
    pub family: KernelFamily,
    pub bisquare_form: BisquareForm,
}

impl KernelShape {
    pub fn gaussian() -> Self {
        Self {
            family: KernelFamily::Gaussian,
            bisquare_form: BisquareForm::default(),
        }
    }

    pub fn bisquare() -> Self {
        Self {
            family: KernelFamily::Bisquare,
            bisquare_form: BisquareForm::default(),
        }
    }

    /// Concrete kernel at bandwidth `b` (assumed positive).
    pub fn at<F: Scalar>(&self, b: F) -> KernelSpec<F> {
        KernelSpec {
            family: self.family,
            bandwidth: b,
            bisquare_form: self.bisquare_form,
        }
    }
}

/// Kernel family plus bandwidth; parameterizes every geographic weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec<F> {
    pub family: KernelFamily,
    pub bandwidth: F,
    pub bisquare_form: BisquareForm,
}

impl<F: Scalar> KernelSpec<F> {
    pub fn new(family: KernelFamily, bandwidth: F) -> Result<Self, DataError> {
        if !(bandwidth > F::zero()) || !bandwidth.is_finite() {
            return Err(DataError::Invalid(format!(
                "bandwidth must be a positive finite number, got {bandwidth}"
            )));
        }
        Ok(Self {
            family,
            bandwidth,
            bisquare_form: BisquareForm::default(),
        })
    }

    pub fn gaussian(bandwidth: F) -> Result<Self, DataError> {
        Self::new(KernelFamily::Gaussian, bandwidth)
    }

    pub fn bisquare(bandwidth: F) -> Result<Self, DataError> {
        Self::new(KernelFamily::Bisquare, bandwidth)
    }

    pub fn with_bisquare_form(mut self, form: BisquareForm) -> Self {
        self.bisquare_form = form;
        self
    }

    /// Same kernel at a different bandwidth.
    pub fn at_bandwidth(&self, bandwidth: F) -> Self {
        Self {
            bandwidth,
            ..*self
        }
    }

    /// Weight at distance `d`.
    #[inline]
    pub fn weight_at(&self, d: F) -> F {
        let b = self.bandwidth;
        match self.family {
            KernelFamily::Gaussian => {
                let u = d / b;
                (-(u * u)).exp()
            }
            KernelFamily::Bisquare => {
                if d >= b {
                    F::zero()
                } else {
                    let u = d / b;
                    let base = match self.bisquare_form {
                        BisquareForm::Conventional => F::one() - u * u,
                        BisquareForm::Literal => F::one() - u,
                    };
                    base * base
                }
            }
        }
    }

    /// Distance beyond which roughly 95% of the weight mass is gone.
    ///
    /// `sqrt(3) * b` for the Gaussian kernel; the bisquare has compact
    /// support, so its own bandwidth is returned.
    pub fn effective_bandwidth(&self) -> F {
        match self.family {
            KernelFamily::Gaussian => F::from_f(3.0).sqrt() * self.bandwidth,
            KernelFamily::Bisquare => self.bandwidth,
        }
    }
}

/// Dense symmetric matrix of pairwise Euclidean distances.
#[derive(Debug, Clone)]
pub struct DistanceMatrix<F> {
    n: usize,
    values: Vec<F>,
}

impl<F: Scalar> DistanceMatrix<F> {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[F] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> F {
        self.values[i * self.n + j]
    }

    /// Largest pairwise distance (zero for fewer than two points).
    pub fn diameter(&self) -> F {
        self.values
            .iter()
            .fold(F::zero(), |acc, v| acc.max(*v))
    }

    /// Smallest strictly positive pairwise distance, if any.
    pub fn min_nonzero(&self) -> Option<F> {
        let mut best: Option<F> = None;
        for v in &self.values {
            if *v > F::zero() {
                best = Some(match best {
                    Some(b) => b.min(*v),
                    None => *v,
                });
            }
        }
        best
    }
}

/// Pairwise Euclidean distances between planar coordinates.
pub fn distance_matrix<F: Scalar>(coords: &[[F; 2]]) -> DistanceMatrix<F> {
    let n = coords.len();
    let mut values = vec![F::zero(); n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = coords[i][0] - coords[j][0];
            let dy = coords[i][1] - coords[j][1];
            let d = (dx * dx + dy * dy).sqrt();
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
    }
    DistanceMatrix { n, values }
}

/// Geographic weights of one focal location against all samples.
#[derive(Debug, Clone)]
pub struct WeightVector<F> {
    pub focal: usize,
    pub weights: Vec<F>,
    pub self_excluded: bool,
}

/// Kernel weights for one row of the distance matrix.
///
/// With `exclude_self` the focal weight is forced to exactly zero, which is
/// the leave-one-out configuration used during cross-validation.
pub fn weights<F: Scalar>(
    spec: &KernelSpec<F>,
    distances: &[F],
    focal: usize,
    exclude_self: bool,
) -> WeightVector<F> {
    let mut w: Vec<F> = distances.iter().map(|d| spec.weight_at(*d)).collect();
    if exclude_self {
        w[focal] = F::zero();
    }
    WeightVector {
        focal,
        weights: w,
        self_excluded: exclude_self,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn three_four_five_triangle() {
        let d = distance_matrix(&[[0.0f64, 0.0], [3.0, 4.0]]);
        assert_relative_eq!(d.get(0, 1), 5.0);
        assert_relative_eq!(d.get(1, 0), 5.0);
        assert_eq!(d.get(0, 0), 0.0);
    }

    #[test]
    fn single_point_distance_matrix() {
        let d = distance_matrix(&[[1.5f64, -2.0]]);
        assert_eq!(d.n(), 1);
        assert_eq!(d.get(0, 0), 0.0);
        assert!(d.min_nonzero().is_none());
    }

    #[test]
    fn distances_match_pairwise_recomputation() {
        // Deterministic pseudo-random points.
        let pts: Vec<[f64; 2]> = (0..5)
            .map(|i| {
                let t = i as f64;
                [(t * 1.37).sin() * 3.0, (t * 0.71).cos() * 2.0]
            })
            .collect();
        let d = distance_matrix(&pts);
        for i in 0..5 {
            for j in 0..5 {
                let oracle = ((pts[i][0] - pts[j][0]).powi(2)
                    + (pts[i][1] - pts[j][1]).powi(2))
                .sqrt();
                assert!((d.get(i, j) - oracle).abs() < 1e-12);
                assert_eq!(d.get(i, j), d.get(j, i));
            }
        }
        // Triangle inequality.
        for i in 0..5 {
            for j in 0..5 {
                for l in 0..5 {
                    assert!(d.get(i, j) <= d.get(i, l) + d.get(l, j) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn gaussian_weight_values() {
        let spec = KernelSpec::gaussian(2.0f64).unwrap();
        assert_relative_eq!(spec.weight_at(0.0), 1.0);
        assert_relative_eq!(spec.weight_at(2.0), (-1.0f64).exp());
    }

    #[test]
    fn bisquare_vanishes_outside_bandwidth() {
        for form in [BisquareForm::Conventional, BisquareForm::Literal] {
            let spec = KernelSpec::bisquare(1.5f64).unwrap().with_bisquare_form(form);
            assert_eq!(spec.weight_at(1.5), 0.0);
            assert_eq!(spec.weight_at(7.0), 0.0);
            assert_relative_eq!(spec.weight_at(0.0), 1.0);
            assert!(spec.weight_at(1.0) > 0.0);
        }
    }

    #[test]
    fn bisquare_forms_differ_inside_support() {
        let conventional = KernelSpec::bisquare(2.0f64).unwrap();
        let literal = conventional.with_bisquare_form(BisquareForm::Literal);
        // d/b = 0.5: conventional (1-0.25)^2 = 0.5625, literal (1-0.5)^2 = 0.25.
        assert_relative_eq!(conventional.weight_at(1.0), 0.5625);
        assert_relative_eq!(literal.weight_at(1.0), 0.25);
    }

    #[test]
    fn effective_bandwidth_scales_with_sqrt3() {
        let spec = KernelSpec::gaussian(2.0f64).unwrap();
        assert_relative_eq!(spec.effective_bandwidth(), 3.0f64.sqrt() * 2.0, epsilon = 1e-12);
        let unit = KernelSpec::gaussian(1.0f64).unwrap();
        assert_relative_eq!(unit.effective_bandwidth(), 3.0f64.sqrt(), epsilon = 1e-12);
        // At the effective radius the Gaussian weight is exp(-3) <= 0.05,
        // consistent with the "95% of the weight is gone" reading.
        let w = spec.weight_at(spec.effective_bandwidth());
        assert_relative_eq!(w, (-3.0f64).exp(), epsilon = 1e-12);
        assert!(w <= 0.05);
        let bi = KernelSpec::bisquare(2.0f64).unwrap();
        assert_relative_eq!(bi.effective_bandwidth(), 2.0);
    }

    #[test]
    fn exclude_self_zeroes_only_the_focal_entry() {
        let spec = KernelSpec::gaussian(1.0f64).unwrap();
        let distances = [0.0, 0.5, 2.0, 0.9];
        let with_self = weights(&spec, &distances, 0, false);
        let without = weights(&spec, &distances, 0, true);
        assert_eq!(without.weights[0], 0.0);
        assert_relative_eq!(with_self.weights[0], 1.0);
        for j in 1..4 {
            assert_eq!(with_self.weights[j], without.weights[j]);
        }
    }

    #[test]
    fn invalid_bandwidth_rejected() {
        assert!(KernelSpec::gaussian(0.0f64).is_err());
        assert!(KernelSpec::gaussian(-1.0f64).is_err());
        assert!(KernelSpec::gaussian(f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn weights_bounded_and_monotone(
            b in 0.05f64..10.0,
            d1 in 0.0f64..20.0,
            step in 0.0f64..20.0,
            family in prop_oneof![Just(KernelFamily::Gaussian), Just(KernelFamily::Bisquare)],
        ) {
            let spec = KernelSpec::new(family, b).unwrap();
            let d2 = d1 + step;
            let w1 = spec.weight_at(d1);
            let w2 = spec.weight_at(d2);
            prop_assert!((0.0..=1.0).contains(&w1));
            prop_assert!((0.0..=1.0).contains(&w2));
            prop_assert!(w2 <= w1 + 1e-15);
            match family {
                // Strictly positive mathematically; in f64 the weight
                // underflows to zero once (d/b)^2 passes ~745.
                KernelFamily::Gaussian => {
                    prop_assert!(w1 > 0.0 || (d1 / b) * (d1 / b) > 700.0)
                }
                KernelFamily::Bisquare => prop_assert_eq!(w1 == 0.0, d1 >= b),
            }
        }
    }
}
