//! Minimal dense linear algebra for the small per-location systems.
//!
//! Every system solved in this crate is (k+1)-dimensional with k+1 rarely
//! above six, so plain Gaussian elimination and cyclic Jacobi sweeps are both
//! adequate and easy to audit. Matrices are row-major flat slices.

use crate::scalar::Scalar;

/// Solve `a * x = rhs` by Gaussian elimination with partial pivoting.
///
/// Returns `None` when a pivot falls below `dim * eps * max|a|`.
pub(crate) fn solve<F: Scalar>(a: &[F], dim: usize, rhs: &[F]) -> Option<Vec<F>> {
    debug_assert_eq!(a.len(), dim * dim);
    debug_assert_eq!(rhs.len(), dim);
    let mut m = a.to_vec();
    let mut b = rhs.to_vec();
    let scale = m.iter().fold(F::zero(), |acc, v| acc.max(v.abs()));
    if scale == F::zero() {
        return None;
    }
    let tiny = F::from_usize_(dim) * F::epsilon() * scale;

    for col in 0..dim {
        let mut pivot_row = col;
        let mut pivot_abs = m[col * dim + col].abs();
        for r in (col + 1)..dim {
            let v = m[r * dim + col].abs();
            if v > pivot_abs {
                pivot_abs = v;
                pivot_row = r;
            }
        }
        if pivot_abs <= tiny {
            return None;
        }
        if pivot_row != col {
            for c in 0..dim {
                m.swap(col * dim + c, pivot_row * dim + c);
            }
            b.swap(col, pivot_row);
        }
        let pivot = m[col * dim + col];
        for r in (col + 1)..dim {
            let factor = m[r * dim + col] / pivot;
            if factor == F::zero() {
                continue;
            }
            for c in col..dim {
                let v = m[col * dim + c];
                m[r * dim + c] = m[r * dim + c] - factor * v;
            }
            b[r] = b[r] - factor * b[col];
        }
    }

    let mut x = vec![F::zero(); dim];
    for row in (0..dim).rev() {
        let mut acc = b[row];
        for c in (row + 1)..dim {
            acc = acc - m[row * dim + c] * x[c];
        }
        x[row] = acc / m[row * dim + row];
    }
    Some(x)
}

/// Invert a square matrix, or `None` when it is numerically singular.
pub(crate) fn invert<F: Scalar>(a: &[F], dim: usize) -> Option<Vec<F>> {
    let mut out = vec![F::zero(); dim * dim];
    let mut e = vec![F::zero(); dim];
    for col in 0..dim {
        e.iter_mut().for_each(|v| *v = F::zero());
        e[col] = F::one();
        let x = solve(a, dim, &e)?;
        for row in 0..dim {
            out[row * dim + col] = x[row];
        }
    }
    Some(out)
}

/// `a * b` for square row-major matrices of the same dimension.
pub(crate) fn mul<F: Scalar>(a: &[F], b: &[F], dim: usize) -> Vec<F> {
    let mut out = vec![F::zero(); dim * dim];
    for i in 0..dim {
        for l in 0..dim {
            let ail = a[i * dim + l];
            if ail == F::zero() {
                continue;
            }
            for j in 0..dim {
                out[i * dim + j] = out[i * dim + j] + ail * b[l * dim + j];
            }
        }
    }
    out
}

/// `x' * a * x` for a square row-major matrix.
pub(crate) fn quad_form<F: Scalar>(a: &[F], x: &[F], dim: usize) -> F {
    let mut acc = F::zero();
    for i in 0..dim {
        let mut row = F::zero();
        for j in 0..dim {
            row = row + a[i * dim + j] * x[j];
        }
        acc = acc + x[i] * row;
    }
    acc
}

pub(crate) fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = F::zero();
    for (x, y) in a.iter().zip(b) {
        acc = acc + *x * *y;
    }
    acc
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi sweeps, ascending.
pub(crate) fn sym_eigenvalues<F: Scalar>(a: &[F], dim: usize) -> Vec<F> {
    debug_assert_eq!(a.len(), dim * dim);
    if dim == 0 {
        return Vec::new();
    }
    if dim == 1 {
        return vec![a[0]];
    }
    let mut m = a.to_vec();
    let norm = m.iter().fold(F::zero(), |acc, v| acc.max(v.abs()));
    if norm == F::zero() {
        return vec![F::zero(); dim];
    }
    let stop = norm * F::epsilon();

    for _sweep in 0..100 {
        let mut off = F::zero();
        for p in 0..dim {
            for q in (p + 1)..dim {
                off = off.max(m[p * dim + q].abs());
            }
        }
        if off <= stop {
            break;
        }
        for p in 0..dim {
            for q in (p + 1)..dim {
                let apq = m[p * dim + q];
                if apq.abs() <= stop {
                    continue;
                }
                let theta = (m[q * dim + q] - m[p * dim + p]) / (apq + apq);
                let t = {
                    let denom = theta.abs() + (theta * theta + F::one()).sqrt();
                    if theta >= F::zero() {
                        F::one() / denom
                    } else {
                        -F::one() / denom
                    }
                };
                let c = F::one() / (t * t + F::one()).sqrt();
                let s = t * c;
                let tau = s / (F::one() + c);

                let app = m[p * dim + p];
                let aqq = m[q * dim + q];
                m[p * dim + p] = app - t * apq;
                m[q * dim + q] = aqq + t * apq;
                m[p * dim + q] = F::zero();
                m[q * dim + p] = F::zero();
                for r in 0..dim {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = m[r * dim + p];
                    let arq = m[r * dim + q];
                    let new_rp = arp - s * (arq + tau * arp);
                    let new_rq = arq + s * (arp - tau * arq);
                    m[r * dim + p] = new_rp;
                    m[p * dim + r] = new_rp;
                    m[r * dim + q] = new_rq;
                    m[q * dim + r] = new_rq;
                }
            }
        }
    }

    let mut eig: Vec<F> = (0..dim).map(|i| m[i * dim + i]).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
    eig
}

/// Singular values of a row-major `rows x cols` matrix by one-sided Jacobi
/// (Hestenes) rotations, descending. Accurate for tiny singular values,
/// unlike the Gram-eigenvalue route which squares the condition number.
pub(crate) fn singular_values<F: Scalar>(matrix: &[F], rows: usize, cols: usize) -> Vec<F> {
    debug_assert_eq!(matrix.len(), rows * cols);
    if rows == 0 || cols == 0 {
        return vec![F::zero(); cols];
    }
    // Column-major working copy.
    let mut v = vec![F::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            v[c * rows + r] = matrix[r * cols + c];
        }
    }
    let col_dot = |v: &[F], a: usize, b: usize| -> F {
        let mut acc = F::zero();
        for r in 0..rows {
            acc = acc + v[a * rows + r] * v[b * rows + r];
        }
        acc
    };
    for _sweep in 0..60 {
        let mut rotated = false;
        for i in 0..cols {
            for j in (i + 1)..cols {
                let alpha = col_dot(&v, i, i);
                let beta = col_dot(&v, j, j);
                let gamma = col_dot(&v, i, j);
                if alpha == F::zero() || beta == F::zero() {
                    continue;
                }
                if gamma.abs() <= F::epsilon() * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (gamma + gamma);
                let t = {
                    let denom = zeta.abs() + (zeta * zeta + F::one()).sqrt();
                    if zeta >= F::zero() {
                        F::one() / denom
                    } else {
                        -F::one() / denom
                    }
                };
                let c = F::one() / (t * t + F::one()).sqrt();
                let s = c * t;
                for r in 0..rows {
                    let vi = v[i * rows + r];
                    let vj = v[j * rows + r];
                    v[i * rows + r] = c * vi - s * vj;
                    v[j * rows + r] = s * vi + c * vj;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<F> = (0..cols).map(|c| col_dot(&v, c, c).sqrt()).collect();
    sv.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    sv
}

/// Numerical rank of a row-major `rows x cols` matrix with the threshold
/// `rows * eps * largest singular value`.
pub(crate) fn rank<F: Scalar>(matrix: &[F], rows: usize, cols: usize) -> usize {
    if rows == 0 || cols == 0 {
        return 0;
    }
    let sv = singular_values(matrix, rows, cols);
    let sv_max = sv[0];
    if !(sv_max > F::zero()) {
        return 0;
    }
    let tol = F::from_usize_(rows) * F::epsilon() * sv_max;
    sv.iter().filter(|v| **v > tol).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn random_spd(dim: usize, seed: u64) -> Vec<f64> {
        // xorshift-ish deterministic filler; SPD via G'G + I.
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15) | 1;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state as f64 / u64::MAX as f64) * 2.0 - 1.0
        };
        let g: Vec<f64> = (0..dim * dim).map(|_| next()).collect();
        let mut a = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                let mut acc = if i == j { 1.0 } else { 0.0 };
                for l in 0..dim {
                    acc += g[l * dim + i] * g[l * dim + j];
                }
                a[i * dim + j] = acc;
            }
        }
        a
    }

    #[test]
    fn solve_matches_nalgebra() {
        for dim in 1..=6 {
            for seed in 1..=5u64 {
                let a = random_spd(dim, seed * 31 + dim as u64);
                let rhs: Vec<f64> = (0..dim).map(|i| (i as f64 + 1.0) * 0.7).collect();
                let x = solve(&a, dim, &rhs).expect("spd system solvable");
                let na = DMatrix::from_row_slice(dim, dim, &a);
                let nb = DVector::from_column_slice(&rhs);
                let nx = na.lu().solve(&nb).expect("nalgebra solve");
                for i in 0..dim {
                    assert_relative_eq!(x[i], nx[i], max_relative = 1e-10, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn singular_matrix_is_detected() {
        // Second row is twice the first.
        let a = vec![1.0, 2.0, 2.0, 4.0];
        assert!(solve(&a, 2, &[1.0, 1.0]).is_none());
        assert!(invert(&a, 2).is_none());
    }

    #[test]
    fn invert_matches_nalgebra() {
        let a = random_spd(4, 99);
        let inv = invert(&a, 4).unwrap();
        let na = DMatrix::from_row_slice(4, 4, &a);
        let ninv = na.try_inverse().unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_relative_eq!(inv[i * 4 + j], ninv[(i, j)], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn eigenvalues_match_nalgebra() {
        for dim in 2..=6 {
            let a = random_spd(dim, 7 + dim as u64);
            let eig = sym_eigenvalues(&a, dim);
            let na = DMatrix::from_row_slice(dim, dim, &a);
            let mut ne: Vec<f64> = na.symmetric_eigen().eigenvalues.iter().copied().collect();
            ne.sort_by(|x, y| x.partial_cmp(y).unwrap());
            for (ours, theirs) in eig.iter().zip(&ne) {
                assert_relative_eq!(ours, theirs, max_relative = 1e-9, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn rank_detects_collinear_columns() {
        // 5x3 design whose third column duplicates the second.
        let collinear = [
            1.0, 0.3, 0.3, //
            1.0, -1.2, -1.2, //
            1.0, 0.9, 0.9, //
            1.0, 2.0, 2.0, //
            1.0, -0.4, -0.4,
        ];
        assert_eq!(rank(&collinear, 5, 3), 2);

        let full = [
            1.0, 0.3, -0.5, //
            1.0, -1.2, 0.8, //
            1.0, 0.9, 1.1, //
            1.0, 2.0, -0.9, //
            1.0, -0.4, 0.2,
        ];
        assert_eq!(rank(&full, 5, 3), 3);
    }

    #[test]
    fn singular_values_match_nalgebra() {
        let m = [
            0.8, -0.3, 1.1, //
            0.2, 0.9, -0.7, //
            -1.4, 0.5, 0.3, //
            0.6, 1.2, 0.4, //
            -0.2, -0.8, 1.9,
        ];
        let ours = singular_values(&m, 5, 3);
        let na = DMatrix::from_row_slice(5, 3, &m);
        let mut theirs: Vec<f64> = na.svd(false, false).singular_values.iter().copied().collect();
        theirs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (a, b) in ours.iter().zip(&theirs) {
            assert_relative_eq!(a, b, max_relative = 1e-10);
        }
    }
}
