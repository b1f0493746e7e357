//! Dense least-squares kernels: minimal-norm solve through a one-sided Jacobi
//! SVD, normal equations through Cholesky, and a semidefinite Cholesky used for
//! correlation matrices.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Singular values below `RANK_RTOL * max_singular_value` count as zero.
pub const RANK_RTOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 80;

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ColMatrix<T> {
    rows: usize,
    cols: Vec<Vec<T>>,
}

impl<T: Scalar> ColMatrix<T> {
    pub fn from_columns(rows: usize, cols: Vec<Vec<T>>) -> Result<Self> {
        if cols.iter().any(|c| c.len() != rows) {
            return Err(Error::ShapeError("ragged column lengths".into()));
        }
        Ok(Self { rows, cols })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::ShapeError("ragged row lengths".into()));
        }
        let cols = (0..ncols)
            .map(|j| rows.iter().map(|r| r[j]).collect())
            .collect();
        Ok(Self {
            rows: rows.len(),
            cols,
        })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols.len()
    }

    pub fn column(&self, j: usize) -> &[T] {
        &self.cols[j]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.cols[j][i]
    }

    /// `A x`
    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.rows];
        for (col, &xj) in self.cols.iter().zip(x) {
            if xj == T::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(col) {
                *o = *o + a * xj;
            }
        }
        out
    }

    /// `Aᵀ y`
    pub fn tr_mul_vec(&self, y: &[T]) -> Vec<T> {
        self.cols.iter().map(|c| dot(c, y)).collect()
    }
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Which algebraic route produced a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Orthogonal factorization with rank detection; minimal-norm on deficiency.
    Svd,
    /// `(BᵀB) c = Bᵀ y` through Cholesky; fails on singular Gram matrices.
    NormalEquations,
}

#[derive(Debug, Clone)]
pub struct LstsqSolution<T> {
    pub coefficients: Vec<T>,
    pub rank: usize,
    /// Descending.
    pub singular_values: Vec<T>,
    /// Largest over smallest retained singular value.
    pub condition: T,
    pub residual_norm: T,
    /// Pseudo-inverse of the Gram matrix `(BᵀB)⁺`, row-major, for prediction
    /// variances.
    pub gram_pinv: Vec<T>,
}

/// Thin SVD `A = U Σ Vᵀ`, with `U` implicit: column `j` of `scaled_u` is
/// `σ_j u_j`.
#[derive(Debug, Clone)]
pub struct JacobiSvd<T> {
    pub singular_values: Vec<T>,
    /// Right singular vectors as columns, same order as `singular_values`.
    pub v: Vec<Vec<T>>,
    scaled_u: Vec<Vec<T>>,
}

impl<T: Scalar> JacobiSvd<T> {
    /// One-sided (Hestenes) Jacobi: rotate column pairs until mutually
    /// orthogonal, accumulating the rotations in `V`.
    pub fn new(a: &ColMatrix<T>) -> Self {
        let n = a.ncols();
        let mut w = a.cols.clone();
        let mut v: Vec<Vec<T>> = (0..n)
            .map(|j| (0..n).map(|i| if i == j { T::one() } else { T::zero() }).collect())
            .collect();
        let eps = T::epsilon();

        for _ in 0..MAX_SWEEPS {
            let mut rotated = false;
            for p in 0..n {
                for q in (p + 1)..n {
                    let alpha = dot(&w[p], &w[p]);
                    let beta = dot(&w[q], &w[q]);
                    let gamma = dot(&w[p], &w[q]);
                    if alpha == T::zero() || beta == T::zero() {
                        continue;
                    }
                    if gamma.abs() <= eps * (alpha * beta).sqrt() {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (gamma + gamma);
                    let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                    let c = T::one() / (T::one() + t * t).sqrt();
                    let s = c * t;
                    rotate(&mut w, p, q, c, s);
                    rotate(&mut v, p, q, c, s);
                }
            }
            if !rotated {
                break;
            }
        }

        let mut order: Vec<(T, usize)> = w
            .iter()
            .enumerate()
            .map(|(j, col)| (dot(col, col).sqrt(), j))
            .collect();
        order.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
        Self {
            singular_values: order.iter().map(|&(s, _)| s).collect(),
            v: order.iter().map(|&(_, j)| v[j].clone()).collect(),
            scaled_u: order.iter().map(|&(_, j)| w[j].clone()).collect(),
        }
    }

    pub fn rank(&self, rtol: T) -> usize {
        let smax = self.singular_values.first().copied().unwrap_or(T::zero());
        let cut = smax * rtol;
        self.singular_values
            .iter()
            .take_while(|&&s| s > cut && s > T::zero())
            .count()
    }
}

fn rotate<T: Scalar>(cols: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (lo, hi) = cols.split_at_mut(q);
    let (cp, cq) = (&mut lo[p], &mut hi[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

fn rank_tolerance<T: Scalar>(a: &ColMatrix<T>) -> T {
    let dim = T::of_usize(a.nrows().max(a.ncols()).max(1));
    T::of(RANK_RTOL).max(T::epsilon() * dim)
}

/// Minimal-norm least-squares solution of `A c ≈ y`.
pub fn lstsq_min_norm<T: Scalar>(a: &ColMatrix<T>, y: &[T]) -> Result<LstsqSolution<T>> {
    if y.len() != a.nrows() {
        return Err(Error::ShapeError(format!(
            "design has {} rows, response has {}",
            a.nrows(),
            y.len()
        )));
    }
    let n = a.ncols();
    let svd = JacobiSvd::new(a);
    let rank = svd.rank(rank_tolerance(a));

    let mut coefficients = vec![T::zero(); n];
    let mut gram_pinv = vec![T::zero(); n * n];
    for k in 0..rank {
        let s2 = svd.singular_values[k] * svd.singular_values[k];
        // uᵀy / σ = (σu)ᵀy / σ²
        let weight = dot(&svd.scaled_u[k], y) / s2;
        let vk = &svd.v[k];
        for i in 0..n {
            coefficients[i] = coefficients[i] + vk[i] * weight;
            for j in 0..n {
                gram_pinv[i * n + j] = gram_pinv[i * n + j] + vk[i] * vk[j] / s2;
            }
        }
    }

    let condition = if rank == 0 {
        T::infinity()
    } else {
        svd.singular_values[0] / svd.singular_values[rank - 1]
    };
    let residual_norm = residual_norm(a, &coefficients, y);
    Ok(LstsqSolution {
        coefficients,
        rank,
        singular_values: svd.singular_values,
        condition,
        residual_norm,
        gram_pinv,
    })
}

/// Least squares through the normal equations `(AᵀA) c = Aᵀ y`.
pub fn solve_normal_equations<T: Scalar>(a: &ColMatrix<T>, y: &[T]) -> Result<LstsqSolution<T>> {
    if y.len() != a.nrows() {
        return Err(Error::ShapeError(format!(
            "design has {} rows, response has {}",
            a.nrows(),
            y.len()
        )));
    }
    let n = a.ncols();
    let mut gram = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let g = dot(a.column(i), a.column(j));
            gram[i * n + j] = g;
            gram[j * n + i] = g;
        }
    }
    let rhs = a.tr_mul_vec(y);
    let l = cholesky(&gram, n, T::zero()).map_err(|_| {
        Error::InvalidArgument("normal equations are singular; use the SVD solver".into())
    })?;
    let coefficients = cholesky_solve(&l, n, &rhs);

    let mut gram_pinv = vec![T::zero(); n * n];
    for j in 0..n {
        let mut e = vec![T::zero(); n];
        e[j] = T::one();
        let col = cholesky_solve(&l, n, &e);
        for i in 0..n {
            gram_pinv[i * n + j] = col[i];
        }
    }

    let diag: Vec<T> = (0..n).map(|i| l[i * n + i]).collect();
    let dmax = diag.iter().copied().fold(T::zero(), T::max);
    let dmin = diag.iter().copied().fold(T::infinity(), T::min);
    let residual_norm = residual_norm(a, &coefficients, y);
    Ok(LstsqSolution {
        coefficients,
        rank: n,
        singular_values: Vec::new(),
        condition: dmax / dmin,
        residual_norm,
        gram_pinv,
    })
}

fn residual_norm<T: Scalar>(a: &ColMatrix<T>, c: &[T], y: &[T]) -> T {
    a.mul_vec(c)
        .iter()
        .zip(y)
        .map(|(&f, &v)| (f - v) * (f - v))
        .sum::<T>()
        .sqrt()
}

/// Lower-triangular Cholesky factor of a row-major symmetric matrix. Pivots in
/// `[-zero_tol, zero_tol]` are accepted as exact zeros (semidefinite input);
/// anything more negative is an error.
pub fn cholesky<T: Scalar>(m: &[T], n: usize, zero_tol: T) -> Result<Vec<T>> {
    let mut l = vec![T::zero(); n * n];
    for j in 0..n {
        let mut d = m[j * n + j];
        for k in 0..j {
            d = d - l[j * n + k] * l[j * n + k];
        }
        if d > zero_tol {
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in (j + 1)..n {
                let mut s = m[i * n + j];
                for k in 0..j {
                    s = s - l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / djj;
            }
        } else if d >= -zero_tol && zero_tol > T::zero() {
            // Zero pivot: the column below must vanish too for PSD input.
            for i in (j + 1)..n {
                let mut s = m[i * n + j];
                for k in 0..j {
                    s = s - l[i * n + k] * l[j * n + k];
                }
                if s.abs() > zero_tol.sqrt() {
                    return Err(Error::InvalidArgument(
                        "matrix is not positive semidefinite".into(),
                    ));
                }
            }
        } else {
            return Err(Error::InvalidArgument(
                "matrix is not positive definite".into(),
            ));
        }
    }
    Ok(l)
}

fn cholesky_solve<T: Scalar>(l: &[T], n: usize, b: &[T]) -> Vec<T> {
    let mut z = b.to_vec();
    for i in 0..n {
        let mut s = z[i];
        for k in 0..i {
            s = s - l[i * n + k] * z[k];
        }
        z[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in (i + 1)..n {
            s = s - l[k * n + i] * z[k];
        }
        z[i] = s / l[i * n + i];
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn worked_example_t1() -> (ColMatrix<f64>, Vec<f64>) {
        let x = [211.7568, 112.9350, 154.1112, 90.2616, 174.4274];
        let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![1.0, v, v * v]).collect();
        let y = vec![6.2542, 0.0, 121.6990, 21.7245, 158.4810];
        (ColMatrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn svd_and_normal_equations_agree_on_full_rank() {
        let (a, y) = worked_example_t1();
        let svd = lstsq_min_norm(&a, &y).unwrap();
        let ne = solve_normal_equations(&a, &y).unwrap();
        assert_eq!(svd.rank, 3);
        for (p, q) in svd.coefficients.iter().zip(&ne.coefficients) {
            assert_relative_eq!(*p, *q, max_relative = 1e-7);
        }
    }

    #[test]
    fn square_system_interpolates() {
        let rows = vec![
            vec![1.0, 1.0, 1.0],
            vec![1.0, 2.0, 4.0],
            vec![1.0, 3.0, 9.0],
        ];
        let a = ColMatrix::from_rows(&rows).unwrap();
        // y = 2 - x + 0.5 x²
        let y = vec![1.5, 2.0, 3.5];
        let sol = lstsq_min_norm(&a, &y).unwrap();
        assert_relative_eq!(sol.coefficients[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(sol.coefficients[1], -1.0, epsilon = 1e-12);
        assert_relative_eq!(sol.coefficients[2], 0.5, epsilon = 1e-12);
        assert!(sol.residual_norm < 1e-12);
    }

    #[test]
    fn duplicated_column_gives_split_coefficient() {
        // columns [1, x, x]: minimal norm splits the x weight evenly
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![1.0, i as f64, i as f64]).collect();
        let y: Vec<f64> = (0..6).map(|i| 3.0 + 2.0 * i as f64).collect();
        let sol = lstsq_min_norm(&ColMatrix::from_rows(&rows).unwrap(), &y).unwrap();
        assert_eq!(sol.rank, 2);
        assert_relative_eq!(sol.coefficients[0], 3.0, epsilon = 1e-10);
        assert_relative_eq!(sol.coefficients[1], 1.0, epsilon = 1e-10);
        assert_relative_eq!(sol.coefficients[2], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn normal_equations_reject_singular_gram() {
        let rows: Vec<Vec<f64>> = (0..4).map(|i| vec![1.0, i as f64, 2.0 * i as f64]).collect();
        let a = ColMatrix::from_rows(&rows).unwrap();
        assert!(solve_normal_equations(&a, &[0.0, 1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let a = ColMatrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let sol = lstsq_min_norm(&a, &[1.0, 2.0]).unwrap();
        assert_eq!(sol.rank, 0);
        assert_eq!(sol.coefficients, vec![0.0, 0.0]);
    }

    #[test]
    fn cholesky_accepts_singular_psd_correlation() {
        let m = [1.0, 1.0, 1.0, 1.0];
        let l = cholesky(&m, 2, 1e-12).unwrap();
        assert_eq!(l, vec![1.0, 0.0, 1.0, 0.0]);
        let bad = [1.0, 2.0, 2.0, 1.0];
        assert!(cholesky(&bad, 2, 1e-12).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let rows: Vec<Vec<f32>> = (0..5).map(|i| vec![1.0, i as f32]).collect();
        let y: Vec<f32> = (0..5).map(|i| 1.0 + 0.5 * i as f32).collect();
        let sol = lstsq_min_norm(&ColMatrix::from_rows(&rows).unwrap(), &y).unwrap();
        assert!((sol.coefficients[1] - 0.5).abs() < 1e-5);
    }
}
