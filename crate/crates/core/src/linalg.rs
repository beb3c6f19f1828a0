//! Small dense linear algebra used for stationary distributions.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Solves `a x = b` for square row-major `a` by Gaussian elimination with
/// partial pivoting. Consumes its inputs.
pub fn solve_dense<T: Scalar>(mut a: Vec<T>, mut b: Vec<T>) -> Result<Vec<T>> {
    let n = b.len();
    if a.len() != n * n {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} entries, expected {}",
            a.len(),
            n * n
        )));
    }
    let singular = T::epsilon() * T::of_usize(n.max(1)) * T::lit(16.0);
    for col in 0..n {
        let (piv, piv_abs) = (col..n)
            .map(|r| (r, a[r * n + col].abs()))
            .fold((col, -T::one()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if piv_abs <= singular {
            return Err(Error::Numerical(format!("singular matrix at column {col}")));
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            b.swap(piv, col);
        }
        let inv = T::one() / a[col * n + col];
        let (upper, lower) = a.split_at_mut((col + 1) * n);
        let pivot_row = &upper[col * n..];
        let b_col = b[col];
        for r in 0..(n - col - 1) {
            let row = &mut lower[r * n..(r + 1) * n];
            let f = row[col] * inv;
            if f == T::zero() {
                continue;
            }
            row[col] = T::zero();
            for k in (col + 1)..n {
                row[k] -= f * pivot_row[k];
            }
            b[col + 1 + r] -= f * b_col;
        }
    }
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in (col + 1)..n {
            s -= a[col * n + k] * b[k];
        }
        b[col] = s / a[col * n + col];
    }
    Ok(b)
}

/// Stationary vector of an irreducible row-stochastic matrix (row-major,
/// `n x n`) from `(P^T - I) pi = 0` with the last equation replaced by the
/// normalization `sum(pi) = 1`.
pub fn stationary_dense<T: Scalar>(p: &[T], n: usize) -> Result<Vec<T>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut a = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            // a[j][i] = P[i][j] - delta_ij
            a[j * n + i] = p[i * n + j] - if i == j { T::one() } else { T::zero() };
        }
    }
    for k in 0..n {
        a[(n - 1) * n + k] = T::one();
    }
    let mut rhs = vec![T::zero(); n];
    rhs[n - 1] = T::one();
    let mut pi = solve_dense(a, rhs)?;
    // clip roundoff negatives and renormalize
    for v in pi.iter_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    let s: T = pi.iter().copied().sum();
    for v in pi.iter_mut() {
        *v /= s;
    }
    Ok(pi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        // 2x + y = 3, x + 3y = 5 -> x = 0.8, y = 1.4
        let x = solve_dense(vec![2.0, 1.0, 1.0, 3.0], vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8f64).abs() < 1e-14);
        assert!((x[1] - 1.4f64).abs() < 1e-14);
    }

    #[test]
    fn needs_pivoting() {
        let x = solve_dense(vec![0.0, 1.0, 1.0, 0.0], vec![2.0, 7.0]).unwrap();
        assert_eq!(x, vec![7.0, 2.0]);
    }

    #[test]
    fn singular_is_error() {
        assert!(solve_dense(vec![1.0, 2.0, 2.0, 4.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn two_state_stationary() {
        // a = P(0->1), b = P(1->0): pi = (b, a) / (a + b)
        let (a, b) = (0.3f64, 0.2f64);
        let pi = stationary_dense(&[1.0 - a, a, b, 1.0 - b], 2).unwrap();
        assert!((pi[0] - 0.4).abs() < 1e-14);
        assert!((pi[1] - 0.6).abs() < 1e-14);
    }
}
