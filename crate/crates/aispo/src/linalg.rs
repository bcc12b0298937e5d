//! Dense linear solves for the exact oracle.
//!
//! Desk-scale systems (a few hundred unknowns) are solved by LU with partial
//! pivoting. The resolvent systems `(I - gamma * P)` arising from tabular
//! policy evaluation are well conditioned for `gamma < 1`, so no iterative
//! refinement is needed.

use crate::error::{Error, Result};

/// Solve `a * x = b` for a row-major square matrix `a` of side `n`.
///
/// `a` and `b` are consumed as working storage copies; the inputs are not
/// modified. Fails with a numeric error if a pivot collapses to zero, which
/// for the oracle's resolvent systems indicates an internal bug rather than
/// a user input problem.
pub fn solve_dense(a: &[f64], b: &[f64], n: usize) -> Result<Vec<f64>> {
    assert_eq!(a.len(), n * n, "matrix/side mismatch");
    assert_eq!(b.len(), n, "rhs/side mismatch");
    let mut m = a.to_vec();
    let mut x = b.to_vec();

    for col in 0..n {
        // Partial pivoting: pick the largest magnitude entry in this column.
        let mut pivot_row = col;
        let mut pivot_mag = m[col * n + col].abs();
        for row in (col + 1)..n {
            let mag = m[row * n + col].abs();
            if mag > pivot_mag {
                pivot_mag = mag;
                pivot_row = row;
            }
        }
        if pivot_mag == 0.0 || !pivot_mag.is_finite() {
            return Err(Error::numeric(format!(
                "singular linear system: pivot {pivot_mag} at column {col}"
            )));
        }
        if pivot_row != col {
            for k in 0..n {
                m.swap(col * n + k, pivot_row * n + k);
            }
            x.swap(col, pivot_row);
        }

        let pivot = m[col * n + col];
        for row in (col + 1)..n {
            let factor = m[row * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            m[row * n + col] = 0.0;
            for k in (col + 1)..n {
                m[row * n + k] -= factor * m[col * n + k];
            }
            x[row] -= factor * x[col];
        }
    }

    // Back substitution.
    for col in (0..n).rev() {
        let mut acc = x[col];
        for k in (col + 1)..n {
            acc -= m[col * n + k] * x[k];
        }
        x[col] = acc / m[col * n + col];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_identity() {
        let a = vec![1.0, 0.0, 0.0, 1.0];
        let b = vec![3.0, -2.0];
        let x = solve_dense(&a, &b, 2).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn solves_known_system() {
        // [2 1; 1 3] x = [5; 10] -> x = [1, 3]
        let a = vec![2.0, 1.0, 1.0, 3.0];
        let b = vec![5.0, 10.0];
        let x = solve_dense(&a, &b, 2).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn pivoting_handles_zero_leading_entry() {
        // Leading zero forces a row swap.
        let a = vec![0.0, 1.0, 1.0, 0.0];
        let b = vec![7.0, 4.0];
        let x = solve_dense(&a, &b, 2).unwrap();
        assert!((x[0] - 4.0).abs() < 1e-12);
        assert!((x[1] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn singular_matrix_is_an_error() {
        let a = vec![1.0, 2.0, 2.0, 4.0];
        let b = vec![1.0, 2.0];
        assert!(solve_dense(&a, &b, 2).is_err());
    }

    #[test]
    fn residual_is_machine_precision_on_random_system() {
        // Fixed pseudo-random 40x40 system; check ||Ax - b||_inf.
        let n = 40;
        let mut state = 0x243F6A8885A308D3u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let a: Vec<f64> = (0..n * n).map(|_| next()).collect();
        // Diagonal dominance keeps the test system comfortably nonsingular.
        let mut a_dd = a.clone();
        for i in 0..n {
            a_dd[i * n + i] += 4.0;
        }
        let b: Vec<f64> = (0..n).map(|_| next()).collect();
        let x = solve_dense(&a_dd, &b, n).unwrap();
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += a_dd[i * n + j] * x[j];
            }
            assert!((acc - b[i]).abs() < 1e-11);
        }
    }
}
