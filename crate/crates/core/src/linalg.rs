//! Dense Cholesky for the small symmetric positive-definite systems that come
//! out of the Gaussian signal model (one row per sharing platform).

/// Stack capacity; larger systems fall back to a heap buffer.
const INLINE: usize = 16;

/// Returns `bᵀ A⁻¹ b` for symmetric positive-definite `A`, where `A` is given
/// through `entry(r, c)` for `r >= c` (lower triangle only).
///
/// Returns `None` when a pivot drops to `pivot_tol` or below.
pub(crate) fn quadratic_form_inverse<F>(n: usize, entry: F, b: &[f64], pivot_tol: f64) -> Option<f64>
where
    F: Fn(usize, usize) -> f64,
{
    debug_assert_eq!(b.len(), n);
    if n == 0 {
        return Some(0.0);
    }
    if n <= INLINE {
        let mut l = [0.0f64; INLINE * INLINE];
        let mut z = [0.0f64; INLINE];
        factor_and_solve(n, &entry, b, pivot_tol, &mut l[..n * n], &mut z[..n])
    } else {
        let mut l = vec![0.0f64; n * n];
        let mut z = vec![0.0f64; n];
        factor_and_solve(n, &entry, b, pivot_tol, &mut l, &mut z)
    }
}

fn factor_and_solve<F>(
    n: usize,
    entry: &F,
    b: &[f64],
    pivot_tol: f64,
    l: &mut [f64],
    z: &mut [f64],
) -> Option<f64>
where
    F: Fn(usize, usize) -> f64,
{
    // A = L Lᵀ, row-major lower factor.
    for r in 0..n {
        for c in 0..=r {
            let mut s = entry(r, c);
            for k in 0..c {
                s -= l[r * n + k] * l[c * n + k];
            }
            if r == c {
                if s <= pivot_tol {
                    return None;
                }
                l[r * n + r] = s.sqrt();
            } else {
                l[r * n + c] = s / l[c * n + c];
            }
        }
    }
    // bᵀ A⁻¹ b = |L⁻¹ b|².
    let mut acc = 0.0;
    for r in 0..n {
        let mut s = b[r];
        for k in 0..r {
            s -= l[r * n + k] * z[k];
        }
        z[r] = s / l[r * n + r];
        acc += z[r] * z[r];
    }
    Some(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_explicit_two_by_two_inverse() {
        // A = [[3, 1], [1, 3]], b = (1, 1): A⁻¹ = [[3, -1], [-1, 3]] / 8, so bᵀA⁻¹b = 4/8.
        let a = [[3.0, 1.0], [1.0, 3.0]];
        let q = quadratic_form_inverse(2, |r, c| a[r][c], &[1.0, 1.0], 1e-12).unwrap();
        assert!((q - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_indefinite_matrix() {
        let a = [[1.0, 2.0], [2.0, 1.0]];
        assert!(quadratic_form_inverse(2, |r, c| a[r][c], &[1.0, 0.0], 1e-12).is_none());
    }

    #[test]
    fn heap_path_agrees_with_diagonal_closed_form() {
        let n = 20;
        let b: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
        let q = quadratic_form_inverse(n, |r, c| if r == c { 2.0 + r as f64 } else { 0.0 }, &b, 1e-12)
            .unwrap();
        let expected: f64 = b.iter().enumerate().map(|(i, v)| v * v / (2.0 + i as f64)).sum();
        assert!((q - expected).abs() < 1e-12);
    }
}
