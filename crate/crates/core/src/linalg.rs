//! Dense helpers for the small symmetric systems used by pseudo-inverse
//! aggregation. Matrices are row-major `n * n` slices.

use alloc::vec;
use alloc::vec::Vec;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// In-place LDLᵀ factorization of a symmetric matrix.
///
/// Returns `None` as soon as a pivot drops below `min_pivot`; on success
/// the strictly lower triangle holds L and the diagonal holds D.
fn ldl_factor(a: &mut [f64], n: usize, min_pivot: f64) -> Option<()> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            let l = a[j * n + k];
            d -= l * l * a[k * n + k];
        }
        if d.is_nan() || d < min_pivot {
            return None;
        }
        a[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k] * a[k * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    Some(())
}

fn ldl_solve(f: &[f64], n: usize, rhs: &mut [f64]) {
    for i in 0..n {
        let mut s = rhs[i];
        for k in 0..i {
            s -= f[i * n + k] * rhs[k];
        }
        rhs[i] = s;
    }
    for i in 0..n {
        rhs[i] /= f[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = rhs[i];
        for k in (i + 1)..n {
            s -= f[k * n + i] * rhs[k];
        }
        rhs[i] = s;
    }
}

/// Solves `G w = rhs` for a symmetric positive semi-definite Gram matrix.
///
/// When any pivot falls below `ridge_epsilon * trace(G) / n` the system is
/// re-solved as `(G + λI) w = rhs` with λ equal to that threshold. The
/// boolean reports whether the ridge was applied.
pub(crate) fn solve_gram(gram: &[f64], n: usize, rhs: &[f64], ridge_epsilon: f64) -> (Vec<f64>, bool) {
    let trace: f64 = (0..n).map(|i| gram[i * n + i]).sum();
    let lambda = ridge_epsilon * trace / n as f64;

    let mut f = gram.to_vec();
    let regularized = if ldl_factor(&mut f, n, lambda).is_some() {
        false
    } else {
        f.copy_from_slice(gram);
        for i in 0..n {
            f[i * n + i] += lambda;
        }
        // G + λI is positive definite with every pivot ≥ λ in exact arithmetic.
        ldl_factor(&mut f, n, f64::MIN_POSITIVE).expect("ridge-regularized Gram matrix must factor");
        true
    };
    let mut w = rhs.to_vec();
    ldl_solve(&f, n, &mut w);
    (w, regularized)
}

/// `X X^T` for the given rows.
pub(crate) fn gram(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = dot(&rows[i], &rows[j]);
            g[i * n + j] = v;
            g[j * n + i] = v;
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd_system() {
        // [[4,2],[2,3]] w = [2,1] -> w = [0.5, 0]
        let g = [4.0, 2.0, 2.0, 3.0];
        let (w, reg) = solve_gram(&g, 2, &[2.0, 1.0], 1e-9);
        assert!(!reg);
        assert!((w[0] - 0.5).abs() < 1e-15 && w[1].abs() < 1e-15);
    }

    #[test]
    fn singular_system_takes_ridge() {
        let g = [1.0, 1.0, 1.0, 1.0];
        let (w, reg) = solve_gram(&g, 2, &[1.0, 1.0], 1e-9);
        assert!(reg);
        // (11^T + λI)^{-1} 1 = 1 / (2 + λ); the null direction (1,-1) is
        // only resolved to ~eps/λ.
        let expect = 1.0 / (2.0 + 1e-9);
        assert!((w[0] + w[1] - 2.0 * expect).abs() < 1e-12);
        assert!((w[0] - expect).abs() < 1e-6 && (w[1] - expect).abs() < 1e-6);
    }
}
