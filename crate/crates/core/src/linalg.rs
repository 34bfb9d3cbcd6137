//! Small dense linear algebra for the d-dimensional asset block
//! (d is a handful at most; everything is row-major `Vec<f64>`).

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out = M x` for row-major `m` of shape n×n.
pub fn matvec(m: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for i in 0..n {
        out[i] = dot(&m[i * n..(i + 1) * n], x);
    }
}

/// Solves `M x = b` in place by LU with partial pivoting; `m` and `b` are
/// clobbered and `b` holds the solution on return.
pub fn solve_in_place(m: &mut [f64], b: &mut [f64]) -> Result<()> {
    let n = b.len();
    debug_assert_eq!(m.len(), n * n);
    for col in 0..n {
        // Pivot.
        let mut pivot_row = col;
        let mut pivot_val = m[col * n + col].abs();
        for row in col + 1..n {
            let v = m[row * n + col].abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = row;
            }
        }
        if pivot_val == 0.0 || !pivot_val.is_finite() {
            return Err(Error::Model(format!(
                "singular or non-finite volatility matrix (pivot {pivot_val} at column {col})"
            )));
        }
        if pivot_row != col {
            for k in 0..n {
                m.swap(col * n + k, pivot_row * n + k);
            }
            b.swap(col, pivot_row);
        }
        let inv = 1.0 / m[col * n + col];
        for row in col + 1..n {
            let factor = m[row * n + col] * inv;
            if factor == 0.0 {
                continue;
            }
            m[row * n + col] = 0.0;
            for k in col + 1..n {
                m[row * n + k] -= factor * m[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= m[row * n + k] * b[k];
        }
        b[row] = acc / m[row * n + row];
    }
    Ok(())
}

/// Principal (symmetric positive semidefinite) square root of `I - ρρ'`.
///
/// `ρρ'` is rank one, so the root is `I - τ ρρ'` with
/// `τ = (1 - sqrt(1 - ρ'ρ)) / ρ'ρ`, which avoids a general matrix square
/// root. Requires `ρ'ρ <= 1`.
pub fn orthogonal_correlation_root(rho: &[f64]) -> Result<Vec<f64>> {
    let d = rho.len();
    let s = dot(rho, rho);
    if s > 1.0 + 1e-12 {
        return Err(Error::Model(format!("ρ'ρ = {s} exceeds 1")));
    }
    let s = s.min(1.0);
    let tau = if s < 1e-14 {
        0.5 // limit of (1 - sqrt(1-s))/s as s -> 0
    } else {
        (1.0 - (1.0 - s).sqrt()) / s
    };
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = if i == j { 1.0 } else { 0.0 } - tau * rho[i] * rho[j];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_2x2() {
        let mut m = vec![4.0, 1.0, 2.0, 3.0];
        let mut b = vec![1.0, 5.0];
        solve_in_place(&mut m, &mut b).unwrap();
        // x = (−0.2, 1.8)
        assert!((b[0] + 0.2).abs() < 1e-14);
        assert!((b[1] - 1.8).abs() < 1e-14);
    }

    #[test]
    fn singular_rejected() {
        let mut m = vec![1.0, 2.0, 2.0, 4.0];
        let mut b = vec![1.0, 1.0];
        assert!(solve_in_place(&mut m, &mut b).is_err());
    }

    #[test]
    fn correlation_root_squares_back() {
        let rho = vec![-0.5, 0.3, 0.1];
        let root = orthogonal_correlation_root(&rho).unwrap();
        let d = rho.len();
        // root * root should equal I − ρρ'.
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += root[i * d + k] * root[k * d + j];
                }
                let expect = if i == j { 1.0 } else { 0.0 } - rho[i] * rho[j];
                assert!((acc - expect).abs() < 1e-12, "({i},{j})");
            }
        }
    }

    #[test]
    fn correlation_root_scalar_case() {
        let root = orthogonal_correlation_root(&[-0.5]).unwrap();
        assert!((root[0] - (1.0f64 - 0.25).sqrt()).abs() < 1e-15);
    }
}
