//! Symmetric tridiagonal eigenvalue machinery: Sturm-sequence bisection for
//! extremal (or index-selected) eigenvalues and shifted tridiagonal solves
//! for inverse iteration. Deterministic, no external solver.

/// Symmetric tridiagonal matrix; `off.len() == diag.len() - 1`.
#[derive(Debug, Clone)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    /// Number of eigenvalues strictly below `x` (Sturm count via LDLᵗ pivots).
    pub fn count_below(&self, x: f64) -> usize {
        let n = self.n();
        let mut count = 0usize;
        let mut t = self.diag[0] - x;
        if t < 0.0 {
            count += 1;
        }
        for i in 1..n {
            let e = self.off[i - 1];
            let denom = if t == 0.0 {
                // Perturb a vanishing pivot; the count is insensitive to the
                // direction for simple spectra.
                f64::MIN_POSITIVE.sqrt()
            } else {
                t
            };
            t = self.diag[i] - x - e * e / denom;
            if t < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// Gershgorin bounds on the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.n();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut r = 0.0;
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < n {
                r += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// k-th smallest eigenvalue (0-based) by bisection, converged to `tol`
    /// relative to the eigenvalue's own magnitude (not the matrix scale,
    /// which grows like 1/h² for discretized operators).
    pub fn eigenvalue_by_index(&self, k: usize, tol: f64) -> f64 {
        let n = self.n();
        assert!(k < n);
        let (mut lo, mut hi) = self.gershgorin();
        loop {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if hi - lo <= tol * mid.abs().max(1.0) {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Largest eigenvalue by bisection.
    pub fn largest_eigenvalue(&self, tol: f64) -> f64 {
        self.eigenvalue_by_index(self.n() - 1, tol)
    }

    /// Solves `(T - shift I) x = rhs` by tridiagonal LU with partial pivoting.
    pub fn solve_shifted(&self, shift: f64, rhs: &[f64]) -> Vec<f64> {
        solve_general_shifted(&self.off, &self.diag, &self.off, shift, rhs)
    }
}

/// Solves a general tridiagonal system `(A - shift I) x = rhs` by LU with
/// partial pivoting. `dl` is the sub-diagonal (coupling row i to i-1), `du`
/// the super-diagonal; both have length `n - 1`.
pub fn solve_general_shifted(
    dl: &[f64],
    d: &[f64],
    du: &[f64],
    shift: f64,
    rhs: &[f64],
) -> Vec<f64> {
    let n = d.len();
    assert_eq!(rhs.len(), n);
    let mut dl: Vec<f64> = dl.to_vec();
    let mut d: Vec<f64> = d.iter().map(|&v| v - shift).collect();
    let mut du: Vec<f64> = du.to_vec();
    let mut du2 = vec![0.0; n.saturating_sub(2)];
    let mut x = rhs.to_vec();

    for i in 0..n - 1 {
        if dl[i].abs() > d[i].abs() {
            // Swap rows i and i+1.
            std::mem::swap(&mut d[i], &mut dl[i]);
            let upper = du[i];
            du[i] = d[i + 1];
            d[i + 1] = upper;
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] = 0.0;
            }
            x.swap(i, i + 1);
        }
        let pivot = if d[i] != 0.0 { d[i] } else { f64::MIN_POSITIVE.sqrt() };
        let factor = dl[i] / pivot;
        d[i + 1] -= factor * du[i];
        if i + 2 < n {
            du[i + 1] -= factor * du2[i];
        }
        x[i + 1] -= factor * x[i];
    }

    let mut out = vec![0.0; n];
    let dn = if d[n - 1] != 0.0 { d[n - 1] } else { f64::MIN_POSITIVE.sqrt() };
    out[n - 1] = x[n - 1] / dn;
    if n >= 2 {
        let i = n - 2;
        let di = if d[i] != 0.0 { d[i] } else { f64::MIN_POSITIVE.sqrt() };
        out[i] = (x[i] - du[i] * out[i + 1]) / di;
    }
    for i in (0..n.saturating_sub(2)).rev() {
        let di = if d[i] != 0.0 { d[i] } else { f64::MIN_POSITIVE.sqrt() };
        out[i] = (x[i] - du[i] * out[i + 1] - du2[i] * out[i + 2]) / di;
    }
    out
}
