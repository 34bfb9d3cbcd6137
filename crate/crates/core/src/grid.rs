//! Spatial grids and the conservative discretization of the reduced state
//! generator `ℒ = (A/2) ∂²_yy + B ∂_y` in its self-adjoint form
//! `(1/m̂) d/dy ( (A m̂ / 2) dv/dy )`.
//!
//! The eigenproblem and the horizon PDE share this assembly so that the
//! long-horizon limit of the finite-horizon policy reproduces the long-run
//! policy at the level of the discrete fixed point, not just up to
//! independent discretization errors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DerivedCoefficients;
use crate::quad;

/// Truncation window `(lo, hi)` inside the state interval; the grid nodes are
/// strictly interior and homogeneous boundary data are applied at the
/// endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Window of twice the width with the same midpoint.
    pub fn doubled(&self) -> Window {
        let half = 0.5 * self.width();
        Window {
            lo: self.lo - half,
            hi: self.hi + half,
        }
    }

    pub fn contains(&self, y: f64) -> bool {
        y > self.lo && y < self.hi
    }
}

/// One-dimensional grid: strictly increasing nodes interior to its window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub window: Window,
    pub nodes: Vec<f64>,
}

impl Grid1D {
    /// Uniform grid of `n` interior nodes on `window`.
    pub fn uniform(window: Window, n: usize) -> Result<Self> {
        if n < 16 {
            return Err(Error::Invalid(format!("grid needs at least 16 nodes (got {n})")));
        }
        if !(window.lo < window.hi) || !window.lo.is_finite() || !window.hi.is_finite() {
            return Err(Error::Invalid(format!(
                "bad window ({}, {})",
                window.lo, window.hi
            )));
        }
        let h = window.width() / (n as f64 + 1.0);
        let nodes = (0..n).map(|i| window.lo + (i as f64 + 1.0) * h).collect();
        Ok(Grid1D { window, nodes })
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    /// Spacing, provided the grid is uniform to rounding.
    pub fn uniform_spacing(&self) -> Option<f64> {
        let n = self.nodes.len();
        if n < 2 {
            return None;
        }
        let h = (self.nodes[n - 1] - self.nodes[0]) / (n as f64 - 1.0);
        for w in self.nodes.windows(2) {
            if ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0) {
                return None;
            }
        }
        Some(h)
    }

    /// Index of the left node of the interval containing `y`, clamped to the
    /// node range; the second value is the interpolation weight in [0, 1].
    pub fn locate(&self, y: f64) -> (usize, f64) {
        let n = self.nodes.len();
        if y <= self.nodes[0] {
            return (0, 0.0);
        }
        if y >= self.nodes[n - 1] {
            return (n - 2, 1.0);
        }
        let mut lo = 0usize;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.nodes[mid] <= y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = (y - self.nodes[lo]) / (self.nodes[lo + 1] - self.nodes[lo]);
        (lo, t)
    }

    /// Linear interpolation of nodal values at `y` (clamped at the ends).
    pub fn interp(&self, values: &[f64], y: f64) -> f64 {
        let (i, t) = self.locate(y);
        values[i] * (1.0 - t) + values[i + 1] * t
    }

    /// Composite Simpson integration of nodal values (pairs of intervals,
    /// trapezoid on a leftover panel). Falls back to the trapezoid rule for
    /// non-uniform grids.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        let n = self.nodes.len();
        debug_assert_eq!(values.len(), n);
        if n < 3 || self.uniform_spacing().is_none() {
            let mut acc = 0.0;
            for i in 0..n - 1 {
                acc += 0.5 * (values[i] + values[i + 1]) * (self.nodes[i + 1] - self.nodes[i]);
            }
            return acc;
        }
        let h = (self.nodes[n - 1] - self.nodes[0]) / (n as f64 - 1.0);
        let mut acc = 0.0;
        let mut i = 0;
        while i + 2 < n {
            acc += h / 3.0 * (values[i] + 4.0 * values[i + 1] + values[i + 2]);
            i += 2;
        }
        if i + 1 < n {
            acc += 0.5 * h * (values[i] + values[i + 1]);
        }
        acc
    }
}

/// Log-derivative of positive nodal values by centered differences on the
/// interior and one-sided differences at the two ends.
pub fn log_derivative(nodes: &[f64], log_values: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    out[0] = (log_values[1] - log_values[0]) / (nodes[1] - nodes[0]);
    out[n - 1] = (log_values[n - 1] - log_values[n - 2]) / (nodes[n - 1] - nodes[n - 2]);
    for i in 1..n - 1 {
        out[i] = (log_values[i + 1] - log_values[i - 1]) / (nodes[i + 1] - nodes[i - 1]);
    }
    out
}

// ---------------------------------------------------------------------------
// Conservative discretization
// ---------------------------------------------------------------------------

/// Conservative finite-volume discretization of `ℒ + c` on the interior
/// nodes of a window, with the speed-density weights carried in log space so
/// that wide windows (where `m̂` underflows) stay well conditioned.
///
/// Row `j` of the operator reads
/// `sub_j v_{j-1} - (sub_j + sup_j) v_j + sup_j v_{j+1} + c_j v_j`
/// with couplings `sub_j = (A_j / 2 h_l h̄) e^{G_{j-1/2} - G_j}` (and
/// symmetrically for `sup`), where `G = ∫ 2B/A` from the anchor.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub grid: Grid1D,
    /// `G` at the nodes.
    pub g_nodes: Vec<f64>,
    /// `G` at the n+1 midpoints (boundary midpoints included).
    pub g_mid: Vec<f64>,
    pub a_nodes: Vec<f64>,
    pub c_nodes: Vec<f64>,
    pub sub: Vec<f64>,
    pub sup: Vec<f64>,
}

impl Discretization {
    /// Assembles on `n` uniform interior nodes of `window`, refined `refine`-fold.
    pub fn assemble(
        coeffs: &DerivedCoefficients,
        window: Window,
        n: usize,
        refine: usize,
    ) -> Result<Self> {
        let refine = refine.max(1);
        let n_fine = refine * (n + 1) - 1;
        let grid = Grid1D::uniform(window, n_fine)?;
        if !coeffs.model.domain.contains(window.lo) && window.lo.is_finite() {
            // Window endpoints may touch the domain boundary only if open.
            if window.lo < coeffs.model.domain.lo {
                return Err(Error::Invalid(format!(
                    "window lower end {} lies outside the state interval",
                    window.lo
                )));
            }
        }
        if window.hi > coeffs.model.domain.hi {
            return Err(Error::Invalid(format!(
                "window upper end {} lies outside the state interval",
                window.hi
            )));
        }
        let h = window.width() / (n_fine as f64 + 1.0);

        // Cumulative log-weight G over nodes and midpoints: the merged point
        // sequence lo + k·h/2 for k = 1 .. 2(n+1)-1.
        let total = 2 * (n_fine + 1) - 1;
        let points: Vec<f64> = (1..=total).map(|k| window.lo + 0.5 * h * k as f64).collect();
        let mut g_all = vec![0.0; total];
        let integrand = |z: f64| -> f64 {
            let b = coeffs.cap_b(z).unwrap_or(f64::NAN);
            2.0 * b / coeffs.cap_a(z)
        };
        // Anchor at y0, then march segment by segment.
        let first = quad::integrate(&integrand, coeffs.y0, points[0], coeffs.quad_tol);
        if let Some(x) = first.non_finite_at {
            return Err(Error::domain(format!("2B/A near y = {x}"), "non-finite value"));
        }
        g_all[0] = first.value;
        for k in 1..total {
            let seg = quad::integrate(&integrand, points[k - 1], points[k], coeffs.quad_tol);
            if let Some(x) = seg.non_finite_at {
                return Err(Error::domain(format!("2B/A near y = {x}"), "non-finite value"));
            }
            g_all[k] = g_all[k - 1] + seg.value;
        }

        let mut g_mid = Vec::with_capacity(n_fine + 1);
        let mut g_nodes = Vec::with_capacity(n_fine);
        for (k, g) in g_all.iter().enumerate() {
            if k % 2 == 0 {
                g_mid.push(*g);
            } else {
                g_nodes.push(*g);
            }
        }

        let mut a_nodes = Vec::with_capacity(n_fine);
        let mut c_nodes = Vec::with_capacity(n_fine);
        for &y in &grid.nodes {
            let a2 = coeffs.cap_a(y);
            if !(a2 > 0.0) || !a2.is_finite() {
                return Err(Error::Model(format!("A({y}) = {a2} is not positive")));
            }
            a_nodes.push(a2);
            c_nodes.push(coeffs.c(y)?);
        }

        let inv_h2 = 1.0 / (h * h);
        let mut sub = Vec::with_capacity(n_fine);
        let mut sup = Vec::with_capacity(n_fine);
        for j in 0..n_fine {
            let scale = 0.5 * a_nodes[j] * inv_h2;
            sub.push(scale * (g_mid[j] - g_nodes[j]).exp());
            sup.push(scale * (g_mid[j + 1] - g_nodes[j]).exp());
        }

        Ok(Discretization {
            grid,
            g_nodes,
            g_mid,
            a_nodes,
            c_nodes,
            sub,
            sup,
        })
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    /// Symmetric tridiagonal representation of `ℒ + c` with homogeneous
    /// Dirichlet data at the window endpoints, obtained by the similarity
    /// `u = sqrt(m̂) v`.
    pub fn symmetric_form(&self) -> crate::tridiag::SymTridiag {
        let n = self.n();
        let diag: Vec<f64> = (0..n)
            .map(|j| self.c_nodes[j] - self.sub[j] - self.sup[j])
            .collect();
        let off: Vec<f64> = (0..n - 1)
            .map(|j| (self.sup[j] * self.sub[j + 1]).sqrt())
            .collect();
        crate::tridiag::SymTridiag { diag, off }
    }

    /// `ln m̂` at node `j` (up to the anchoring at `y0`).
    pub fn log_m_hat(&self, j: usize) -> f64 {
        self.g_nodes[j] - self.a_nodes[j].ln()
    }

    /// Converts the symmetric-form eigenvector `u` back to `ln v̂` via
    /// `v = u / sqrt(m̂)`.
    pub fn log_v_from_symmetric(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(j, &uj)| uj.ln() - 0.5 * self.log_m_hat(j))
            .collect()
    }
}
