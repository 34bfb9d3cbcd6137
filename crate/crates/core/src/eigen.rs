//! Principal eigenpair of the long-run equation `ℒ v + c v = λ v` and the
//! invariant density of the state under the long-run measure.
//!
//! The operator is discretized in self-adjoint form (weighted by the speed
//! density m̂) with homogeneous Dirichlet data at the truncated window; the
//! extremal eigenvalue of the resulting symmetric tridiagonal pencil comes
//! from Sturm-sequence bisection, the eigenvector from inverse iteration.
//! The solve happens on an internally refined grid (factor `refine`) and the
//! eigenvalue is Richardson-extrapolated from the two finest levels, which
//! buys the accuracy the acceptance tolerances ask for without leaving the
//! tridiagonal world.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{log_derivative, Discretization, Grid1D, Window};
use crate::model::DerivedCoefficients;
use crate::tridiag::solve_general_shifted;
use crate::wellposed::{improper_integral, ImproperOutcome, TruncationPolicy};

#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    /// Internal grid refinement factor (>= 2).
    pub refine: usize,
    /// Bisection tolerance on the tridiagonal pencil.
    pub pencil_tol: f64,
    /// Check that the eigenvalue is stable under doubling the window.
    pub check_window: bool,
    /// Maximum admissible eigenvalue shift under window doubling.
    pub window_shift_tol: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            refine: 4,
            pencil_tol: 1e-12,
            check_window: true,
            window_shift_tol: 1e-8,
        }
    }
}

/// Principal eigenpair and derived long-run quantities on a grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenResult {
    /// Principal eigenvalue (per unit time), Richardson-extrapolated.
    pub lambda_c: f64,
    pub window: Window,
    pub grid: Grid1D,
    /// Normalized eigenfunction values, strictly positive on the grid.
    pub v_hat: Vec<f64>,
    /// `ln v̂`, the robust representation the solvers interpolate.
    pub log_v_hat: Vec<f64>,
    /// `v̂_y / v̂` by centered differences of `ln v̂` (one-sided at the ends).
    pub log_deriv: Vec<f64>,
    /// Invariant density `v̂² m̂`, normalized to unit grid integral.
    pub invariant_density: Vec<f64>,
    /// Max residual of the eigen equation under an independent
    /// central-difference evaluation on the grid.
    pub residual: f64,
    /// Observed |λ(W) − λ(2W)| when the window check ran.
    pub lambda_window_shift: Option<f64>,
    /// Refinement factor used; the PDE layer reuses it so both share one
    /// discrete operator family.
    pub refine: usize,
}

struct LevelSolve {
    lambda: f64,
    disc: Discretization,
    /// Eigenvector in the physical v-coordinates, positive, max-normalized.
    v: Vec<f64>,
}

fn solve_level(
    coeffs: &DerivedCoefficients,
    window: Window,
    n_user: usize,
    refine: usize,
    pencil_tol: f64,
    want_vector: bool,
) -> Result<LevelSolve> {
    let disc = Discretization::assemble(coeffs, window, n_user, refine)?;
    let sym = disc.symmetric_form();
    let lambda = sym.largest_eigenvalue(pencil_tol);
    let v = if want_vector {
        principal_vector(&disc, lambda)?
    } else {
        Vec::new()
    };
    Ok(LevelSolve { lambda, disc, v })
}

/// Inverse iteration for the extremal eigenvector, run on the conservative
/// matrix in the physical v-coordinates. (The symmetric gauge `u = sqrt(m̂) v`
/// decays much faster toward the window ends than v itself, so an iteration
/// there bottoms out at its roundoff floor well inside the window and the
/// conversion back to v amplifies that noise by 1/sqrt(m̂).) A far-tail
/// boundary-value cleanup remains as a fallback for extreme windows.
fn principal_vector(disc: &Discretization, lambda: f64) -> Result<Vec<f64>> {
    let n = disc.n();
    let d: Vec<f64> = (0..n)
        .map(|j| disc.c_nodes[j] - disc.sub[j] - disc.sup[j])
        .collect();
    let dl: Vec<f64> = (1..n).map(|j| disc.sub[j]).collect();
    let du: Vec<f64> = (0..n - 1).map(|j| disc.sup[j]).collect();

    let scale = (0..n)
        .map(|j| d[j].abs() + disc.sub[j] + disc.sup[j])
        .fold(1.0f64, f64::max);
    let shift = lambda + 1e-9 * scale;
    let mut v = vec![1.0; n];
    for _ in 0..3 {
        let mut next = solve_general_shifted(&dl, &d, &du, shift, &v);
        let max = next.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        if !(max > 0.0) || !max.is_finite() {
            return Err(Error::Solver("inverse iteration collapsed".into()));
        }
        for x in &mut next {
            *x /= max;
        }
        v = next;
    }
    let imax = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap();
    if v[imax] < 0.0 {
        for x in &mut v {
            *x = -*x;
        }
    }

    // Fallback for windows so wide that even v underflows the iteration's
    // noise floor: re-solve the tails as boundary-value problems in (M − λ),
    // whose sub-blocks are inverse-positive out there.
    let floor = 1e-12;
    let mut left_end = 0usize;
    while left_end < imax && v[left_end].abs() < floor {
        left_end += 1;
    }
    if left_end > 1 {
        let mut rhs = vec![0.0; left_end];
        rhs[left_end - 1] = -disc.sup[left_end - 1] * v[left_end];
        let tail = solve_general_shifted(
            &dl[..left_end - 1],
            &d[..left_end],
            &du[..left_end - 1],
            lambda,
            &rhs,
        );
        v[..left_end].copy_from_slice(&tail);
    }
    let mut right_start = n - 1;
    while right_start > imax && v[right_start].abs() < floor {
        right_start -= 1;
    }
    if right_start + 2 < n {
        let start = right_start + 1;
        let mut rhs = vec![0.0; n - start];
        rhs[0] = -disc.sub[start] * v[right_start];
        let tail = solve_general_shifted(&dl[start..], &d[start..], &du[start..], lambda, &rhs);
        v[start..].copy_from_slice(&tail);
    }

    if v.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Solver(
            "eigenvector with an interior sign change: not the principal branch".into(),
        ));
    }
    Ok(v)
}

/// Solves for the principal eigenpair on `grid` (uniform nodes; the grid's
/// window is the truncation interval carrying the Dirichlet data).
pub fn solve_principal(
    coeffs: &DerivedCoefficients,
    grid: &Grid1D,
    opts: EigenOptions,
) -> Result<EigenResult> {
    let n = grid.n();
    if n < 16 {
        return Err(Error::Invalid(format!("grid needs at least 16 nodes (got {n})")));
    }
    if grid.uniform_spacing().is_none() {
        return Err(Error::Invalid("the eigen solver requires a uniform grid".into()));
    }
    let window = grid.window;
    if !coeffs.model.domain.contains(grid.nodes[0])
        || !coeffs.model.domain.contains(grid.nodes[n - 1])
    {
        return Err(Error::Invalid("grid nodes leave the state interval".into()));
    }
    let refine = opts.refine.max(2);

    let coarse = solve_level(coeffs, window, n, refine / 2, opts.pencil_tol, false)?;
    let fine = solve_level(coeffs, window, n, refine, opts.pencil_tol, true)?;
    // Second-order scheme: halving h divides the eigenvalue error by 4.
    let lambda_c = fine.lambda + (fine.lambda - coarse.lambda) / 3.0;

    let disc = &fine.disc;
    let n_fine = disc.n();
    let mut log_v_fine: Vec<f64> = fine.v.iter().map(|&x| x.ln()).collect();

    // Normalize ∫ v̂² m̂ = 1 on the fine grid, in log space.
    let log_mass: Vec<f64> = (0..n_fine)
        .map(|j| 2.0 * log_v_fine[j] + disc.log_m_hat(j))
        .collect();
    let peak = log_mass.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mass: Vec<f64> = log_mass.iter().map(|&v| (v - peak).exp()).collect();
    let total = disc.grid.integrate(&mass) * peak.exp();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Solver(format!(
            "eigenfunction normalization failed (mass {total})"
        )));
    }
    let shift = -0.5 * total.ln();
    for v in &mut log_v_fine {
        *v += shift;
    }

    // Restrict to the caller's grid: node i of the user grid is fine node
    // (i+1)·refine − 1.
    let log_v_hat: Vec<f64> = (0..n).map(|i| log_v_fine[(i + 1) * refine - 1]).collect();
    let v_hat: Vec<f64> = log_v_hat.iter().map(|&v| v.exp()).collect();
    let log_deriv = log_derivative(&grid.nodes, &log_v_hat);

    // Invariant density v̂² m̂ on the user grid, unit grid integral.
    let mut density: Vec<f64> = (0..n)
        .map(|i| {
            let j = (i + 1) * refine - 1;
            (2.0 * log_v_fine[j] + disc.log_m_hat(j)).exp()
        })
        .collect();
    let density_mass = grid.integrate(&density);
    for v in &mut density {
        *v /= density_mass;
    }

    let residual = central_difference_residual(coeffs, grid, &v_hat, lambda_c)?;

    let mut lambda_window_shift = None;
    if opts.check_window {
        // Same spacing on the doubled window; only the eigenvalue is needed.
        let doubled = window.doubled();
        let n2 = 2 * (n + 1) - 1;
        let big_coarse = solve_level(coeffs, doubled, n2, refine / 2, opts.pencil_tol, false)?;
        let big_fine = solve_level(coeffs, doubled, n2, refine, opts.pencil_tol, false)?;
        let lambda2 = big_fine.lambda + (big_fine.lambda - big_coarse.lambda) / 3.0;
        let shift = (lambda2 - lambda_c).abs();
        lambda_window_shift = Some(shift);
        if shift > opts.window_shift_tol {
            return Err(Error::WindowTooSmall {
                shift,
                tol: opts.window_shift_tol,
            });
        }
    }

    Ok(EigenResult {
        lambda_c,
        window,
        grid: grid.clone(),
        v_hat,
        log_v_hat,
        log_deriv,
        invariant_density: density,
        residual,
        lambda_window_shift,
        refine,
    })
}

fn central_difference_residual(
    coeffs: &DerivedCoefficients,
    grid: &Grid1D,
    v: &[f64],
    lambda: f64,
) -> Result<f64> {
    let n = grid.n();
    let mut worst = 0.0f64;
    for i in 1..n - 1 {
        let y = grid.nodes[i];
        let hl = grid.nodes[i] - grid.nodes[i - 1];
        let hr = grid.nodes[i + 1] - grid.nodes[i];
        let d1 = (v[i + 1] - v[i - 1]) / (hl + hr);
        let d2 = 2.0 * (hl * v[i + 1] - (hl + hr) * v[i] + hr * v[i - 1]) / (hl * hr * (hl + hr));
        let res =
            0.5 * coeffs.cap_a(y) * d2 + coeffs.cap_b(y)? * d1 + (coeffs.c(y)? - lambda) * v[i];
        worst = worst.max(res.abs());
    }
    Ok(worst)
}

impl EigenResult {
    /// `v̂_y/v̂` linearly interpolated, clamped to the grid range.
    pub fn log_deriv_at(&self, y: f64) -> f64 {
        self.grid.interp(&self.log_deriv, y)
    }

    /// `ln v̂`, linear inside the grid and extended by the boundary log-slope
    /// outside (keeps positivity and matches the far-field decay).
    pub fn log_v_hat_at(&self, y: f64) -> f64 {
        let nodes = &self.grid.nodes;
        let n = nodes.len();
        if y < nodes[0] {
            return self.log_v_hat[0] + self.log_deriv[0] * (y - nodes[0]);
        }
        if y > nodes[n - 1] {
            return self.log_v_hat[n - 1] + self.log_deriv[n - 1] * (y - nodes[n - 1]);
        }
        self.grid.interp(&self.log_v_hat, y)
    }

    pub fn v_hat_at(&self, y: f64) -> f64 {
        self.log_v_hat_at(y).exp()
    }

    /// Rescales the eigenfunction by a positive constant. Downstream
    /// portfolios depend only on `v̂_y/v̂`, so policies must not move.
    pub fn rescaled(&self, factor: f64) -> EigenResult {
        assert!(factor > 0.0);
        let mut out = self.clone();
        let shift = factor.ln();
        for v in &mut out.log_v_hat {
            *v += shift;
        }
        out.v_hat = out.log_v_hat.iter().map(|&v| v.exp()).collect();
        out.log_deriv = log_derivative(&out.grid.nodes, &out.log_v_hat);
        out
    }
}

/// Long-run optimal risky weights
/// `π̂(y) = (1/(1-p)) Σ^{-1}(μ + δ Υ v̂_y/v̂)(y)`.
pub fn long_run_policy(
    result: &EigenResult,
    coeffs: &DerivedCoefficients,
    y: f64,
) -> Result<Vec<f64>> {
    if !result.window.contains(y) {
        return Err(Error::Invalid(format!(
            "y = {y} lies outside the eigen window ({}, {}); refusing to extrapolate a policy",
            result.window.lo, result.window.hi
        )));
    }
    let block = coeffs.asset_block(y)?;
    let ld = result.log_deriv_at(y);
    let scale = 1.0 / (1.0 - coeffs.p);
    Ok(block
        .sigma_inv_mu
        .iter()
        .zip(&block.sigma_inv_upsilon)
        .map(|(&m, &u)| scale * (m + coeffs.delta * u * ld))
        .collect())
}

/// Quadrature report on the long-run conditions: recurrence of the state
/// under the long-run measure, the enforced normalization, and integrability
/// of v̂ m̂ — with v̂ extended beyond the window by its boundary log-slope.
#[derive(Debug, Clone)]
pub struct EigenConditionsReport {
    pub recurrent_left: ImproperOutcome,
    pub recurrent_right: ImproperOutcome,
    /// Grid integral of v̂² m̂ (1 by normalization).
    pub norm_integral: f64,
    pub v_m_hat_integral: ImproperOutcome,
    pub overall: bool,
}

pub fn verify_eigen_conditions(
    result: &EigenResult,
    coeffs: &DerivedCoefficients,
) -> Result<EigenConditionsReport> {
    let policy = TruncationPolicy::default();
    let domain = coeffs.model.domain;
    let y0 = coeffs.y0;

    // 1/(v̂² A m̂), assembled in log space so the divergent tails do not
    // overflow before the schedule can classify them.
    let recurrence_integrand = |y: f64| -> f64 {
        let g = match coeffs.log_m_hat_weight(y) {
            Ok(v) => v,
            Err(_) => return f64::NAN,
        };
        (-2.0 * result.log_v_hat_at(y) - g).exp()
    };
    let recurrent_left = improper_integral(&recurrence_integrand, domain.lo, y0, &policy)?;
    let recurrent_right = improper_integral(&recurrence_integrand, y0, domain.hi, &policy)?;

    let mass: Vec<f64> = result
        .log_v_hat
        .iter()
        .enumerate()
        .map(|(i, &lv)| {
            let y = result.grid.nodes[i];
            let g = coeffs.log_m_hat_weight(y).unwrap_or(f64::NAN);
            (2.0 * lv + g - coeffs.cap_a(y).ln()).exp()
        })
        .collect();
    let norm_integral = result.grid.integrate(&mass);

    let v_m_hat_integrand = |y: f64| -> f64 {
        let g = match coeffs.log_m_hat_weight(y) {
            Ok(v) => v,
            Err(_) => return f64::NAN,
        };
        (result.log_v_hat_at(y) + g - coeffs.cap_a(y).ln()).exp()
    };
    let v_m_hat_integral = improper_integral(&v_m_hat_integrand, domain.lo, domain.hi, &policy)?;

    let overall = matches!(recurrent_left, ImproperOutcome::Divergent)
        && matches!(recurrent_right, ImproperOutcome::Divergent)
        && matches!(v_m_hat_integral, ImproperOutcome::Converged(_))
        && (norm_integral - 1.0).abs() < 1e-6;

    Ok(EigenConditionsReport {
        recurrent_left,
        recurrent_right,
        norm_integral,
        v_m_hat_integral,
        overall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derive_coefficients, DiffusionModel};
    use std::sync::Arc;

    /// Gaussian-ansatz oracle for the linear family: substituting
    /// `exp(-a y²/2)` into the eigen equation gives
    /// `a* = -(κ + qρ) + sqrt((κ + qρ)² + q/δ)` and `λ = p r/δ − a*/2`.
    fn linear_oracle(rate: f64, kappa: f64, p: f64, rho: f64) -> (f64, f64) {
        let q = p / (p - 1.0);
        let delta = 1.0 / (1.0 - q * rho * rho);
        let drift = kappa + q * rho;
        let a_star = -drift + (drift * drift + q / delta).sqrt();
        let lambda = p * rate / delta - 0.5 * a_star;
        (a_star, lambda)
    }

    fn solve_linear(rho: f64, n: usize, opts: EigenOptions) -> (EigenResult, DerivedCoefficients) {
        let model = Arc::new(DiffusionModel::linear(0.05, 1.0, 1.0, 1.0, 1.0, rho));
        let coeffs = derive_coefficients(model, -1.0, 0.0).unwrap();
        let grid = Grid1D::uniform(Window { lo: -8.0, hi: 8.0 }, n).unwrap();
        let result = solve_principal(&coeffs, &grid, opts).unwrap();
        (result, coeffs)
    }

    #[test]
    fn principal_eigenvalue_matches_ansatz() {
        let (a_star, lambda) = linear_oracle(0.05, 1.0, -1.0, -0.5);
        assert!((a_star - 0.25).abs() < 1e-15);
        assert!((lambda + 0.16875).abs() < 1e-15);

        let opts = EigenOptions {
            check_window: false,
            ..EigenOptions::default()
        };
        let (result, _) = solve_linear(-0.5, 500, opts);
        assert!(
            (result.lambda_c - lambda).abs() < 1e-6,
            "lambda_c = {} vs {lambda}",
            result.lambda_c
        );
        // v̂(0) = π^{-1/4} under the unit-mass normalization.
        let v0 = result.v_hat_at(0.0);
        let expect = std::f64::consts::PI.powf(-0.25);
        assert!((v0 / expect - 1.0).abs() < 1e-4, "v̂(0) = {v0} vs {expect}");
    }

    #[test]
    fn eigenvector_positive_and_density_normalized() {
        let opts = EigenOptions {
            check_window: false,
            ..EigenOptions::default()
        };
        let (result, _) = solve_linear(-0.5, 300, opts);
        assert!(result.v_hat.iter().all(|&v| v > 0.0));
        let total = result.grid.integrate(&result.invariant_density);
        assert!((total - 1.0).abs() < 1e-12);
        assert!(result.invariant_density.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn symmetric_model_gives_even_eigenfunction() {
        let opts = EigenOptions {
            check_window: false,
            ..EigenOptions::default()
        };
        let (result, _) = solve_linear(-0.5, 301, opts);
        let n = result.v_hat.len();
        let mut worst = 0.0f64;
        for i in 0..n {
            worst = worst.max((result.v_hat[i] - result.v_hat[n - 1 - i]).abs());
        }
        assert!(worst <= 1e-8, "asymmetry {worst}");
    }

    #[test]
    fn long_run_policy_oracle() {
        let opts = EigenOptions {
            check_window: false,
            ..EigenOptions::default()
        };
        let (result, coeffs) = solve_linear(-0.5, 800, opts);
        // π̂(1) = (1 + δ·ρ·(-a*))/2 with a* = 0.25, δ = 8/7.
        let pi = long_run_policy(&result, &coeffs, 1.0).unwrap();
        let expect = 0.5 * (1.0 + (8.0 / 7.0) * (-0.5) * (-0.25));
        assert!((pi[0] - expect).abs() < 1e-4, "π̂ = {} vs {expect}", pi[0]);

        let (result0, coeffs0) = solve_linear(0.0, 400, opts);
        let pi0 = long_run_policy(&result0, &coeffs0, 1.0).unwrap();
        assert!((pi0[0] - 0.5).abs() < 1e-6, "π̂(ρ=0) = {}", pi0[0]);

        assert!(long_run_policy(&result, &coeffs, 9.0).is_err());
    }

    #[test]
    fn policy_invariant_under_rescaling() {
        let opts = EigenOptions {
            check_window: false,
            ..EigenOptions::default()
        };
        let (result, coeffs) = solve_linear(-0.5, 300, opts);
        let scaled = result.rescaled(3.7);
        for &y in &[-2.0, 0.0, 0.5, 3.0] {
            let a = long_run_policy(&result, &coeffs, y).unwrap();
            let b = long_run_policy(&scaled, &coeffs, y).unwrap();
            assert!((a[0] - b[0]).abs() < 1e-13, "policy moved at y = {y}");
        }
    }

    #[test]
    fn residual_is_second_order() {
        // The independent central-difference residual of the returned
        // eigenpair drops ~4x when the grid spacing halves.
        let opts = EigenOptions {
            check_window: false,
            refine: 2,
            ..EigenOptions::default()
        };
        let (a, _) = solve_linear(-0.5, 125, opts);
        let (b, _) = solve_linear(-0.5, 250, opts);
        let (c, _) = solve_linear(-0.5, 501, opts);
        for (coarse, fine) in [(&a, &b), (&b, &c)] {
            let ratio = coarse.residual / fine.residual;
            assert!(
                (3.0..5.0).contains(&ratio),
                "expected ~4x residual drop, got {ratio} ({} -> {})",
                coarse.residual,
                fine.residual
            );
        }
    }
}
