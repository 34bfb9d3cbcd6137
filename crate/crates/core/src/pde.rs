//! Finite-horizon reduced HJB equation `∂_t v + ℒ v + c v = 0`, `v(T,·) = 1`,
//! and the policies and probabilistic checks built on it.
//!
//! The march works in the gauge `w(t,y) = e^{-λ_c (T-t)} v(t,y)`, where the
//! principal mode of the discrete operator is exactly stationary: the
//! long-horizon limit of the finite-horizon solution then reproduces the
//! eigen module's fixed point instead of drifting by time-stepping error,
//! and the far-field boundary condition becomes the constant `w = 1`
//! (the separable long-run profile with the boundary ratio frozen at its
//! terminal value). Crank–Nicolson time stepping with a Rannacher start
//! (two implicit-Euler half-steps) damps the nonsmooth terminal data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{log_derivative, Discretization, Grid1D};
use crate::model::{AssetWorkspace, DerivedCoefficients};
use crate::rng::{NormalStream, DOMAIN_FEYNMAN_KAC};
use crate::tridiag::solve_general_shifted;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy)]
pub struct MeshParams {
    /// Time step as a multiple of the grid spacing (`Δt = dt_factor·h`).
    pub dt_factor: f64,
    /// Cap on the number of stored time slices.
    pub max_stored: usize,
}

impl Default for MeshParams {
    fn default() -> Self {
        MeshParams {
            dt_factor: 0.5,
            max_stored: 513,
        }
    }
}

/// Time–space mesh solution of the horizon-`T` equation.
///
/// Only `ln w` is stored; `v = e^{λ_c(T-t)} w` and `h = w / v̂` are derived
/// views, so the identity `v = e^{λ_c(T-t)} v̂ h` holds to round-off by
/// construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HorizonSolution {
    pub horizon: f64,
    pub lambda_c: f64,
    pub grid: Grid1D,
    /// Stored slice times, ascending, always containing 0 and `horizon`.
    pub times: Vec<f64>,
    /// `ln w` per stored slice on the grid nodes.
    pub log_w: Vec<Vec<f64>>,
    /// `∂_y ln w = v_y/v` per stored slice (centered differences of `ln w`).
    pub log_deriv: Vec<Vec<f64>>,
    /// `ln v̂` on the grid (copied from the eigen result).
    pub log_v_hat: Vec<f64>,
    /// `v̂_y/v̂` on the grid.
    pub eigen_log_deriv: Vec<f64>,
}

struct Operator {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    /// Ghost-node coupling × ghost value at the two window ends.
    bc_lo: f64,
    bc_hi: f64,
}

impl Operator {
    /// rhs = (I + a·M) w + (a + b)·bc, where bc is the affine boundary term.
    fn weighted_apply(&self, w: &[f64], a: f64, b: f64, out: &mut Vec<f64>) {
        let n = w.len();
        out.clear();
        out.reserve(n);
        for j in 0..n {
            let left = if j > 0 { self.dl[j - 1] * w[j - 1] } else { 0.0 };
            let right = if j + 1 < n { self.du[j] * w[j + 1] } else { 0.0 };
            out.push(w[j] + a * (left + self.d[j] * w[j] + right));
        }
        out[0] += (a + b) * self.bc_lo;
        out[n - 1] += (a + b) * self.bc_hi;
    }

    /// Solves (I − a·M) x = rhs.
    fn solve(&self, a: f64, rhs: &[f64]) -> Vec<f64> {
        let dl: Vec<f64> = self.dl.iter().map(|&v| -a * v).collect();
        let d: Vec<f64> = self.d.iter().map(|&v| 1.0 - a * v).collect();
        let du: Vec<f64> = self.du.iter().map(|&v| -a * v).collect();
        solve_general_shifted(&dl, &d, &du, 0.0, rhs)
    }

    /// One Crank–Nicolson step of size `dt`, with positivity-preserving
    /// sub-stepping on rejection.
    fn cn_step(&self, w: &[f64], dt: f64, depth: usize, scratch: &mut Vec<f64>) -> Result<Vec<f64>> {
        let a = 0.5 * dt;
        self.weighted_apply(w, a, a, scratch);
        let next = self.solve(a, scratch);
        if next.iter().all(|&v| v > 0.0) {
            return Ok(next);
        }
        if depth == 0 {
            return Err(Error::Solver(
                "time step produced a nonpositive value function; persistent after halving".into(),
            ));
        }
        let half = self.cn_step(w, 0.5 * dt, depth - 1, scratch)?;
        self.cn_step(&half, 0.5 * dt, depth - 1, scratch)
    }

    /// One implicit-Euler step of size `dt` (Rannacher startup).
    fn ie_step(&self, w: &[f64], dt: f64, scratch: &mut Vec<f64>) -> Result<Vec<f64>> {
        self.weighted_apply(w, 0.0, dt, scratch);
        let next = self.solve(dt, scratch);
        if next.iter().all(|&v| v > 0.0) {
            Ok(next)
        } else {
            Err(Error::Solver("implicit startup produced a nonpositive value".into()))
        }
    }
}

fn assemble_gauged(
    coeffs: &DerivedCoefficients,
    eigen: &crate::eigen::EigenResult,
) -> Result<(Discretization, Operator)> {
    let n = eigen.grid.n();
    let disc = Discretization::assemble(coeffs, eigen.window, n, eigen.refine)?;
    let nf = disc.n();
    let lambda = eigen.lambda_c;
    let d: Vec<f64> = (0..nf)
        .map(|j| disc.c_nodes[j] - lambda - disc.sub[j] - disc.sup[j])
        .collect();
    let dl: Vec<f64> = (1..nf).map(|j| disc.sub[j]).collect();
    let du: Vec<f64> = (0..nf - 1).map(|j| disc.sup[j]).collect();
    let op = Operator {
        bc_lo: disc.sub[0], // ghost value w ≡ 1
        bc_hi: disc.sup[nf - 1],
        dl,
        d,
        du,
    };
    Ok((disc, op))
}

fn march_and_store(
    op: &Operator,
    disc: &Discretization,
    eigen: &crate::eigen::EigenResult,
    t_horizon: f64,
    params: MeshParams,
    terminal: Vec<f64>,
    // Maps a fine-grid slice to the stored (user-grid) ln w row.
    to_log_user: &dyn Fn(&[f64]) -> Vec<f64>,
) -> Result<HorizonSolution> {
    let n_user = eigen.grid.n();
    let h_user = eigen
        .grid
        .uniform_spacing()
        .ok_or_else(|| Error::Invalid("horizon solver requires a uniform grid".into()))?;
    let m = ((t_horizon / (params.dt_factor * h_user)).ceil() as usize).max(4);
    let dt = t_horizon / m as f64;
    let stride = (m / params.max_stored.max(2)) + 1;

    let mut stored: Vec<(usize, Vec<f64>, Vec<f64>)> = Vec::new();
    let mut store = |k: usize, w: &[f64]| {
        let log_row = to_log_user(w);
        let ld_row = log_derivative(&eigen.grid.nodes, &log_row);
        stored.push((k, log_row, ld_row));
    };

    let mut w = terminal;
    store(m, &w);
    let mut scratch = Vec::with_capacity(disc.n());

    // Rannacher startup: the first backward step as two implicit half-steps.
    w = op.ie_step(&w, 0.5 * dt, &mut scratch)?;
    w = op.ie_step(&w, 0.5 * dt, &mut scratch)?;
    if (m - 1) % stride == 0 {
        store(m - 1, &w);
    }
    for k in (0..m - 1).rev() {
        w = op.cn_step(&w, dt, 8, &mut scratch)?;
        if k % stride == 0 {
            store(k, &w);
        }
    }

    stored.reverse();
    let times: Vec<f64> = stored.iter().map(|(k, _, _)| *k as f64 * dt).collect();
    let log_w: Vec<Vec<f64>> = stored.iter().map(|(_, lw, _)| lw.clone()).collect();
    let log_deriv: Vec<Vec<f64>> = stored.into_iter().map(|(_, _, ld)| ld).collect();

    debug_assert!(n_user == eigen.grid.n());
    Ok(HorizonSolution {
        horizon: t_horizon,
        lambda_c: eigen.lambda_c,
        grid: eigen.grid.clone(),
        times,
        log_w,
        log_deriv,
        log_v_hat: eigen.log_v_hat.clone(),
        eigen_log_deriv: eigen.log_deriv.clone(),
    })
}

/// Solves the horizon-`T` equation on the eigen result's grid (shared
/// discretization, internally refined by the eigen result's factor).
pub fn solve_horizon(
    coeffs: &DerivedCoefficients,
    eigen: &crate::eigen::EigenResult,
    t_horizon: f64,
    params: MeshParams,
) -> Result<HorizonSolution> {
    if !(t_horizon > 0.0) {
        return Err(Error::Invalid(format!("horizon must be positive (got {t_horizon})")));
    }
    let (disc, op) = assemble_gauged(coeffs, eigen)?;
    let refine = eigen.refine;
    let terminal = vec![1.0; disc.n()];
    let to_log_user = move |w: &[f64]| -> Vec<f64> {
        (0..eigen.grid.n())
            .map(|i| w[(i + 1) * refine - 1].ln())
            .collect()
    };
    march_and_store(&op, &disc, eigen, t_horizon, params, terminal, &to_log_user)
}

/// Same solution through the ratio equation: the operator is conjugated by
/// v̂ (the generator of the long-run state dynamics plus the eigenvalue
/// shift), marched on `g = w/v̂`, and mapped back. Algebraically identical
/// to [`solve_horizon`]; comparing the two catches assembly and boundary
/// bugs.
pub fn solve_horizon_via_ratio(
    coeffs: &DerivedCoefficients,
    eigen: &crate::eigen::EigenResult,
    t_horizon: f64,
    params: MeshParams,
) -> Result<HorizonSolution> {
    if !(t_horizon > 0.0) {
        return Err(Error::Invalid(format!("horizon must be positive (got {t_horizon})")));
    }
    let (disc, op) = assemble_gauged(coeffs, eigen)?;
    let nf = disc.n();
    // Positive conjugation weights: v̂ interpolated onto the fine nodes.
    let weights: Vec<f64> = disc
        .grid
        .nodes
        .iter()
        .map(|&y| eigen.log_v_hat_at(y).exp())
        .collect();
    let mut dl = op.dl.clone();
    let mut du = op.du.clone();
    for j in 1..nf {
        dl[j - 1] *= weights[j - 1] / weights[j];
    }
    for j in 0..nf - 1 {
        du[j] *= weights[j + 1] / weights[j];
    }
    let conj = Operator {
        dl,
        d: op.d.clone(),
        du,
        bc_lo: op.bc_lo / weights[0],
        bc_hi: op.bc_hi / weights[nf - 1],
    };
    let terminal: Vec<f64> = weights.iter().map(|&v| 1.0 / v).collect();
    let refine = eigen.refine;
    let to_log_user = move |g: &[f64]| -> Vec<f64> {
        (0..eigen.grid.n())
            .map(|i| {
                let j = (i + 1) * refine - 1;
                (g[j] * weights[j]).ln()
            })
            .collect()
    };
    march_and_store(&conj, &disc, eigen, t_horizon, params, terminal, &to_log_user)
}

impl HorizonSolution {
    /// Bracketing stored slices for time `t` with the interpolation weight.
    fn time_bracket(&self, t: f64) -> Result<(usize, f64)> {
        let eps = 1e-9 * self.horizon.max(1.0);
        if t < -eps || t > self.horizon + eps {
            return Err(Error::Invalid(format!(
                "t = {t} outside the mesh time range [0, {}]",
                self.horizon
            )));
        }
        let t = t.clamp(0.0, self.horizon);
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return Ok((0, 0.0));
        }
        if k >= self.times.len() {
            return Ok((self.times.len() - 2, 1.0));
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        Ok(((k - 1), (t - t0) / (t1 - t0)))
    }

    fn bilinear(&self, rows: &[Vec<f64>], t: f64, y: f64) -> Result<f64> {
        let (k, wt) = self.time_bracket(t)?;
        let a = self.grid.interp(&rows[k], y);
        if wt == 0.0 {
            return Ok(a);
        }
        let b = self.grid.interp(&rows[k + 1], y);
        Ok(a * (1.0 - wt) + b * wt)
    }

    pub fn log_w_at(&self, t: f64, y: f64) -> Result<f64> {
        self.bilinear(&self.log_w, t, y)
    }

    /// `v(t, y) = e^{λ_c (T - t)} w(t, y)`.
    pub fn v_at(&self, t: f64, y: f64) -> Result<f64> {
        Ok((self.lambda_c * (self.horizon - t) + self.log_w_at(t, y)?).exp())
    }

    /// `h(t, y) = w(t, y) / v̂(y)`.
    pub fn h_at(&self, t: f64, y: f64) -> Result<f64> {
        Ok((self.log_w_at(t, y)? - self.grid.interp(&self.log_v_hat, y)).exp())
    }

    /// `v_y / v` (equals `w_y / w`).
    pub fn log_deriv_at(&self, t: f64, y: f64) -> Result<f64> {
        self.bilinear(&self.log_deriv, t, y)
    }

    /// `h_y / h = v_y/v − v̂_y/v̂`.
    pub fn h_log_deriv_at(&self, t: f64, y: f64) -> Result<f64> {
        Ok(self.log_deriv_at(t, y)? - self.grid.interp(&self.eigen_log_deriv, y))
    }

    /// Value of `v` at a stored slice index and node index (mesh views).
    pub fn v_slice(&self, slice: usize) -> Vec<f64> {
        let tau = self.horizon - self.times[slice];
        self.log_w[slice]
            .iter()
            .map(|&lw| (self.lambda_c * tau + lw).exp())
            .collect()
    }

    pub fn h_slice(&self, slice: usize) -> Vec<f64> {
        self.log_w[slice]
            .iter()
            .zip(&self.log_v_hat)
            .map(|(&lw, &lv)| (lw - lv).exp())
            .collect()
    }
}

/// Finite-horizon optimal risky weights
/// `π^T(t,y) = (1/(1-p)) Σ^{-1}(μ + δ Υ v_y/v)(t,y)`.
pub fn finite_policy(
    sol: &HorizonSolution,
    coeffs: &DerivedCoefficients,
    t: f64,
    y: f64,
) -> Result<Vec<f64>> {
    if !sol.grid.window.contains(y) {
        return Err(Error::Invalid(format!(
            "y = {y} lies outside the mesh window ({}, {})",
            sol.grid.window.lo, sol.grid.window.hi
        )));
    }
    let ld = sol.log_deriv_at(t, y)?;
    let block = coeffs.asset_block(y)?;
    let scale = 1.0 / (1.0 - coeffs.p);
    Ok(block
        .sigma_inv_mu
        .iter()
        .zip(&block.sigma_inv_upsilon)
        .map(|(&m, &u)| scale * (m + coeffs.delta * u * ld))
        .collect())
}

// ---------------------------------------------------------------------------
// Feynman–Kac consistency check
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct FkConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct FkEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// Fraction of paths that were reflected at the window edge.
    pub reflected_fraction: f64,
    pub n_paths: usize,
}

fn summarize(samples: &[f64], reflected: usize) -> FkEstimate {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    FkEstimate {
        mean,
        std_error: (var / n as f64).sqrt(),
        reflected_fraction: reflected as f64 / n as f64,
        n_paths: n,
    }
}

/// Simulates the state under the long-run dynamics
/// `dY = (B + A v̂_y/v̂) dt + a dŴ` from `y` over a lapse `tau` and applies
/// `payoff` to the endpoint, streaming paths off the counter-based
/// generator. Returns the per-path payoffs and the count of paths that were
/// reflected at the window edge.
pub fn long_run_endpoint_samples<F: Fn(f64, usize) -> f64 + Sync>(
    coeffs: &DerivedCoefficients,
    eigen: &crate::eigen::EigenResult,
    y: f64,
    tau: f64,
    cfg: &FkConfig,
    payoff: F,
) -> Result<(Vec<f64>, usize)> {
    if tau < 0.0 {
        return Err(Error::Invalid(format!("negative time lapse {tau}")));
    }
    let m = if tau == 0.0 {
        0
    } else {
        ((tau / cfg.dt).ceil() as usize).max(1)
    };
    let dt = if m == 0 { 0.0 } else { tau / m as f64 };
    let sqrt_dt = dt.sqrt();
    let window = eigen.window;

    let results: Vec<(f64, bool)> = (0..cfg.n_paths)
        .into_par_iter()
        .map_init(
            || AssetWorkspace::new(coeffs.dim()),
            |ws, path| {
                let mut stream = NormalStream::new(cfg.seed, DOMAIN_FEYNMAN_KAC, path as u64);
                let mut state = y;
                let mut reflected = false;
                for _ in 0..m {
                    let b_hat = coeffs.cap_b_with(state, ws).unwrap_or(f64::NAN)
                        + coeffs.cap_a(state) * eigen.log_deriv_at(state);
                    let a = (coeffs.model.state_vol)(state);
                    state += b_hat * dt + a * sqrt_dt * stream.next();
                    if state <= window.lo {
                        state = 2.0 * window.lo - state;
                        reflected = true;
                    } else if state >= window.hi {
                        state = 2.0 * window.hi - state;
                        reflected = true;
                    }
                }
                (payoff(state, path), reflected)
            },
        )
        .collect();

    let samples: Vec<f64> = results.iter().map(|r| r.0).collect();
    let reflected = results.iter().filter(|r| r.1).count();
    Ok((samples, reflected))
}

fn long_run_endpoint_mc<F: Fn(f64, usize) -> f64 + Sync>(
    coeffs: &DerivedCoefficients,
    eigen: &crate::eigen::EigenResult,
    y: f64,
    tau: f64,
    cfg: &FkConfig,
    payoff: F,
) -> Result<FkEstimate> {
    let (samples, reflected) = long_run_endpoint_samples(coeffs, eigen, y, tau, cfg, payoff)?;
    let est = summarize(&samples, reflected);
    if est.reflected_fraction > 0.01 {
        return Err(Error::Flagged(format!(
            "{:.2}% of paths hit the window edge; enlarge the window",
            est.reflected_fraction * 100.0
        )));
    }
    if !est.mean.is_finite() {
        return Err(Error::Solver("Monte Carlo estimate is not finite".into()));
    }
    Ok(est)
}

/// Monte Carlo estimate of `E[1/v̂(Y_{T-t})]` under the long-run state
/// dynamics started at `y` — the probabilistic representation of `h(t, y)`
/// for comparison against the PDE route.
pub fn feynman_kac_check(
    coeffs: &DerivedCoefficients,
    eigen: &crate::eigen::EigenResult,
    t_horizon: f64,
    t: f64,
    y: f64,
    cfg: &FkConfig,
) -> Result<FkEstimate> {
    if t > t_horizon {
        return Err(Error::Invalid(format!("t = {t} exceeds the horizon {t_horizon}")));
    }
    long_run_endpoint_mc(coeffs, eigen, y, t_horizon - t, cfg, |state, _| {
        (-eigen.log_v_hat_at(state)).exp()
    })
}

/// Sample mean of `h(t, Y_t) / h(0, y)` under the long-run dynamics: a
/// martingale ratio whose expectation is 1 on `[0, T]`.
pub fn h_martingale_check(
    coeffs: &DerivedCoefficients,
    eigen: &crate::eigen::EigenResult,
    sol: &HorizonSolution,
    t: f64,
    y: f64,
    cfg: &FkConfig,
) -> Result<FkEstimate> {
    if t > sol.horizon {
        return Err(Error::Invalid(format!("t = {t} exceeds the horizon {}", sol.horizon)));
    }
    let h0 = sol.h_at(0.0, y)?;
    long_run_endpoint_mc(coeffs, eigen, y, t, cfg, |state, _| {
        sol.h_at(t, state).map(|h| h / h0).unwrap_or(f64::NAN)
    })
}
