//! Monte Carlo engine for `(Y, R, wealth)` under the physical and long-run
//! measures, plus the horizon-convergence diagnostics and the pathwise
//! identity checks that tie the simulated wealths back to the PDE layer.
//!
//! Randomness is counter-based per path (see [`crate::rng`]): path `i` is
//! bitwise identical no matter how many workers run, and the heavy
//! diagnostics stream paths instead of materializing them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::EigenResult;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{AssetWorkspace, DerivedCoefficients};
use crate::pde::HorizonSolution;
use crate::rng::{NormalStream, DOMAIN_SIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Measure {
    Physical,
    LongRun,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    EulerMaruyama,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub t_max: f64,
    pub seed: u64,
    pub measure: Measure,
    pub scheme: Scheme,
    pub initial_state: f64,
}

impl SimConfig {
    pub fn steps(&self) -> usize {
        ((self.t_max / self.dt).round() as usize).max(1)
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_max > 0.0) || self.n_paths == 0 {
            return Err(Error::Invalid(
                "simulation needs dt > 0, t_max > 0 and at least one path".into(),
            ));
        }
        Ok(())
    }
}

/// Materialized simulation output: driving increments and the state/return
/// paths. Big diagnostic runs regenerate paths from the seed instead.
#[derive(Debug, Clone)]
pub struct PathBundle {
    pub config: SimConfig,
    pub dim: usize,
    /// Time nodes `0, dt, …, m dt`.
    pub times: Vec<f64>,
    /// State-noise increments ΔW, `[path][step]`.
    pub state_increments: Vec<Vec<f64>>,
    /// Orthogonal increments ΔB, `[path][step·d + j]`.
    pub orthogonal_increments: Vec<Vec<f64>>,
    /// State paths, `[path][step]` (m+1 entries).
    pub states: Vec<Vec<f64>>,
    /// Cumulative excess returns, `[path][step·d + j]` (m+1 blocks).
    pub returns: Vec<Vec<f64>>,
    /// Paths that were reflected at a finite state boundary.
    pub reflected_paths: usize,
    /// Long-run drift evaluations clamped to the eigen window边.
    pub clamped_paths: usize,
}

/// Per-step drift inputs under the chosen measure.
struct Dynamics<'a> {
    coeffs: &'a DerivedCoefficients,
    eigen: Option<&'a EigenResult>,
    measure: Measure,
}

impl<'a> Dynamics<'a> {
    /// Returns (state drift, clamped) at `y`.
    fn state_drift(&self, y: f64, ws: &mut AssetWorkspace) -> Result<(f64, bool)> {
        match self.measure {
            Measure::Physical => Ok(((self.coeffs.model.state_drift)(y), false)),
            Measure::LongRun => {
                let eigen = self.eigen.expect("long-run dynamics require an eigen result");
                let clamped = !eigen.window.contains(y);
                let ld = eigen.log_deriv_at(y);
                let b_hat = self.coeffs.cap_b_with(y, ws)? + self.coeffs.cap_a(y) * ld;
                Ok((b_hat, clamped))
            }
        }
    }

    /// Writes the return drift μ̄ into `out`; `ws` must already hold the
    /// asset block at `y`. Returns whether the eigen interpolation clamped.
    fn return_drift(&self, y: f64, ws: &AssetWorkspace, out: &mut [f64]) -> bool {
        match self.measure {
            Measure::Physical => {
                out.copy_from_slice(&ws.mu);
                false
            }
            Measure::LongRun => {
                let eigen = self.eigen.expect("long-run dynamics require an eigen result");
                let clamped = !eigen.window.contains(y);
                let ld = eigen.log_deriv_at(y);
                let scale = 1.0 / (1.0 - self.coeffs.p);
                for i in 0..out.len() {
                    out[i] = scale * (ws.mu[i] + self.coeffs.delta * ws.upsilon[i] * ld);
                }
                clamped
            }
        }
    }
}

fn reflect_into(domain: crate::model::Interval, y: f64) -> (f64, bool) {
    let mut v = y;
    let mut reflected = false;
    if domain.lo.is_finite() && v <= domain.lo {
        v = 2.0 * domain.lo - v;
        reflected = true;
    }
    if domain.hi.is_finite() && v >= domain.hi {
        v = 2.0 * domain.hi - v;
        reflected = true;
    }
    (v, reflected)
}

/// Euler–Maruyama paths of `(Y, R)` under the requested measure. The
/// long-run measure requires an eigen result for the drift tilt.
pub fn simulate_paths(
    coeffs: &DerivedCoefficients,
    eigen: Option<&EigenResult>,
    config: &SimConfig,
) -> Result<PathBundle> {
    config.validate()?;
    if config.measure == Measure::LongRun && eigen.is_none() {
        return Err(Error::Invalid(
            "long-run simulation requires the eigen result for the drift tilt".into(),
        ));
    }
    if !coeffs.model.domain.contains(config.initial_state) {
        return Err(Error::Invalid(format!(
            "initial state {} outside the state interval",
            config.initial_state
        )));
    }
    let d = coeffs.dim();
    let m = config.steps();
    let dt = config.t_max / m as f64;
    let sqrt_dt = dt.sqrt();
    let domain = coeffs.model.domain;
    let rho = coeffs.model.correlation.clone();
    let rho_bar = coeffs.rho_bar.clone();
    let dyn_ctx = Dynamics {
        coeffs,
        eigen,
        measure: config.measure,
    };

    struct PathOut {
        dw: Vec<f64>,
        db: Vec<f64>,
        y: Vec<f64>,
        r: Vec<f64>,
        reflected: bool,
        clamped: bool,
    }

    let paths: Vec<Result<PathOut>> = (0..config.n_paths)
        .into_par_iter()
        .map_init(
            || AssetWorkspace::new(d),
            |ws, path| -> Result<PathOut> {
                let mut stream = NormalStream::new(config.seed, DOMAIN_SIM, path as u64);
                let mut dw = Vec::with_capacity(m);
                let mut db = Vec::with_capacity(m * d);
                let mut y_series = Vec::with_capacity(m + 1);
                let mut r_series = vec![0.0; (m + 1) * d];
                let mut dz = vec![0.0; d];
                let mut mu_bar = vec![0.0; d];
                let mut y = config.initial_state;
                y_series.push(y);
                let mut reflected = false;
                let mut clamped = false;

                for k in 0..m {
                    let zw = stream.next() * sqrt_dt;
                    dw.push(zw);
                    for _ in 0..d {
                        db.push(stream.next() * sqrt_dt);
                    }
                    let db_k = &db[k * d..(k + 1) * d];

                    // ΔZ = ρ ΔW + ρ̄ ΔB
                    for i in 0..d {
                        let mut acc = rho[i] * zw;
                        for j in 0..d {
                            acc += rho_bar[i * d + j] * db_k[j];
                        }
                        dz[i] = acc;
                    }

                    dyn_ctx.coeffs.eval_assets_into(y, ws)?;
                    let c1 = dyn_ctx.return_drift(y, ws, &mut mu_bar);
                    let (drift, c2) = dyn_ctx.state_drift(y, ws)?;
                    clamped |= c1 || c2;

                    for i in 0..d {
                        let mut diff = 0.0;
                        for j in 0..d {
                            diff += ws.sigma[i * d + j] * dz[j];
                        }
                        r_series[(k + 1) * d + i] = r_series[k * d + i] + mu_bar[i] * dt + diff;
                    }

                    let a = (dyn_ctx.coeffs.model.state_vol)(y);
                    y += drift * dt + a * zw;
                    let (yr, refl) = reflect_into(domain, y);
                    y = yr;
                    reflected |= refl;
                    y_series.push(y);
                }
                Ok(PathOut {
                    dw,
                    db,
                    y: y_series,
                    r: r_series,
                    reflected,
                    clamped,
                })
            },
        )
        .collect();

    let mut state_increments = Vec::with_capacity(config.n_paths);
    let mut orthogonal_increments = Vec::with_capacity(config.n_paths);
    let mut states = Vec::with_capacity(config.n_paths);
    let mut returns = Vec::with_capacity(config.n_paths);
    let mut reflected_paths = 0;
    let mut clamped_paths = 0;
    for p in paths {
        let p = p?;
        reflected_paths += p.reflected as usize;
        clamped_paths += p.clamped as usize;
        state_increments.push(p.dw);
        orthogonal_increments.push(p.db);
        states.push(p.y);
        returns.push(p.r);
    }
    let bundle = PathBundle {
        config: *config,
        dim: d,
        times: (0..=m).map(|k| k as f64 * dt).collect(),
        state_increments,
        orthogonal_increments,
        states,
        returns,
        reflected_paths,
        clamped_paths,
    };
    if bundle.reflected_paths as f64 > 0.01 * config.n_paths as f64 {
        return Err(Error::Flagged(format!(
            "{} of {} paths reflected at the state boundary",
            bundle.reflected_paths, config.n_paths
        )));
    }
    Ok(bundle)
}

// ---------------------------------------------------------------------------
// Wealth paths
// ---------------------------------------------------------------------------

/// Time–state feedback policy: risky portfolio weights.
pub trait FeedbackPolicy: Sync {
    fn weights(&self, t: f64, y: f64, out: &mut [f64]) -> Result<()>;
}

/// All wealth in the safe asset.
pub struct ZeroPolicy;

impl FeedbackPolicy for ZeroPolicy {
    fn weights(&self, _t: f64, _y: f64, out: &mut [f64]) -> Result<()> {
        out.fill(0.0);
        Ok(())
    }
}

/// Myopic weights `Σ^{-1}μ/(1-p)` (no hedging term).
pub struct MertonPolicy<'a> {
    pub coeffs: &'a DerivedCoefficients,
}

impl FeedbackPolicy for MertonPolicy<'_> {
    fn weights(&self, _t: f64, y: f64, out: &mut [f64]) -> Result<()> {
        let block = self.coeffs.asset_block(y)?;
        let scale = 1.0 / (1.0 - self.coeffs.p);
        for (o, &v) in out.iter_mut().zip(&block.sigma_inv_mu) {
            *o = scale * v;
        }
        Ok(())
    }
}

/// Long-run optimal weights, with out-of-window states clamped to the edge.
pub struct LongRunPolicy<'a> {
    pub eigen: &'a EigenResult,
    pub coeffs: &'a DerivedCoefficients,
}

impl FeedbackPolicy for LongRunPolicy<'_> {
    fn weights(&self, _t: f64, y: f64, out: &mut [f64]) -> Result<()> {
        let block = self.coeffs.asset_block(y)?;
        let ld = self.eigen.log_deriv_at(y);
        let scale = 1.0 / (1.0 - self.coeffs.p);
        for i in 0..out.len() {
            out[i] = scale * (block.sigma_inv_mu[i] + self.coeffs.delta * block.sigma_inv_upsilon[i] * ld);
        }
        Ok(())
    }
}

/// Finite-horizon optimal weights from a mesh solution (clamped likewise).
pub struct HorizonPolicy<'a> {
    pub sol: &'a HorizonSolution,
    pub coeffs: &'a DerivedCoefficients,
}

impl FeedbackPolicy for HorizonPolicy<'_> {
    fn weights(&self, t: f64, y: f64, out: &mut [f64]) -> Result<()> {
        let block = self.coeffs.asset_block(y)?;
        let lo = self.sol.grid.nodes[0];
        let hi = self.sol.grid.nodes[self.sol.grid.n() - 1];
        let ld = self.sol.log_deriv_at(t.min(self.sol.horizon), y.clamp(lo, hi))?;
        let scale = 1.0 / (1.0 - self.coeffs.p);
        for i in 0..out.len() {
            out[i] = scale * (block.sigma_inv_mu[i] + self.coeffs.delta * block.sigma_inv_upsilon[i] * ld);
        }
        Ok(())
    }
}

/// Wealth series (unit initial capital) for a feedback policy along a
/// materialized bundle, by the positivity-preserving log-Euler update
/// `Δ ln X = (r + π'μ̄ − ½ π'Σπ) dt + π'σ ΔZ`.
pub fn wealth_path(
    bundle: &PathBundle,
    policy: &dyn FeedbackPolicy,
    coeffs: &DerivedCoefficients,
) -> Result<Vec<Vec<f64>>> {
    let d = bundle.dim;
    let m = bundle.times.len() - 1;
    let dt = bundle.times[1] - bundle.times[0];

    (0..bundle.states.len())
        .into_par_iter()
        .map_init(
            || AssetWorkspace::new(d),
            |ws, p| -> Result<Vec<f64>> {
                let mut series = Vec::with_capacity(m + 1);
                let mut pi = vec![0.0; d];
                let mut sig_pi = vec![0.0; d];
                let mut log_x = 0.0;
                series.push(1.0);
                for k in 0..m {
                    let t = bundle.times[k];
                    let y = bundle.states[p][k];
                    policy.weights(t, y, &mut pi)?;
                    if pi.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Solver(format!(
                            "policy produced non-finite weights at (t={t}, y={y})"
                        )));
                    }
                    coeffs.eval_assets_into(y, ws)?;
                    // π'σ for the quadratic-variation correction.
                    for j in 0..d {
                        let mut acc = 0.0;
                        for i in 0..d {
                            acc += pi[i] * ws.sigma[i * d + j];
                        }
                        sig_pi[j] = acc;
                    }
                    let quad: f64 = sig_pi.iter().map(|v| v * v).sum();
                    // π'ΔR carries drift and noise together, so the update is
                    // measure-agnostic: Δln X = (r − ½π'Σπ)dt + π'ΔR.
                    let mut pi_dr = 0.0;
                    for i in 0..d {
                        let dr = bundle.returns[p][(k + 1) * d + i] - bundle.returns[p][k * d + i];
                        pi_dr += pi[i] * dr;
                    }
                    let r = (coeffs.model.rate)(y);
                    log_x += (r - 0.5 * quad) * dt + pi_dr;
                    series.push(log_x.exp());
                }
                Ok(series)
            },
        )
        .collect()
}

// ---------------------------------------------------------------------------
// Turnpike diagnostics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TurnpikeRow {
    pub horizon: f64,
    /// P(sup_{u≤t} |r̂ᵀ_u − 1| ≥ ε)
    pub prob_sup: f64,
    pub prob_sup_se: f64,
    /// E[⟨Π̂ᵀ⟩_t]
    pub mean_bracket: f64,
    pub mean_bracket_se: f64,
    /// P(⟨Π̂ᵀ⟩_t ≥ ε)
    pub prob_bracket: f64,
    pub prob_bracket_se: f64,
}

#[derive(Debug, Clone)]
pub struct TurnpikeTable {
    pub time_window: f64,
    pub epsilon: f64,
    pub n_paths: usize,
    pub rows: Vec<TurnpikeRow>,
    pub clamp_fraction: f64,
}

fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Horizon-convergence diagnostics on a common set of physical-measure
/// paths: for each horizon solution, the wealth ratio `r̂ᵀ = X^{πᵀ}/X^{π̂}`
/// and the Σ-weighted squared policy distance `⟨Π̂ᵀ⟩` accumulated over
/// `[0, t]`, with tail probabilities at level `eps`.
///
/// Paths stream off the counter-based generator; nothing is materialized.
pub fn turnpike_diagnostics(
    coeffs: &DerivedCoefficients,
    eigen: &EigenResult,
    sols: &[&HorizonSolution],
    t: f64,
    eps: f64,
    config: &SimConfig,
) -> Result<TurnpikeTable> {
    config.validate()?;
    if sols.is_empty() {
        return Err(Error::Invalid("no horizon solutions supplied".into()));
    }
    for sol in sols {
        if sol.horizon < t - 1e-12 {
            return Err(Error::Invalid(format!(
                "time window t = {t} exceeds horizon {}",
                sol.horizon
            )));
        }
    }
    let d = coeffs.dim();
    let m = ((t / config.dt).round() as usize).max(1);
    let dt = t / m as f64;
    let sqrt_dt = dt.sqrt();
    let n_t = sols.len();
    let domain = coeffs.model.domain;
    let rho = coeffs.model.correlation.clone();
    let rho_bar = coeffs.rho_bar.clone();
    let delta_scale = coeffs.delta / (1.0 - coeffs.p);
    let myopic_scale = 1.0 / (1.0 - coeffs.p);

    struct PathStat {
        sup: Vec<f64>,
        bracket: Vec<f64>,
        clamped: bool,
    }

    let stats: Vec<Result<PathStat>> = (0..config.n_paths)
        .into_par_iter()
        .map_init(
            || AssetWorkspace::new(d),
            |ws, path| -> Result<PathStat> {
                let mut stream = NormalStream::new(config.seed, DOMAIN_SIM, path as u64);
                let mut y = config.initial_state;
                let mut db = vec![0.0; d];
                let mut dz = vec![0.0; d];
                let mut sig_myopic = vec![0.0; d]; // σ'(Σ^{-1}μ)/(1-p)
                let mut sig_hedge = vec![0.0; d]; // δ σ'(Σ^{-1}Υ)/(1-p)
                let mut log_x = vec![0.0; n_t]; // ln X^{πᵀ}
                let mut log_x_hat = 0.0;
                let mut sup = vec![0.0; n_t];
                let mut bracket = vec![0.0; n_t];
                let mut clamped = false;

                for k in 0..m {
                    let u = k as f64 * dt;
                    let zw = stream.next() * sqrt_dt;
                    for item in db.iter_mut() {
                        *item = stream.next() * sqrt_dt;
                    }
                    for i in 0..d {
                        let mut acc = rho[i] * zw;
                        for j in 0..d {
                            acc += rho_bar[i * d + j] * db[j];
                        }
                        dz[i] = acc;
                    }

                    coeffs.eval_assets_into(y, ws)?;
                    clamped |= !eigen.window.contains(y);
                    let ld_hat = eigen.log_deriv_at(y);
                    // Υ'Σ^{-1}Υ for the bracket increments.
                    let ups_quad = linalg::dot(&ws.upsilon, &ws.sigma_inv_upsilon);

                    for j in 0..d {
                        let mut acc_m = 0.0;
                        let mut acc_h = 0.0;
                        for i in 0..d {
                            acc_m += ws.sigma_inv_mu[i] * ws.sigma[i * d + j];
                            acc_h += ws.sigma_inv_upsilon[i] * ws.sigma[i * d + j];
                        }
                        sig_myopic[j] = myopic_scale * acc_m;
                        sig_hedge[j] = delta_scale * acc_h;
                    }
                    let mu_pi_base = myopic_scale * ws.mu_quad;
                    let mu_pi_hedge = delta_scale * ws.upsilon_mu;
                    let sig2_mm: f64 = sig_myopic.iter().map(|v| v * v).sum();
                    let sig2_mh: f64 = sig_myopic.iter().zip(&sig_hedge).map(|(a, b)| a * b).sum();
                    let sig2_hh: f64 = sig_hedge.iter().map(|v| v * v).sum();
                    let noise_m = linalg::dot(&sig_myopic, &dz);
                    let noise_h = linalg::dot(&sig_hedge, &dz);
                    let r_rate = (coeffs.model.rate)(y);

                    // Long-run wealth.
                    let quad_hat = sig2_mm + 2.0 * ld_hat * sig2_mh + ld_hat * ld_hat * sig2_hh;
                    log_x_hat += (r_rate + mu_pi_base + ld_hat * mu_pi_hedge - 0.5 * quad_hat) * dt
                        + noise_m
                        + ld_hat * noise_h;

                    for (s, sol) in sols.iter().enumerate() {
                        let ld_t = sol.log_deriv_at(u, y.clamp(
                            sol.grid.nodes[0],
                            sol.grid.nodes[sol.grid.n() - 1],
                        ))?;
                        let quad = sig2_mm + 2.0 * ld_t * sig2_mh + ld_t * ld_t * sig2_hh;
                        log_x[s] += (r_rate + mu_pi_base + ld_t * mu_pi_hedge - 0.5 * quad) * dt
                            + noise_m
                            + ld_t * noise_h;
                        // ⟨Π̂ᵀ⟩ increment: ((δ/(1-p)) (ldᵀ − ld̂))² Υ'Σ^{-1}Υ.
                        let diff = delta_scale * (ld_t - ld_hat);
                        bracket[s] += diff * diff * ups_quad * dt;
                        let ratio_dev = ((log_x[s] - log_x_hat).exp() - 1.0).abs();
                        if ratio_dev > sup[s] {
                            sup[s] = ratio_dev;
                        }
                    }

                    let a = (coeffs.model.state_vol)(y);
                    y += (coeffs.model.state_drift)(y) * dt + a * zw;
                    let (yr, _) = reflect_into(domain, y);
                    y = yr;
                }
                Ok(PathStat { sup, bracket, clamped })
            },
        )
        .collect();

    let n = config.n_paths;
    let mut sup_hits = vec![0usize; n_t];
    let mut bracket_sum = vec![0.0f64; n_t];
    let mut bracket_sq = vec![0.0f64; n_t];
    let mut bracket_hits = vec![0usize; n_t];
    let mut clamped_paths = 0usize;
    for stat in stats {
        let stat = stat?;
        clamped_paths += stat.clamped as usize;
        for s in 0..n_t {
            if stat.sup[s] >= eps {
                sup_hits[s] += 1;
            }
            bracket_sum[s] += stat.bracket[s];
            bracket_sq[s] += stat.bracket[s] * stat.bracket[s];
            if stat.bracket[s] >= eps {
                bracket_hits[s] += 1;
            }
        }
    }

    let rows = (0..n_t)
        .map(|s| {
            let p_sup = sup_hits[s] as f64 / n as f64;
            let mean = bracket_sum[s] / n as f64;
            let var = (bracket_sq[s] / n as f64 - mean * mean).max(0.0);
            let p_br = bracket_hits[s] as f64 / n as f64;
            TurnpikeRow {
                horizon: sols[s].horizon,
                prob_sup: p_sup,
                prob_sup_se: binomial_se(p_sup, n),
                mean_bracket: mean,
                mean_bracket_se: (var / n as f64).sqrt(),
                prob_bracket: p_br,
                prob_bracket_se: binomial_se(p_br, n),
            }
        })
        .collect();

    let clamp_fraction = clamped_paths as f64 / n as f64;
    if clamp_fraction > 0.01 {
        return Err(Error::Flagged(format!(
            "{:.2}% of paths needed clamped policy evaluations; enlarge the window",
            clamp_fraction * 100.0
        )));
    }

    Ok(TurnpikeTable {
        time_window: t,
        epsilon: eps,
        n_paths: n,
        rows,
        clamp_fraction,
    })
}

// ---------------------------------------------------------------------------
// Wealth-ratio and density-ratio identities
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct IdentityReport {
    /// Max over paths and times of |LHS/RHS − 1| for the wealth-ratio
    /// identity.
    pub max_rel_discrepancy: f64,
    /// Sample mean and standard error of the density ratio at `t_max`.
    pub density_mean: f64,
    pub density_se: f64,
    pub n_paths: usize,
}

/// Pathwise check of the wealth/density ratio identities on matched
/// increments under the long-run measure:
///
/// `X^{πᵀ}_t / X^{π̂}_t = (h(t,Y_t)/h(0,y))^{(1-δ)/p} · ℰ(−∫ aΔ (h_y/h) dB̂)^{1/p}`
///
/// with `Δ = qδρ'ρ̄`, and the conditional density ratio
/// `(h(t,Y_t)/h(0,y)) · ℰ(−∫ aΔ (h_y/h) dB̂)` whose sample mean must be one.
pub fn wealth_ratio_identity_check(
    coeffs: &DerivedCoefficients,
    eigen: &EigenResult,
    sol: &HorizonSolution,
    config: &SimConfig,
) -> Result<IdentityReport> {
    if coeffs.p == 0.0 {
        return Err(Error::Invalid(
            "the wealth-ratio identity is stated for the isoelastic pair with p ≠ 0".into(),
        ));
    }
    let mut cfg = *config;
    cfg.measure = Measure::LongRun;
    if cfg.t_max > sol.horizon {
        return Err(Error::Invalid(format!(
            "t_max = {} exceeds the horizon {}",
            cfg.t_max, sol.horizon
        )));
    }
    let bundle = simulate_paths(coeffs, Some(eigen), &cfg)?;
    let ratios = density_ratio_path(coeffs, eigen, sol, &bundle)?;

    let hedge = HorizonPolicy { sol, coeffs };
    let anchor = LongRunPolicy { eigen, coeffs };
    let x_t = wealth_path(&bundle, &hedge, coeffs)?;
    let x_hat = wealth_path(&bundle, &anchor, coeffs)?;

    let h0 = sol.h_at(0.0, cfg.initial_state)?;
    let expo_outer = (1.0 - coeffs.delta) / coeffs.p;
    let inv_p = 1.0 / coeffs.p;
    let m = bundle.times.len() - 1;

    let mut worst = 0.0f64;
    let mut terminal = Vec::with_capacity(cfg.n_paths);
    for p in 0..cfg.n_paths {
        for k in 1..=m {
            let t = bundle.times[k];
            let y = bundle.states[p][k];
            let lhs = x_t[p][k] / x_hat[p][k];
            let h_ratio = sol.h_at(t, y)? / h0;
            // density_ratio = h_ratio · ℰ; recover ℰ from it.
            let exp_mart = ratios[p][k] / h_ratio;
            let rhs = h_ratio.powf(expo_outer) * exp_mart.powf(inv_p);
            let rel = (lhs / rhs - 1.0).abs();
            if rel > worst {
                worst = rel;
            }
        }
        terminal.push(ratios[p][m]);
    }
    let n = terminal.len();
    let mean = terminal.iter().sum::<f64>() / n as f64;
    let var = terminal.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    Ok(IdentityReport {
        max_rel_discrepancy: worst,
        density_mean: mean,
        density_se: (var / n as f64).sqrt(),
        n_paths: n,
    })
}

/// Per-path series of the conditional density ratio
/// `(h(t,Y_t)/h(0,y)) · ℰ(−∫ aΔ (h_y/h) dB̂)_t` along a long-run bundle.
pub fn density_ratio_path(
    coeffs: &DerivedCoefficients,
    eigen: &EigenResult,
    sol: &HorizonSolution,
    bundle: &PathBundle,
) -> Result<Vec<Vec<f64>>> {
    if bundle.config.measure != Measure::LongRun {
        return Err(Error::Invalid(
            "density ratios are defined along long-run paths".into(),
        ));
    }
    let _ = eigen;
    let d = bundle.dim;
    let m = bundle.times.len() - 1;
    let dt = bundle.times[1] - bundle.times[0];
    let y0 = bundle.config.initial_state;
    let h0 = sol.h_at(0.0, y0)?;
    // Δ = q δ ρ'ρ̄ (row vector).
    let rho = &coeffs.model.correlation;
    let mut delta_vec = vec![0.0; d];
    for j in 0..d {
        let mut acc = 0.0;
        for i in 0..d {
            acc += rho[i] * coeffs.rho_bar[i * d + j];
        }
        delta_vec[j] = coeffs.q * coeffs.delta * acc;
    }
    let delta_sq = linalg::dot(&delta_vec, &delta_vec);

    (0..bundle.states.len())
        .into_par_iter()
        .map(|p| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(m + 1);
            out.push(1.0);
            let mut log_mart = 0.0;
            for k in 0..m {
                let t = bundle.times[k];
                let y = bundle.states[p][k];
                let a = (coeffs.model.state_vol)(y);
                let h_ld = sol.h_log_deriv_at(
                    t,
                    y.clamp(sol.grid.nodes[0], sol.grid.nodes[sol.grid.n() - 1]),
                )?;
                let scale = -a * h_ld;
                let mut drive = 0.0;
                for j in 0..d {
                    drive += delta_vec[j] * bundle.orthogonal_increments[p][k * d + j];
                }
                log_mart += scale * drive - 0.5 * scale * scale * delta_sq * dt;
                let t_next = bundle.times[k + 1];
                let y_next = bundle.states[p][k + 1];
                let h_ratio = sol.h_at(
                    t_next,
                    y_next.clamp(sol.grid.nodes[0], sol.grid.nodes[sol.grid.n() - 1]),
                )? / h0;
                out.push(h_ratio * log_mart.exp());
            }
            Ok(out)
        })
        .collect()
}

/// Kolmogorov–Smirnov distance between endpoint samples and a density given
/// on a grid.
pub fn ks_distance(samples: &mut [f64], grid: &crate::grid::Grid1D, density: &[f64]) -> f64 {
    samples.sort_by(f64::total_cmp);
    // CDF on the grid by cumulative trapezoid.
    let n = grid.n();
    let mut cdf = vec![0.0; n];
    for i in 1..n {
        cdf[i] = cdf[i - 1]
            + 0.5 * (density[i] + density[i - 1]) * (grid.nodes[i] - grid.nodes[i - 1]);
    }
    let total = cdf[n - 1];
    for v in &mut cdf {
        *v /= total;
    }
    let m = samples.len();
    let mut worst = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        let f = grid.interp(&cdf, x).clamp(0.0, 1.0);
        worst = worst.max((f - i as f64 / m as f64).abs());
        worst = worst.max((f - (i + 1) as f64 / m as f64).abs());
    }
    worst
}
