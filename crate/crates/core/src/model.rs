//! Market primitives: the one-factor diffusion model, utility functions, and
//! the derived coefficient functions every downstream solver consumes.
//!
//! A market has state dynamics `dY = b(Y) dt + a(Y) dW` on an open interval
//! `E = (α, β)`, a safe rate `r(Y)`, and `d` risky assets with excess returns
//! `dR = μ(Y) dt + σ(Y) dZ`, where `Z = ρ W + ρ̄ B` carries the constant
//! correlation vector `ρ`.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::coefficients::{eval_coefficient, parse_coefficient, CoefficientExpr};
use crate::error::{Error, Result};
use crate::kv::{parse_extended_f64, Sections};
use crate::linalg;
use crate::quad;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Open state interval `(lo, hi)`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, y: f64) -> bool {
        y > self.lo && y < self.hi
    }
}

/// One-factor diffusion market primitive.
///
/// Coefficient evaluation is pure; closures built from parsed expressions
/// signal domain failures by returning NaN, which the consumers surface as
/// errors with position information.
#[derive(Clone)]
pub struct DiffusionModel {
    pub domain: Interval,
    pub dim: usize,
    pub rate: ScalarFn,
    pub state_drift: ScalarFn,
    pub state_vol: ScalarFn,
    /// Component functions of the excess-return drift μ.
    pub excess_drift: Vec<ScalarFn>,
    /// Row-major component functions of the volatility matrix σ.
    pub vol: Vec<ScalarFn>,
    /// Constant correlation vector ρ between the asset and state noises.
    pub correlation: Vec<f64>,
    /// Canonical description used for content addressing.
    pub descriptor: String,
}

impl std::fmt::Debug for DiffusionModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiffusionModel")
            .field("domain", &self.domain)
            .field("dim", &self.dim)
            .field("correlation", &self.correlation)
            .field("descriptor", &self.descriptor)
            .finish()
    }
}

fn expr_fn(expr: CoefficientExpr) -> ScalarFn {
    Arc::new(move |y| eval_coefficient(&expr, y).unwrap_or(f64::NAN))
}

fn const_fn(v: f64) -> ScalarFn {
    Arc::new(move |_| v)
}

impl DiffusionModel {
    /// Linear family: `r` constant, `b = -reversion·y`, `a = state_vol`,
    /// `μ = slope·y`, `σ` constant, on the whole real line.
    pub fn linear(rate: f64, reversion: f64, state_vol: f64, slope: f64, vol: f64, rho: f64) -> Self {
        let mut descriptor = String::new();
        let _ = write!(
            descriptor,
            "preset=linear;rate={rate};reversion={reversion};state_vol={state_vol};slope={slope};vol={vol};rho={rho}"
        );
        DiffusionModel {
            domain: Interval {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
            },
            dim: 1,
            rate: const_fn(rate),
            state_drift: Arc::new(move |y| -reversion * y),
            state_vol: const_fn(state_vol),
            excess_drift: vec![Arc::new(move |y| slope * y)],
            vol: vec![const_fn(vol)],
            correlation: vec![rho],
            descriptor,
        }
    }

    /// Constant-coefficient market (state exists but does not feed the asset
    /// coefficients); the state itself mean-reverts so simulations stay tame.
    pub fn black_scholes(rate: f64, drift: f64, vol: f64) -> Self {
        let descriptor = format!("preset=black_scholes;rate={rate};drift={drift};vol={vol}");
        DiffusionModel {
            domain: Interval {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
            },
            dim: 1,
            rate: const_fn(rate),
            state_drift: Arc::new(|y| -y),
            state_vol: const_fn(1.0),
            excess_drift: vec![const_fn(drift)],
            vol: vec![const_fn(vol)],
            correlation: vec![0.0],
            descriptor,
        }
    }

    /// Loads a model definition file (sections `[domain]`, `[coefficients]`,
    /// `[correlation]`). Coefficient values are either a named preset with
    /// parameters or expression strings in `y`; vectors are comma-separated
    /// and matrix rows semicolon-separated.
    pub fn from_definition(text: &str) -> Result<Self> {
        let sections = Sections::parse(text)?;
        let lo = sections.f64("domain", "lower")?.unwrap_or(f64::NEG_INFINITY);
        let hi = sections.f64("domain", "upper")?.unwrap_or(f64::INFINITY);
        if !(lo < hi) {
            return Err(Error::Model(format!("empty domain ({lo}, {hi})")));
        }
        let domain = Interval { lo, hi };

        let coeff = sections
            .section("coefficients")
            .ok_or_else(|| Error::Model("missing [coefficients] section".into()))?;

        let rho: Vec<f64> = match sections.get("correlation", "rho") {
            None => vec![0.0],
            Some(raw) => raw
                .split(',')
                .map(|p| {
                    parse_extended_f64(p)
                        .ok_or_else(|| Error::Model(format!("bad correlation entry `{p}`")))
                })
                .collect::<Result<_>>()?,
        };
        let rho_sq = linalg::dot(&rho, &rho);
        if rho_sq > 1.0 + 1e-12 {
            return Err(Error::Model(format!("ρ'ρ = {rho_sq} exceeds 1")));
        }

        if let Some(preset) = coeff.get("preset") {
            let get = |key: &str, default: f64| -> Result<f64> {
                match coeff.get(key) {
                    None => Ok(default),
                    Some(raw) => parse_extended_f64(raw)
                        .ok_or_else(|| Error::Model(format!("[coefficients] {key}: bad number `{raw}`"))),
                }
            };
            let mut model = match preset.as_str() {
                "linear" => DiffusionModel::linear(
                    get("rate", 0.0)?,
                    get("reversion", 1.0)?,
                    get("state_vol", 1.0)?,
                    get("slope", 1.0)?,
                    get("vol", 1.0)?,
                    rho[0],
                ),
                "black_scholes" => DiffusionModel::black_scholes(
                    get("rate", 0.0)?,
                    get("drift", 0.0)?,
                    get("vol", 1.0)?,
                ),
                other => return Err(Error::Model(format!("unknown preset `{other}`"))),
            };
            if rho.len() != model.dim {
                return Err(Error::Model(format!(
                    "correlation has {} entries but the market has {} assets",
                    rho.len(),
                    model.dim
                )));
            }
            model.correlation = rho.clone();
            model.domain = domain;
            model.descriptor = sections.canonical();
            return Ok(model);
        }

        let scalar = |key: &str| -> Result<ScalarFn> {
            let raw = coeff
                .get(key)
                .ok_or_else(|| Error::Model(format!("missing coefficient `{key}`")))?;
            Ok(expr_fn(parse_coefficient(raw)?))
        };
        let rate = scalar("r")?;
        let state_drift = scalar("b")?;
        let state_vol = scalar("a")?;

        let mu_raw = coeff
            .get("mu")
            .ok_or_else(|| Error::Model("missing coefficient `mu`".into()))?;
        let excess_drift: Vec<ScalarFn> = mu_raw
            .split(',')
            .map(|p| Ok(expr_fn(parse_coefficient(p)?)))
            .collect::<Result<_>>()?;
        let dim = excess_drift.len();

        let sigma_raw = coeff
            .get("sigma")
            .ok_or_else(|| Error::Model("missing coefficient `sigma`".into()))?;
        let rows: Vec<&str> = sigma_raw.split(';').collect();
        if rows.len() != dim {
            return Err(Error::Model(format!(
                "sigma has {} rows but mu has {dim} components",
                rows.len()
            )));
        }
        let mut vol = Vec::with_capacity(dim * dim);
        for row in rows {
            let entries: Vec<&str> = row.split(',').collect();
            if entries.len() != dim {
                return Err(Error::Model(format!(
                    "sigma row `{row}` has {} entries, expected {dim}",
                    entries.len()
                )));
            }
            for entry in entries {
                vol.push(expr_fn(parse_coefficient(entry)?));
            }
        }
        if rho.len() != dim {
            return Err(Error::Model(format!(
                "correlation has {} entries but the market has {dim} assets",
                rho.len()
            )));
        }

        Ok(DiffusionModel {
            domain,
            dim,
            rate,
            state_drift,
            state_vol,
            excess_drift,
            vol,
            correlation: rho,
            descriptor: sections.canonical(),
        })
    }

    pub fn mu(&self, y: f64, out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.excess_drift) {
            *o = f(y);
        }
    }

    pub fn sigma(&self, y: f64, out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.vol) {
            *o = f(y);
        }
    }

    /// Checks non-degeneracy (`a > 0`, σ invertible, finite coefficients) at
    /// a sample point.
    pub fn validate_at(&self, y: f64) -> Result<()> {
        let a = (self.state_vol)(y);
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::Model(format!("state volatility a({y}) = {a} is not positive")));
        }
        for (name, f) in [("r", &self.rate), ("b", &self.state_drift)] {
            let v = f(y);
            if !v.is_finite() {
                return Err(Error::Model(format!("coefficient {name}({y}) is not finite")));
            }
        }
        let d = self.dim;
        let mut sig = vec![0.0; d * d];
        self.sigma(y, &mut sig);
        if sig.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model(format!("volatility σ({y}) has non-finite entries")));
        }
        let mut probe = vec![1.0; d];
        let mut gram = vec![0.0; d * d];
        // Σ = σσ'
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += sig[i * d + k] * sig[j * d + k];
                }
                gram[i * d + j] = acc;
            }
        }
        linalg::solve_in_place(&mut gram, &mut probe)
            .map_err(|_| Error::Model(format!("σ({y}) is not invertible")))?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Utilities
// ---------------------------------------------------------------------------

/// Terminal-wealth utility specification.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Utility {
    /// `x^p / p` with `p < 1`, `p ≠ 0`.
    Power { p: f64 },
    /// `log x`.
    Logarithmic,
    /// `Σ wᵢ x^{1-γᵢ} / (1-γᵢ)` with positive weights and risk aversions.
    Mixture(Vec<MixtureTerm>),
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MixtureTerm {
    pub weight: f64,
    pub gamma: f64,
}

impl Utility {
    pub fn power(p: f64) -> Result<Self> {
        if p >= 1.0 || p == 0.0 {
            return Err(Error::Invalid(format!("power utility requires p < 1, p ≠ 0 (got {p})")));
        }
        Ok(Utility::Power { p })
    }

    pub fn mixture(terms: Vec<MixtureTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Invalid("mixture utility needs at least one term".into()));
        }
        for t in &terms {
            if !(t.weight > 0.0) {
                return Err(Error::Invalid(format!("mixture weight {} must be positive", t.weight)));
            }
            if !(t.gamma > 0.0) {
                return Err(Error::Invalid(format!("risk aversion {} must be positive", t.gamma)));
            }
            if t.gamma == 1.0 {
                return Err(Error::Invalid(
                    "logarithmic participants (γ = 1) enter through an additive constant and are \
                     excluded from the mixture"
                        .into(),
                ));
            }
        }
        Ok(Utility::Mixture(terms))
    }

    /// Exponent of the isoelastic benchmark this utility approaches at large
    /// wealth: `p` itself for CRRA members, `1 - min γᵢ` for mixtures.
    pub fn effective_p(&self) -> f64 {
        match self {
            Utility::Power { p } => *p,
            Utility::Logarithmic => 0.0,
            Utility::Mixture(terms) => {
                1.0 - terms.iter().map(|t| t.gamma).fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Marginal utility `U'(x)`.
    pub fn marginal(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Invalid(format!("marginal utility requires x > 0 (got {x})")));
        }
        Ok(match self {
            Utility::Power { p } => x.powf(p - 1.0),
            Utility::Logarithmic => 1.0 / x,
            Utility::Mixture(terms) => terms.iter().map(|t| t.weight * x.powf(-t.gamma)).sum(),
        })
    }

    /// Rescales mixture weights so the components with minimal γ carry total
    /// weight one; positive scalings of U do not change optimizers. CRRA
    /// members are returned unchanged.
    pub fn normalized(&self) -> Utility {
        match self {
            Utility::Mixture(terms) => {
                let gmin = terms.iter().map(|t| t.gamma).fold(f64::INFINITY, f64::min);
                let norm: f64 = terms
                    .iter()
                    .filter(|t| t.gamma == gmin)
                    .map(|t| t.weight)
                    .sum();
                Utility::Mixture(
                    terms
                        .iter()
                        .map(|t| MixtureTerm {
                            weight: t.weight / norm,
                            gamma: t.gamma,
                        })
                        .collect(),
                )
            }
            other => other.clone(),
        }
    }
}

/// Marginal utility ratio `ℜ(x) = U'(x) / x^{p_ref - 1}` after weight
/// normalization; the quantity that must tend to one for the isoelastic
/// benchmark with exponent `p_ref` to be the right long-horizon proxy.
pub fn marginal_ratio(utility: &Utility, p_ref: f64, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Invalid(format!("marginal ratio requires x > 0 (got {x})")));
    }
    let u = utility.normalized();
    Ok(u.marginal(x)? / x.powf(p_ref - 1.0))
}

/// Master utility of a planner maximizing `Σ wᵢ E[(xᵢ X)^{1-γᵢ}/(1-γᵢ)]`:
/// a mixture with weights `w̃ᵢ = wᵢ xᵢ^{1-γᵢ}`.
pub fn build_planner_utility(capitals: &[f64], gammas: &[f64], weights: &[f64]) -> Result<Utility> {
    if capitals.len() != gammas.len() || gammas.len() != weights.len() {
        return Err(Error::Invalid(format!(
            "planner inputs must have equal lengths (got {}, {}, {})",
            capitals.len(),
            gammas.len(),
            weights.len()
        )));
    }
    let mut terms = Vec::with_capacity(capitals.len());
    for ((&x, &g), &w) in capitals.iter().zip(gammas).zip(weights) {
        if !(x > 0.0) || !(w > 0.0) {
            return Err(Error::Invalid("planner capitals and weights must be positive".into()));
        }
        terms.push(MixtureTerm {
            weight: w * x.powf(1.0 - g),
            gamma: g,
        });
    }
    Utility::mixture(terms)
}

// ---------------------------------------------------------------------------
// Derived coefficients
// ---------------------------------------------------------------------------

/// Everything the eigenproblem, PDE, and simulation layers consume, derived
/// from a model and a risk-aversion exponent `p`:
///
/// - `q = p/(p-1)`, `δ = (1 - q ρ'ρ)^{-1}`
/// - potential `c = (p r - (q/2) μ'Σ^{-1}μ)/δ`
/// - drift `B = b - q Υ'Σ^{-1}μ` with `Υ = σρ a`, `Σ = σσ'`, `A = a²`
/// - speed densities `m`, `m̂` anchored at `y₀`.
#[derive(Clone)]
pub struct DerivedCoefficients {
    pub model: Arc<DiffusionModel>,
    pub p: f64,
    pub q: f64,
    pub delta: f64,
    pub y0: f64,
    pub rho_sq: f64,
    /// Principal root of `I - ρρ'`.
    pub rho_bar: Vec<f64>,
    /// Absolute tolerance for the speed-measure integrals.
    pub quad_tol: f64,
}

/// Scalar reductions of the asset block at a point.
pub struct AssetBlock {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub sigma_inv_mu: Vec<f64>,
    pub sigma_inv_upsilon: Vec<f64>,
    pub upsilon: Vec<f64>,
    /// μ'Σ^{-1}μ
    pub mu_quad: f64,
    /// Υ'Σ^{-1}μ
    pub upsilon_mu: f64,
}

/// Reusable buffers for asset-block evaluation inside per-step loops, where
/// fresh allocations per call would dominate the cost.
pub struct AssetWorkspace {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub upsilon: Vec<f64>,
    pub sigma_inv_mu: Vec<f64>,
    pub sigma_inv_upsilon: Vec<f64>,
    pub mu_quad: f64,
    pub upsilon_mu: f64,
    gram: Vec<f64>,
    lu: Vec<f64>,
}

impl AssetWorkspace {
    pub fn new(dim: usize) -> Self {
        AssetWorkspace {
            mu: vec![0.0; dim],
            sigma: vec![0.0; dim * dim],
            upsilon: vec![0.0; dim],
            sigma_inv_mu: vec![0.0; dim],
            sigma_inv_upsilon: vec![0.0; dim],
            mu_quad: 0.0,
            upsilon_mu: 0.0,
            gram: vec![0.0; dim * dim],
            lu: vec![0.0; dim * dim],
        }
    }
}

pub fn derive_coefficients(model: Arc<DiffusionModel>, p: f64, y0: f64) -> Result<DerivedCoefficients> {
    if p >= 1.0 {
        return Err(Error::Invalid(format!("requires p < 1 (got {p})")));
    }
    if !model.domain.contains(y0) {
        return Err(Error::Invalid(format!(
            "reference point y0 = {y0} lies outside the state interval ({}, {})",
            model.domain.lo, model.domain.hi
        )));
    }
    let q = if p == 0.0 { 0.0 } else { p / (p - 1.0) };
    let rho_sq = linalg::dot(&model.correlation, &model.correlation);
    if rho_sq > 1.0 + 1e-12 {
        return Err(Error::Model(format!("ρ'ρ = {rho_sq} exceeds 1")));
    }
    let denom = 1.0 - q * rho_sq;
    if denom <= 0.0 {
        return Err(Error::Invalid(format!(
            "q ρ'ρ = {} ≥ 1: the power transformation degenerates; rejecting the input",
            q * rho_sq
        )));
    }
    model.validate_at(y0)?;
    let rho_bar = linalg::orthogonal_correlation_root(&model.correlation)?;
    Ok(DerivedCoefficients {
        model,
        p,
        q,
        delta: 1.0 / denom,
        y0,
        rho_sq,
        rho_bar,
        quad_tol: 1e-10,
    })
}

impl DerivedCoefficients {
    pub fn dim(&self) -> usize {
        self.model.dim
    }

    /// Evaluates μ, σ, Υ and the Σ-solves at `y` into reusable buffers.
    pub fn eval_assets_into(&self, y: f64, ws: &mut AssetWorkspace) -> Result<()> {
        let d = self.model.dim;
        self.model.mu(y, &mut ws.mu);
        self.model.sigma(y, &mut ws.sigma);
        if ws.mu.iter().chain(ws.sigma.iter()).any(|v| !v.is_finite()) {
            return Err(Error::domain(
                format!("asset coefficients at y = {y}"),
                "non-finite value",
            ));
        }
        let a = (self.model.state_vol)(y);
        // Υ = σ ρ a
        for i in 0..d {
            let mut acc = 0.0;
            for j in 0..d {
                acc += ws.sigma[i * d + j] * self.model.correlation[j];
            }
            ws.upsilon[i] = acc * a;
        }
        // Σ = σσ'
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += ws.sigma[i * d + k] * ws.sigma[j * d + k];
                }
                ws.gram[i * d + j] = acc;
            }
        }
        ws.sigma_inv_mu.copy_from_slice(&ws.mu);
        ws.lu.copy_from_slice(&ws.gram);
        linalg::solve_in_place(&mut ws.lu, &mut ws.sigma_inv_mu)
            .map_err(|_| Error::Model(format!("Σ({y}) is singular")))?;
        ws.sigma_inv_upsilon.copy_from_slice(&ws.upsilon);
        ws.lu.copy_from_slice(&ws.gram);
        linalg::solve_in_place(&mut ws.lu, &mut ws.sigma_inv_upsilon)
            .map_err(|_| Error::Model(format!("Σ({y}) is singular")))?;
        ws.mu_quad = linalg::dot(&ws.mu, &ws.sigma_inv_mu);
        ws.upsilon_mu = linalg::dot(&ws.upsilon, &ws.sigma_inv_mu);
        Ok(())
    }

    /// `B(y)` using caller-provided buffers (hot-loop variant of [`Self::cap_b`]).
    pub fn cap_b_with(&self, y: f64, ws: &mut AssetWorkspace) -> Result<f64> {
        self.eval_assets_into(y, ws)?;
        let b = (self.model.state_drift)(y);
        if !b.is_finite() {
            return Err(Error::domain(format!("b({y})"), "non-finite value"));
        }
        Ok(b - self.q * ws.upsilon_mu)
    }

    /// Evaluates μ, σ and the Σ-solves at `y`.
    pub fn asset_block(&self, y: f64) -> Result<AssetBlock> {
        let mut ws = AssetWorkspace::new(self.model.dim);
        self.eval_assets_into(y, &mut ws)?;
        Ok(AssetBlock {
            mu: ws.mu,
            sigma: ws.sigma,
            sigma_inv_mu: ws.sigma_inv_mu,
            sigma_inv_upsilon: ws.sigma_inv_upsilon,
            upsilon: ws.upsilon,
            mu_quad: ws.mu_quad,
            upsilon_mu: ws.upsilon_mu,
        })
    }

    /// Potential `c(y) = (p r - (q/2) μ'Σ^{-1}μ)/δ`.
    pub fn c(&self, y: f64) -> Result<f64> {
        let block = self.asset_block(y)?;
        let r = (self.model.rate)(y);
        if !r.is_finite() {
            return Err(Error::domain(format!("r({y})"), "non-finite value"));
        }
        Ok((self.p * r - 0.5 * self.q * block.mu_quad) / self.delta)
    }

    /// Drift `B(y) = b - q Υ'Σ^{-1}μ` of the reduced state generator.
    pub fn cap_b(&self, y: f64) -> Result<f64> {
        let block = self.asset_block(y)?;
        let b = (self.model.state_drift)(y);
        if !b.is_finite() {
            return Err(Error::domain(format!("b({y})"), "non-finite value"));
        }
        Ok(b - self.q * block.upsilon_mu)
    }

    /// `A(y) = a(y)²`.
    pub fn cap_a(&self, y: f64) -> f64 {
        let a = (self.model.state_vol)(y);
        a * a
    }

    /// `∫_{y0}^{y} 2 b / A` — the log-weight of the physical speed density.
    pub fn log_m_weight(&self, y: f64) -> Result<f64> {
        self.log_weight(y, false)
    }

    /// `∫_{y0}^{y} 2 B / A` — the log-weight of the reduced speed density.
    pub fn log_m_hat_weight(&self, y: f64) -> Result<f64> {
        self.log_weight(y, true)
    }

    fn log_weight(&self, y: f64, reduced: bool) -> Result<f64> {
        let integrand = |z: f64| -> f64 {
            let a2 = self.cap_a(z);
            let num = if reduced {
                self.cap_b(z).unwrap_or(f64::NAN)
            } else {
                (self.model.state_drift)(z)
            };
            2.0 * num / a2
        };
        let out = quad::integrate(&integrand, self.y0, y, self.quad_tol);
        if let Some(x) = out.non_finite_at {
            return Err(Error::domain(
                format!("speed-measure integrand at y = {x}"),
                "non-finite value",
            ));
        }
        Ok(out.value)
    }

    /// Physical speed density `m(y) = exp(∫ 2b/A) / A`, anchored so that
    /// `m(y0) = 1/A(y0)`.
    pub fn m(&self, y: f64) -> Result<f64> {
        Ok((self.log_m_weight(y)?).exp() / self.cap_a(y))
    }

    /// Reduced speed density `m̂(y) = exp(∫ 2B/A) / A`.
    pub fn m_hat(&self, y: f64) -> Result<f64> {
        Ok((self.log_m_hat_weight(y)?).exp() / self.cap_a(y))
    }
}
