//! Shared oracles and fixtures for the integration suites. Everything here
//! is independent of the solver paths it is used to check: the eigen oracle
//! is a closed-form Gaussian ansatz, the horizon oracle a Runge–Kutta
//! integration of the scalar reduction of the linear model.

use std::sync::Arc;

use turnpike::eigen::{solve_principal, EigenOptions, EigenResult};
use turnpike::grid::{Grid1D, Window};
use turnpike::model::{derive_coefficients, DerivedCoefficients, DiffusionModel};

/// Benchmark market: `r = 0.05`, `b = -y`, `a = 1`, `μ = y`, `σ = 1`.
pub fn linear_coeffs(rho: f64, p: f64) -> DerivedCoefficients {
    let model = Arc::new(DiffusionModel::linear(0.05, 1.0, 1.0, 1.0, 1.0, rho));
    derive_coefficients(model, p, 0.0).unwrap()
}

/// Closed-form principal pair for the linear family: substituting
/// `v = exp(-a y²/2)` into the long-run equation forces
/// `a² + 2(κ + qρ) a − q/δ = 0` and `λ = p r/δ − a/2`.
pub fn gaussian_ansatz(rate: f64, kappa: f64, p: f64, rho: f64) -> (f64, f64) {
    let q = p / (p - 1.0);
    let delta = 1.0 / (1.0 - q * rho * rho);
    let drift = kappa + q * rho;
    let a_star = -drift + (drift * drift + q / delta).sqrt();
    (a_star, p * rate / delta - 0.5 * a_star)
}

/// Solves the benchmark eigenproblem on `[-8, 8]`.
pub fn solve_linear_eigen(rho: f64, p: f64, n: usize, check_window: bool) -> (EigenResult, DerivedCoefficients) {
    let coeffs = linear_coeffs(rho, p);
    let grid = Grid1D::uniform(Window { lo: -8.0, hi: 8.0 }, n).unwrap();
    let opts = EigenOptions {
        check_window,
        ..EigenOptions::default()
    };
    let eigen = solve_principal(&coeffs, &grid, opts).unwrap();
    (eigen, coeffs)
}

/// Scalar reduction of the linear-model horizon equation with `ρ = -0.5`,
/// `p = -1`: `v(t, y) = exp(φ(τ) + ψ(τ) y²/2)` with
/// `ψ' = ψ² − 1.5ψ − 0.4375`, `φ' = ψ/2 − 0.04375`, both starting at zero.
/// One fourth-order Runge–Kutta sweep with checkpoints at the requested
/// lapse values (which must be ascending).
pub struct RiccatiOracle {
    checkpoints: Vec<(f64, f64, f64)>, // (tau, phi, psi)
}

impl RiccatiOracle {
    pub fn integrate(taus: &[f64]) -> Self {
        let f_psi = |psi: f64| psi * psi - 1.5 * psi - 0.4375;
        let f_phi = |psi: f64| 0.5 * psi - 0.04375;
        let h = 1e-5f64;
        let mut tau = 0.0f64;
        let mut psi = 0.0f64;
        let mut phi = 0.0f64;
        let mut checkpoints = Vec::with_capacity(taus.len());
        for &target in taus {
            assert!(target >= tau, "checkpoints must ascend");
            while tau < target {
                let step = h.min(target - tau);
                let k1 = f_psi(psi);
                let k2 = f_psi(psi + 0.5 * step * k1);
                let k3 = f_psi(psi + 0.5 * step * k2);
                let k4 = f_psi(psi + step * k3);
                let g1 = f_phi(psi);
                let g2 = f_phi(psi + 0.5 * step * k1);
                let g3 = f_phi(psi + 0.5 * step * k2);
                let g4 = f_phi(psi + step * k3);
                psi += step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                phi += step / 6.0 * (g1 + 2.0 * g2 + 2.0 * g3 + g4);
                tau += step;
            }
            checkpoints.push((target, phi, psi));
        }
        RiccatiOracle { checkpoints }
    }

    pub fn value(&self, index: usize, y: f64) -> f64 {
        let (_, phi, psi) = self.checkpoints[index];
        (phi + 0.5 * psi * y * y).exp()
    }

    pub fn psi(&self, index: usize) -> f64 {
        self.checkpoints[index].2
    }
}
