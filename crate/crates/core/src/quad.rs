//! Deterministic quadrature: adaptive Gauss–Kronrod (G7–K15) on finite
//! intervals and Gauss–Hermite rules for Gaussian expectations.

use crate::tridiag::SymTridiag;

// 15-point Kronrod abscissae (positive half, descending) with the embedded
// 7-point Gauss rule at the odd indices.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Result of an adaptive integration over a finite interval.
#[derive(Debug, Clone, Copy)]
pub struct QuadOutcome {
    pub value: f64,
    pub abs_error: f64,
    /// Whether the error estimate met the requested tolerance everywhere.
    pub converged: bool,
    /// First abscissa at which the integrand was non-finite, if any.
    pub non_finite_at: Option<f64>,
}

struct Panel {
    value: f64,
    error: f64,
    non_finite_at: Option<f64>,
}

fn k15_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);

    let mut kronrod = 0.0;
    let mut gauss = 0.0;
    let mut non_finite_at = None;

    let mut record = |x: f64, v: f64| {
        if !v.is_finite() && non_finite_at.is_none() {
            non_finite_at = Some(x);
        }
    };

    for (j, &xi) in XGK.iter().enumerate() {
        if xi == 0.0 {
            let v = f(center);
            record(center, v);
            kronrod += WGK[j] * v;
            gauss += WG[3] * v;
        } else {
            let xl = center - half * xi;
            let xr = center + half * xi;
            let vl = f(xl);
            let vr = f(xr);
            record(xl, vl);
            record(xr, vr);
            kronrod += WGK[j] * (vl + vr);
            if j % 2 == 1 {
                gauss += WG[j / 2] * (vl + vr);
            }
        }
    }

    kronrod *= half;
    gauss *= half;
    Panel {
        value: kronrod,
        error: (kronrod - gauss).abs(),
        non_finite_at,
    }
}

fn integrate_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
    rel_tol: f64,
    depth: usize,
    out: &mut QuadOutcome,
) {
    let panel = k15_panel(f, a, b);
    if let Some(x) = panel.non_finite_at {
        out.non_finite_at.get_or_insert(x);
        out.value += panel.value;
        out.converged = false;
        return;
    }
    let accept = panel.error <= tol.max(rel_tol * panel.value.abs());
    if accept || depth == 0 || (b - a).abs() < f64::EPSILON * (a.abs() + b.abs()) {
        out.value += panel.value;
        out.abs_error += panel.error;
        if !accept {
            out.converged = false;
        }
        return;
    }
    let mid = 0.5 * (a + b);
    integrate_rec(f, a, mid, 0.5 * tol, rel_tol, depth - 1, out);
    integrate_rec(f, mid, b, 0.5 * tol, rel_tol, depth - 1, out);
}

/// Adaptive Gauss–Kronrod integration of `f` over `[a, b]` to absolute
/// tolerance `abs_tol`. Non-finite integrand values are reported, not hidden.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs_tol: f64) -> QuadOutcome {
    integrate_rel(f, a, b, abs_tol, 1e-12)
}

/// Like [`integrate`] but accepting panels once their error estimate falls
/// below `rel_tol` of the local value; keeps the cost bounded when the
/// integral itself is enormous (divergence probes).
pub fn integrate_rel<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> QuadOutcome {
    let mut out = QuadOutcome {
        value: 0.0,
        abs_error: 0.0,
        converged: true,
        non_finite_at: None,
    };
    if a == b {
        return out;
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    integrate_rec(
        f,
        lo,
        hi,
        abs_tol.max(f64::MIN_POSITIVE),
        rel_tol,
        48,
        &mut out,
    );
    out.value *= sign;
    if !out.value.is_finite() {
        out.converged = false;
        out.non_finite_at.get_or_insert(lo);
    }
    out
}

/// Gauss–Hermite rule: nodes and weights for `∫ e^{-x²} g(x) dx ≈ Σ wᵢ g(xᵢ)`.
///
/// Nodes are the eigenvalues of the Jacobi matrix of the orthonormal Hermite
/// recurrence (Sturm bisection); weights come from the Christoffel sums, so
/// no factorials overflow at large `n`.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let jacobi = SymTridiag {
        diag: vec![0.0; n],
        off: (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect(),
    };
    let mut nodes: Vec<f64> = (0..n)
        .map(|k| jacobi.eigenvalue_by_index(k, 1e-15))
        .collect();
    // Symmetrize: the rule is even in x.
    for i in 0..n / 2 {
        let s = 0.5 * (nodes[n - 1 - i] - nodes[i]);
        nodes[i] = -s;
        nodes[n - 1 - i] = s;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }

    let norm0 = std::f64::consts::PI.powf(-0.25);
    let weights: Vec<f64> = nodes
        .iter()
        .map(|&x| {
            // Orthonormal recurrence p_{k+1} = x sqrt(2/(k+1)) p_k - sqrt(k/(k+1)) p_{k-1},
            // with running rescaling: near the extreme nodes of large rules
            // the values grow like e^{x²/2} and would overflow the
            // Christoffel sum.
            let mut prev = 0.0f64;
            let mut cur = norm0;
            let mut sum_sq = cur * cur;
            let mut log_scale = 0.0f64;
            for k in 0..n - 1 {
                let kf = k as f64;
                let next = x * (2.0 / (kf + 1.0)).sqrt() * cur - (kf / (kf + 1.0)).sqrt() * prev;
                prev = cur;
                cur = next;
                sum_sq += cur * cur;
                if cur.abs() > 1e120 {
                    let f = cur.abs();
                    cur /= f;
                    prev /= f;
                    sum_sq /= f * f;
                    log_scale += f.ln();
                }
            }
            // weight = 1 / (sum_sq · e^{2 log_scale})
            let log_w = -sum_sq.ln() - 2.0 * log_scale;
            log_w.exp()
        })
        .collect();
    (nodes, weights)
}

/// Cached Gauss–Hermite rule (building a large rule costs O(n²) bisections,
/// so repeated expectations must not rebuild it).
fn hermite_rule(n: usize) -> std::sync::Arc<(Vec<f64>, Vec<f64>)> {
    use std::collections::HashMap;
    use std::sync::{Arc, Mutex, OnceLock};
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<(Vec<f64>, Vec<f64>)>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().unwrap().get(&n) {
        return rule.clone();
    }
    let rule = Arc::new(gauss_hermite(n));
    cache.lock().unwrap().insert(n, rule.clone());
    rule
}

/// Expectation `E[g(Z)]` for standard normal `Z` via an `n`-node
/// Gauss–Hermite rule.
pub fn normal_expectation<F: Fn(f64) -> f64>(g: &F, n: usize) -> f64 {
    let rule = hermite_rule(n);
    let (nodes, weights) = (&rule.0, &rule.1);
    let scale = std::f64::consts::SQRT_2;
    let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
    nodes
        .iter()
        .zip(weights)
        .map(|(&x, &w)| w * g(scale * x))
        .sum::<f64>()
        * inv_sqrt_pi
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let out = integrate(&|x: f64| 3.0 * x * x, 0.0, 2.0, 1e-12);
        assert!((out.value - 8.0).abs() < 1e-12);
        assert!(out.converged);
    }

    #[test]
    fn gaussian_on_wide_interval() {
        let out = integrate(&|x: f64| (-x * x).exp(), -20.0, 20.0, 1e-12);
        assert!((out.value - std::f64::consts::PI.sqrt()).abs() < 1e-11);
    }

    #[test]
    fn kinked_integrand_converges() {
        let out = integrate(&|x: f64| (x - 0.3).abs(), 0.0, 1.0, 1e-12);
        let exact = 0.5 * (0.3f64.powi(2) + 0.7f64.powi(2));
        assert!((out.value - exact).abs() < 1e-11);
    }

    #[test]
    fn non_finite_is_reported() {
        let out = integrate(&|x: f64| 1.0 / x, -1.0, 1.0, 1e-10);
        assert!(out.non_finite_at.is_some() || !out.converged);
    }

    #[test]
    fn hermite_moments() {
        let sqrt_pi = std::f64::consts::PI.sqrt();
        for &n in &[8usize, 64, 128, 256] {
            let (nodes, weights) = gauss_hermite(n);
            let m0: f64 = weights.iter().sum();
            let m2: f64 = nodes.iter().zip(&weights).map(|(x, w)| w * x * x).sum();
            assert!((m0 - sqrt_pi).abs() < 1e-12 * sqrt_pi, "n={n} m0={m0}");
            assert!((m2 - 0.5 * sqrt_pi).abs() < 1e-11, "n={n} m2={m2}");
        }
    }

    #[test]
    fn lognormal_mean_via_hermite() {
        // E[e^{sZ}] = e^{s²/2}
        let s = 1.7;
        let got = normal_expectation(&|z| (s * z).exp(), 128);
        assert!((got - (0.5 * s * s).exp()).abs() < 1e-10);
    }
}
