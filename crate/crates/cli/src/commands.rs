//! Command implementations. Exit codes: 0 success, 1 condition failure,
//! 2 inconclusive, 3 numerical failure, 64 usage error.

use std::fs;
use std::sync::Arc;
use std::time::Instant;

use turnpike::cache::{content_hash, Cache};
use turnpike::duality::{abstract_turnpike_moments, BSMarket, DualitySolution};
use turnpike::eigen::{solve_principal, EigenOptions, EigenResult};
use turnpike::error::{Error, Result};
use turnpike::grid::Grid1D;
use turnpike::model::{
    build_planner_utility, derive_coefficients, DerivedCoefficients, DiffusionModel, Utility,
};
use turnpike::pde::{solve_horizon, HorizonSolution, MeshParams};
use turnpike::report;
use turnpike::simulate::{simulate_paths, turnpike_diagnostics, Measure, Scheme, SimConfig};
use turnpike::wellposed::{check_turnpike_conditions, TruncationPolicy};

use crate::config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONDITION_FAILED: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

struct Setup {
    model: Arc<DiffusionModel>,
    coeffs: DerivedCoefficients,
}

fn load_setup(cfg: &RunConfig) -> Result<Setup> {
    let path = cfg.model_path()?;
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::Invalid(format!("cannot read model file {}: {e}", path.display())))?;
    let model = Arc::new(DiffusionModel::from_definition(&text)?);
    let window = cfg.window()?;
    let y0 = cfg.f64_or("y0", window.midpoint())?;
    let p = cfg.f64_or("p", -1.0)?;
    let coeffs = derive_coefficients(model.clone(), p, y0)?;
    Ok(Setup { model, coeffs })
}

fn eigen_cache_key(cfg: &RunConfig, setup: &Setup) -> Result<String> {
    let window = cfg.window()?;
    Ok(content_hash(&[
        &setup.model.descriptor,
        &format!("{}", setup.coeffs.p),
        &format!("{}", setup.coeffs.y0),
        &format!("{};{}", window.lo, window.hi),
        &format!("{}", cfg.usize_or("grid_n", 2000)?),
        &format!("{}", cfg.usize_or("refine", 4)?),
    ]))
}

fn load_or_solve_eigen(cfg: &RunConfig, setup: &Setup) -> Result<(EigenResult, bool)> {
    let cache = Cache::new(cfg.cache_dir())?;
    let key = eigen_cache_key(cfg, setup)?;
    if let Some(result) = cache.load::<EigenResult>("eigen", &key) {
        return Ok((result, true));
    }
    let grid = Grid1D::uniform(cfg.window()?, cfg.usize_or("grid_n", 2000)?)?;
    let opts = EigenOptions {
        refine: cfg.usize_or("refine", 4)?,
        ..EigenOptions::default()
    };
    let result = solve_principal(&setup.coeffs, &grid, opts)?;
    cache.store("eigen", &key, &result)?;
    Ok((result, false))
}

pub fn cmd_check(cfg: &RunConfig) -> Result<i32> {
    let setup = load_setup(cfg)?;
    cfg.write_manifest("check", Some(&setup.model.descriptor))?;
    let report = check_turnpike_conditions(&setup.coeffs, &TruncationPolicy::default())?;
    let out_dir = cfg.out_dir();
    let text = report::condition_report_text(&report);
    fs::write(out_dir.join("conditions.txt"), &text)?;
    report::condition_samples_csv(out_dir.join("condition_samples.csv"), &report)?;
    print!("{text}");
    if report.overall {
        Ok(EXIT_OK)
    } else if report.any_inconclusive() {
        Ok(EXIT_INCONCLUSIVE)
    } else {
        Ok(EXIT_CONDITION_FAILED)
    }
}

pub fn cmd_eigen(cfg: &RunConfig) -> Result<i32> {
    let setup = load_setup(cfg)?;
    cfg.write_manifest("eigen", Some(&setup.model.descriptor))?;
    let started = Instant::now();
    let (result, hit) = load_or_solve_eigen(cfg, &setup)?;
    let elapsed = started.elapsed();
    println!(
        "cache: {} ({:.1} ms)",
        if hit { "hit" } else { "miss" },
        elapsed.as_secs_f64() * 1e3
    );
    println!("lambda_c = {:.9}", result.lambda_c);
    println!("residual = {:.3e}", result.residual);
    if let Some(shift) = result.lambda_window_shift {
        println!("window_shift = {shift:.3e}");
    }
    report::eigen_csv(cfg.out_dir().join("eigen.csv"), &result)?;
    Ok(EXIT_OK)
}

pub fn cmd_horizon(cfg: &RunConfig) -> Result<i32> {
    let setup = load_setup(cfg)?;
    cfg.write_manifest("horizon", Some(&setup.model.descriptor))?;
    let (eigen, _) = load_or_solve_eigen(cfg, &setup)?;
    let horizon = cfg.f64_or("horizon", 5.0)?;
    let cache = Cache::new(cfg.cache_dir())?;
    let key = content_hash(&[&eigen_cache_key(cfg, &setup)?, &format!("{horizon}")]);
    let (sol, hit) = match cache.load::<HorizonSolution>("horizon", &key) {
        Some(sol) => (sol, true),
        None => {
            let sol = solve_horizon(&setup.coeffs, &eigen, horizon, MeshParams::default())?;
            cache.store("horizon", &key, &sol)?;
            (sol, false)
        }
    };
    println!("cache: {}", if hit { "hit" } else { "miss" });
    println!(
        "horizon = {horizon}, stored slices = {}, v(0, y0) = {:.9}",
        sol.times.len(),
        sol.v_at(0.0, setup.coeffs.y0)?
    );
    let slice_times = cfg.f64_list_or("slice_times", &[0.0])?;
    for t in slice_times {
        // Nearest stored slice.
        let idx = sol
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(i, _)| i)
            .unwrap();
        let name = format!("horizon_slice_t{:.4}.csv", sol.times[idx]);
        report::horizon_slice_csv(cfg.out_dir().join(name), &sol, &setup.coeffs, idx)?;
    }
    Ok(EXIT_OK)
}

fn measure_from(cfg: &RunConfig) -> Result<Measure> {
    match cfg.string_or("measure", "physical").as_str() {
        "physical" => Ok(Measure::Physical),
        "long-run" | "longrun" | "long_run" => Ok(Measure::LongRun),
        other => Err(Error::Invalid(format!("unknown measure `{other}`"))),
    }
}

fn sim_config(cfg: &RunConfig) -> Result<SimConfig> {
    Ok(SimConfig {
        n_paths: cfg.usize_or("n_paths", 100_000)?,
        dt: cfg.f64_or("dt", 1e-3)?,
        t_max: cfg.f64_or("t_max", 1.0)?,
        seed: cfg.u64_or("seed", 42)?,
        measure: measure_from(cfg)?,
        scheme: Scheme::EulerMaruyama,
        initial_state: cfg.f64_or("initial_state", 0.0)?,
    })
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<i32> {
    let setup = load_setup(cfg)?;
    cfg.write_manifest("simulate", Some(&setup.model.descriptor))?;
    let sim = sim_config(cfg)?;
    let eigen = if sim.measure == Measure::LongRun {
        Some(load_or_solve_eigen(cfg, &setup)?.0)
    } else {
        None
    };
    let bundle = simulate_paths(&setup.coeffs, eigen.as_ref(), &sim)?;
    println!(
        "paths = {}, steps = {}, reflected = {}, clamped = {}",
        sim.n_paths,
        bundle.times.len() - 1,
        bundle.reflected_paths,
        bundle.clamped_paths
    );
    // Per-time summary statistics of the state.
    let n = bundle.states.len() as f64;
    let rows: Vec<Vec<f64>> = (0..bundle.times.len())
        .map(|k| {
            let mean = bundle.states.iter().map(|s| s[k]).sum::<f64>() / n;
            let var = bundle.states.iter().map(|s| s[k] * s[k]).sum::<f64>() / n - mean * mean;
            vec![bundle.times[k], mean, var]
        })
        .collect();
    report::write_csv(cfg.out_dir().join("state_stats.csv"), &["t", "mean_y", "var_y"], rows)?;

    let dump = cfg.usize_or("dump_paths", 0)?;
    if dump > 0 {
        let count = dump.min(bundle.states.len());
        let mut rows = Vec::new();
        for p in 0..count {
            for (k, &t) in bundle.times.iter().enumerate() {
                let mut row = vec![p as f64, t, bundle.states[p][k]];
                for j in 0..bundle.dim {
                    row.push(bundle.returns[p][k * bundle.dim + j]);
                }
                rows.push(row);
            }
        }
        let mut header: Vec<String> = vec!["path".into(), "t".into(), "y".into()];
        for j in 0..bundle.dim {
            header.push(format!("r_{}", j + 1));
        }
        let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
        report::write_csv(cfg.out_dir().join("paths.csv"), &header_refs, rows)?;
    }
    Ok(EXIT_OK)
}

pub fn cmd_turnpike(cfg: &RunConfig, explicit: bool, abstract_: bool) -> Result<i32> {
    // Default to the explicit diagnostics when no mode is selected.
    let run_explicit = explicit || !abstract_;
    let mut any_ok = false;
    let mut any_err = false;

    if run_explicit {
        let setup = load_setup(cfg)?;
        cfg.write_manifest("turnpike", Some(&setup.model.descriptor))?;
        let (eigen, _) = load_or_solve_eigen(cfg, &setup)?;
        let horizons = cfg.f64_list_or("horizons", &[1.0, 2.0, 4.0, 8.0, 16.0])?;
        let mut sols = Vec::new();
        for &t in &horizons {
            match solve_horizon(&setup.coeffs, &eigen, t, MeshParams::default()) {
                Ok(sol) => sols.push(sol),
                Err(e) => {
                    any_err = true;
                    eprintln!("horizon {t}: {e}");
                }
            }
        }
        if !sols.is_empty() {
            let refs: Vec<&HorizonSolution> = sols.iter().collect();
            let mut sim = sim_config(cfg)?;
            sim.measure = Measure::Physical;
            sim.t_max = cfg.f64_or("time_window", 1.0)?;
            let eps = cfg.f64_or("epsilon", 0.05)?;
            let table =
                turnpike_diagnostics(&setup.coeffs, &eigen, &refs, sim.t_max, eps, &sim)?;
            report::turnpike_csv(cfg.out_dir().join("turnpike.csv"), &table)?;
            report::write_csv(
                cfg.out_dir().join("plot_bracket.csv"),
                &["horizon", "mean_bracket"],
                table.rows.iter().map(|r| vec![r.horizon, r.mean_bracket]),
            )?;
            report::write_csv(
                cfg.out_dir().join("plot_prob_sup.csv"),
                &["horizon", "prob_sup"],
                table.rows.iter().map(|r| vec![r.horizon, r.prob_sup]),
            )?;
            for row in &table.rows {
                println!(
                    "T = {:6.2}: P(sup ≥ ε) = {:.4} ± {:.4}, E⟨Π⟩ = {:.3e} ± {:.1e}",
                    row.horizon,
                    row.prob_sup,
                    row.prob_sup_se,
                    row.mean_bracket,
                    row.mean_bracket_se
                );
            }
            any_ok = true;
        }
    }

    if abstract_ {
        if !run_explicit {
            cfg.write_manifest("turnpike", None)?;
        }
        let market = BSMarket::new(
            cfg.f64_or("bs_rate", 0.01)?,
            cfg.f64_or("bs_drift", 0.08)?,
            cfg.f64_or("bs_vol", 0.2)?,
        )?;
        let utility = utility_from(cfg)?;
        let t_grid = cfg.f64_list_or("t_grid", &[5.0, 10.0, 20.0, 40.0, 80.0])?;
        let mut sols: Vec<DualitySolution> = Vec::new();
        for &t in &t_grid {
            match abstract_turnpike_moments(&utility, &market, &[t], 1.0) {
                Ok(mut s) => sols.append(&mut s),
                Err(e) => {
                    any_err = true;
                    eprintln!("horizon {t}: {e}");
                }
            }
        }
        if !sols.is_empty() {
            report::duality_csv(cfg.out_dir().join("duality.csv"), &sols)?;
            report::write_csv(
                cfg.out_dir().join("plot_moment.csv"),
                &["horizon", "moment"],
                sols.iter().map(|s| vec![s.horizon, s.moment]),
            )?;
            for s in &sols {
                println!(
                    "T = {:6.2}: E|r−1| = {:.6e}, y⁰/y¹ = {:.6}",
                    s.horizon, s.moment, s.multiplier_ratio
                );
            }
            any_ok = true;
        }
    }

    if any_ok {
        Ok(EXIT_OK)
    } else if any_err {
        Ok(EXIT_NUMERICAL)
    } else {
        Ok(EXIT_OK)
    }
}

fn utility_from(cfg: &RunConfig) -> Result<Utility> {
    match cfg.string_or("utility", "mixture").as_str() {
        "power" => Utility::power(cfg.f64_or("utility_p", cfg.f64_or("p", -1.0)?)?),
        "log" | "logarithmic" => Ok(Utility::Logarithmic),
        "mixture" => {
            let gammas = cfg.f64_list_or("gammas", &[2.0, 8.0])?;
            let weights = cfg.f64_list_or("weights", &vec![1.0; gammas.len()])?;
            let capitals = cfg.f64_list_or("capitals", &vec![1.0; gammas.len()])?;
            build_planner_utility(&capitals, &gammas, &weights)
        }
        other => Err(Error::Invalid(format!("unknown utility `{other}`"))),
    }
}

pub fn cmd_planner(cfg: &RunConfig) -> Result<i32> {
    cfg.write_manifest("planner", None)?;
    let gammas = cfg.f64_list_or("gammas", &[2.0, 8.0])?;
    let weights = cfg.f64_list_or("weights", &vec![1.0; gammas.len()])?;
    let capitals = cfg.f64_list_or("capitals", &vec![1.0; gammas.len()])?;
    let utility = build_planner_utility(&capitals, &gammas, &weights)?;
    println!("effective p = {}", utility.effective_p());
    if let Utility::Mixture(terms) = &utility {
        for t in terms {
            println!("  weight {:.6} at gamma {:.4}", t.weight, t.gamma);
        }
    }
    let market = BSMarket::new(
        cfg.f64_or("bs_rate", 0.01)?,
        cfg.f64_or("bs_drift", 0.08)?,
        cfg.f64_or("bs_vol", 0.2)?,
    )?;
    let t_grid = cfg.f64_list_or("t_grid", &[5.0, 10.0, 20.0, 40.0, 80.0])?;
    let sols = abstract_turnpike_moments(&utility, &market, &t_grid, 1.0)?;
    report::duality_csv(cfg.out_dir().join("planner.csv"), &sols)?;
    for s in &sols {
        println!(
            "T = {:6.2}: E|r−1| = {:.6e}, y⁰/y¹ = {:.6}",
            s.horizon, s.moment, s.multiplier_ratio
        );
    }
    Ok(EXIT_OK)
}
