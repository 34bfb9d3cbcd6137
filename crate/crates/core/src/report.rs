//! CSV and plain-text emission for every pipeline stage. Plots are
//! data-only (x,y columns); no rendering dependency.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::duality::DualitySolution;
use crate::eigen::EigenResult;
use crate::error::Result;
use crate::pde::HorizonSolution;
use crate::simulate::TurnpikeTable;
use crate::wellposed::{CSup, ConditionReport, ImproperOutcome, Verdict};

pub fn write_csv<P: AsRef<Path>>(
    path: P,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            let _ = write!(out, "{v}");
            first = false;
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Grid profile of the eigen result: `y, v̂, v̂_y/v̂, invariant density`.
pub fn eigen_csv<P: AsRef<Path>>(path: P, result: &EigenResult) -> Result<()> {
    write_csv(
        path,
        &["y", "v_hat", "log_deriv", "invariant_density"],
        (0..result.grid.n()).map(|i| {
            vec![
                result.grid.nodes[i],
                result.v_hat[i],
                result.log_deriv[i],
                result.invariant_density[i],
            ]
        }),
    )
}

/// Fixed-time slice of a horizon solution: `y, v, h, v_y/v, π` components.
pub fn horizon_slice_csv<P: AsRef<Path>>(
    path: P,
    sol: &HorizonSolution,
    coeffs: &crate::model::DerivedCoefficients,
    slice: usize,
) -> Result<()> {
    let v = sol.v_slice(slice);
    let h = sol.h_slice(slice);
    let d = coeffs.dim();
    let mut header: Vec<String> = vec!["y".into(), "v".into(), "h".into(), "log_deriv".into()];
    for i in 0..d {
        header.push(format!("pi_{}", i + 1));
    }
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let scale = 1.0 / (1.0 - coeffs.p);
    let mut rows = Vec::with_capacity(sol.grid.n());
    for i in 0..sol.grid.n() {
        let y = sol.grid.nodes[i];
        let ld = sol.log_deriv[slice][i];
        let block = coeffs.asset_block(y)?;
        let mut row = vec![y, v[i], h[i], ld];
        for j in 0..d {
            row.push(scale * (block.sigma_inv_mu[j] + coeffs.delta * block.sigma_inv_upsilon[j] * ld));
        }
        rows.push(row);
    }
    write_csv(path, &header_refs, rows)
}

pub fn turnpike_csv<P: AsRef<Path>>(path: P, table: &TurnpikeTable) -> Result<()> {
    write_csv(
        path,
        &[
            "horizon",
            "prob_sup",
            "prob_sup_se",
            "mean_bracket",
            "mean_bracket_se",
            "prob_bracket",
            "prob_bracket_se",
        ],
        table.rows.iter().map(|r| {
            vec![
                r.horizon,
                r.prob_sup,
                r.prob_sup_se,
                r.mean_bracket,
                r.mean_bracket_se,
                r.prob_bracket,
                r.prob_bracket_se,
            ]
        }),
    )
}

pub fn duality_csv<P: AsRef<Path>>(path: P, sols: &[DualitySolution]) -> Result<()> {
    write_csv(
        path,
        &["horizon", "moment", "se", "multiplier_ratio"],
        sols.iter()
            .map(|s| vec![s.horizon, s.moment, 0.0, s.multiplier_ratio]),
    )
}

fn outcome_text(out: &ImproperOutcome) -> String {
    match out {
        ImproperOutcome::Converged(v) => format!("converged ({v:.9e})"),
        ImproperOutcome::Divergent => "divergent".into(),
        ImproperOutcome::Inconclusive => "inconclusive".into(),
    }
}

/// Human-readable condition report.
pub fn condition_report_text(report: &ConditionReport) -> String {
    let verdict = |v: Verdict| match v {
        Verdict::NonExplosive => "non-explosive",
        Verdict::Explosive => "explosive",
        Verdict::Inconclusive => "inconclusive",
    };
    let mut s = String::new();
    let _ = writeln!(s, "feller_left = {}", verdict(report.feller.left));
    let _ = writeln!(s, "feller_right = {}", verdict(report.feller.right));
    let _ = writeln!(s, "rho_constant = {}", report.rho_constant);
    match report.c_sup {
        CSup::Finite(v) => {
            let _ = writeln!(s, "c_sup = {v:.6e}");
        }
        CSup::Unbounded => {
            let _ = writeln!(s, "c_sup = unbounded");
        }
    }
    let _ = writeln!(s, "c_decays_left = {:?}", report.c_decays_left.verdict);
    let _ = writeln!(s, "c_decays_right = {:?}", report.c_decays_right.verdict);
    let _ = writeln!(
        s,
        "m_hat_integrable = {} [{}]",
        report.m_hat_integrable,
        outcome_text(&report.m_hat_outcome)
    );
    let _ = writeln!(s, "overall = {}", report.overall);
    s
}

/// Diagnostic samples behind the decay verdicts: `side, y, c(y)`.
pub fn condition_samples_csv<P: AsRef<Path>>(path: P, report: &ConditionReport) -> Result<()> {
    let rows = report
        .c_decays_left
        .samples
        .iter()
        .map(|&(y, c)| vec![-1.0, y, c])
        .chain(
            report
                .c_decays_right
                .samples
                .iter()
                .map(|&(y, c)| vec![1.0, y, c]),
        );
    write_csv(path, &["side", "y", "c"], rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_shape() {
        let dir = std::env::temp_dir().join(format!("turnpike-report-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.csv");
        write_csv(&path, &["a", "b"], vec![vec![1.0, 2.0], vec![3.5, -0.25]]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "a,b\n1,2\n3.5,-0.25\n");
        let _ = std::fs::remove_dir_all(dir);
    }
}
