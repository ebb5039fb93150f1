//! Plain-text and CSV summary of finished sweep runs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use cylspectra::asymptotics::{NuEstimate, MONOTONE_SLACK};
use cylspectra::Side;

use crate::error::CliError;
use crate::output::{csv_text, num};
use crate::runner::Artifacts;

/// Relative size below which a gap column counts as zero.
pub const NO_GAP_TOL: f64 = 1e-6;
const IDENTITY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, Deserialize)]
struct Row {
    ell: f64,
    p: f64,
    family: String,
    lambda_mixed: f64,
    lambda_dirichlet: f64,
    lambda_half_plus: f64,
    lambda_half_minus: f64,
    mu1: f64,
    gap: f64,
    alpha_hat: f64,
    d_plus: f64,
    d_minus: f64,
    n_plus: f64,
    n_minus: f64,
    #[allow(dead_code)]
    iterations: usize,
    #[allow(dead_code)]
    residual: f64,
    converged: bool,
}

enum Input {
    Sweep { source: PathBuf, rows: Vec<Row> },
    Skipped { source: PathBuf, experiment: String },
    Absent { source: PathBuf, reason: String },
}

fn manifest_path(input: &Path) -> PathBuf {
    if input.is_dir() {
        input.join("manifest.json")
    } else {
        input.to_path_buf()
    }
}

fn load(input: &Path) -> Input {
    let manifest = manifest_path(input);
    let absent = |reason: String| Input::Absent {
        source: input.to_path_buf(),
        reason,
    };
    let text = match std::fs::read_to_string(&manifest) {
        Ok(t) => t,
        Err(e) => return absent(format!("cannot read {}: {e}", manifest.display())),
    };
    let value: serde_json::Value = match serde_json::from_str(&text) {
        Ok(v) => v,
        Err(e) => return absent(format!("bad manifest: {e}")),
    };
    let experiment = value["experiment"].as_str().unwrap_or("").to_string();
    if experiment != "sweep" {
        return Input::Skipped {
            source: input.to_path_buf(),
            experiment,
        };
    }
    let csv_path = manifest
        .parent()
        .unwrap_or(Path::new("."))
        .join("sweep.csv");
    let mut reader = match csv::Reader::from_path(&csv_path) {
        Ok(r) => r,
        Err(e) => return absent(format!("cannot read {}: {e}", csv_path.display())),
    };
    match reader.deserialize().collect::<Result<Vec<Row>, _>>() {
        Ok(rows) if !rows.is_empty() => Input::Sweep {
            source: input.to_path_buf(),
            rows,
        },
        Ok(_) => absent("sweep.csv has no rows".into()),
        Err(e) => absent(format!("bad sweep.csv: {e}")),
    }
}

struct Section {
    text: String,
    records: Vec<Vec<String>>,
}

impl Section {
    fn quantity(&mut self, name: &str, value: f64) {
        self.records
            .push(vec![name.into(), num(value), String::new()]);
    }

    fn property(&mut self, name: &str, pass: bool, margin: f64) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        let _ = writeln!(self.text, "  {verdict} {name} (margin {margin:.3e})");
        self.records
            .push(vec![name.into(), num(margin), pass.to_string()]);
    }
}

fn ladder_limit(rows: &[Row], side: Side) -> NuEstimate {
    let ladder = rows
        .iter()
        .map(|r| {
            let v = match side {
                Side::Plus => r.lambda_half_plus,
                Side::Minus => r.lambda_half_minus,
            };
            (r.ell, v)
        })
        .collect();
    NuEstimate::from_ladder(side, ladder, rows.iter().all(|r| r.converged))
}

fn summarize(rows: &[Row]) -> Section {
    let mut s = Section {
        text: String::new(),
        records: Vec::new(),
    };
    let last = rows.last().expect("nonempty sweep");
    let mu1 = last.mu1;
    let ells: Vec<String> = rows.iter().map(|r| format!("{}", r.ell)).collect();
    let _ = writeln!(
        s.text,
        "family {} p={} ell=[{}] rows={} all converged: {}",
        last.family,
        last.p,
        ells.join(", "),
        rows.len(),
        rows.iter().all(|r| r.converged)
    );

    let max_gap = rows.iter().fold(0.0f64, |m, r| m.max(r.gap.abs()));
    s.quantity("mu1", mu1);
    s.quantity("max_abs_gap", max_gap);
    let nu_plus = ladder_limit(rows, Side::Plus);
    let nu_minus = ladder_limit(rows, Side::Minus);
    let nu_min = nu_plus.extrapolated.min(nu_minus.extrapolated);
    if max_gap < NO_GAP_TOL * mu1 {
        let _ = writeln!(
            s.text,
            "  no gap detected: max |gap| = {max_gap:.3e} < {:.3e}",
            NO_GAP_TOL * mu1
        );
    } else {
        let _ = writeln!(
            s.text,
            "  gap = mu1 - lim lambda_mixed: plateau value {:.10} at ell={} (mu1 {:.10}, lambda_mixed {:.10})",
            last.gap, last.ell, mu1, last.lambda_mixed
        );
        if rows.len() >= 2 {
            let prev = &rows[rows.len() - 2];
            let change = (last.gap - prev.gap).abs() / prev.gap.abs();
            let _ = writeln!(
                s.text,
                "  plateau change ell={} -> {}: {:.3}%",
                prev.ell,
                last.ell,
                100.0 * change
            );
            s.quantity("gap_plateau_change", change);
        }
        s.quantity("gap_plateau", last.gap);
    }
    let _ = writeln!(
        s.text,
        "  min(nu+, nu-) extrapolated {:.10} (nu+ {:.10}, nu- {:.10}); mu1 - min = {:.6e}",
        nu_min,
        nu_plus.extrapolated,
        nu_minus.extrapolated,
        mu1 - nu_min
    );
    s.quantity("nu_plus_extrapolated", nu_plus.extrapolated);
    s.quantity("nu_minus_extrapolated", nu_minus.extrapolated);

    let alphas: Vec<String> = rows.iter().map(|r| format!("{:.4}", r.alpha_hat)).collect();
    let _ = writeln!(s.text, "  fitted decay alpha_hat: [{}]", alphas.join(", "));
    s.quantity("alpha_hat_last", last.alpha_hat);

    let linear: Vec<f64> = rows
        .iter()
        .map(|r| (r.lambda_dirichlet - r.mu1) * r.ell)
        .collect();
    let quadratic: Vec<f64> = rows
        .iter()
        .map(|r| (r.lambda_dirichlet - r.mu1) * r.ell * r.ell)
        .collect();
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:.4}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let _ = writeln!(
        s.text,
        "  sandwich (lambda_D - mu1) ell:   [{}]",
        fmt(&linear)
    );
    let _ = writeln!(
        s.text,
        "  sandwich (lambda_D - mu1) ell^2: [{}]",
        fmt(&quadratic)
    );
    s.quantity(
        "sandwich_c_linear_max",
        linear.iter().cloned().fold(f64::MIN, f64::max),
    );
    s.quantity("sandwich_c_quadratic_last", *quadratic.last().unwrap());

    let d_dev = rows
        .iter()
        .fold(0.0f64, |m, r| m.max((r.d_plus + r.d_minus - 1.0).abs()));
    s.property(
        "row identity D_plus + D_minus = 1",
        d_dev <= IDENTITY_TOL,
        IDENTITY_TOL - d_dev,
    );
    let n_dev = rows.iter().fold(0.0f64, |m, r| {
        m.max((r.n_plus + r.n_minus - r.lambda_mixed).abs() / r.lambda_mixed)
    });
    s.property(
        "row identity N_plus + N_minus = lambda_mixed",
        n_dev <= IDENTITY_TOL,
        IDENTITY_TOL - n_dev,
    );
    let b1 = rows
        .iter()
        .map(|r| r.mu1 - r.lambda_mixed)
        .fold(f64::INFINITY, f64::min);
    s.property(
        "bracketing lambda_mixed <= mu1",
        b1 >= -IDENTITY_TOL * mu1,
        b1,
    );
    let b2 = rows
        .iter()
        .map(|r| r.lambda_half_plus.min(r.lambda_half_minus) - r.lambda_mixed)
        .fold(f64::INFINITY, f64::min);
    s.property(
        "bracketing lambda_mixed <= half-cylinder values",
        b2 >= -IDENTITY_TOL * mu1,
        b2,
    );
    let d1 = rows
        .iter()
        .map(|r| r.lambda_dirichlet - r.mu1)
        .fold(f64::INFINITY, f64::min);
    s.property(
        "Dirichlet sandwich mu1 <= lambda_dirichlet",
        d1 >= -IDENTITY_TOL * mu1,
        d1,
    );
    let mono = [&nu_plus, &nu_minus]
        .iter()
        .flat_map(|est| {
            est.ladder
                .windows(2)
                .map(|w| w[0].1 + MONOTONE_SLACK * w[0].1.abs().max(1.0) - w[1].1)
                .collect::<Vec<_>>()
        })
        .fold(f64::INFINITY, f64::min);
    s.property(
        "monotone half-cylinder ladders",
        nu_plus.monotone_ok && nu_minus.monotone_ok,
        mono,
    );
    s
}

/// Summarizes the listed runs; unreadable inputs are reported as absent.
pub fn build(inputs: &[PathBuf]) -> Result<Artifacts, CliError> {
    let mut text = String::new();
    let mut records = Vec::new();
    let mut sections = 0;
    for input in inputs {
        match load(input) {
            Input::Sweep { source, rows } => {
                sections += 1;
                let section = summarize(&rows);
                let _ = writeln!(text, "[{sections}] {}", source.display());
                text.push_str(&section.text);
                text.push('\n');
                for mut r in section.records {
                    let mut rec =
                        vec![sections.to_string(), rows[0].family.clone(), num(rows[0].p)];
                    rec.append(&mut r);
                    records.push(rec);
                }
            }
            Input::Skipped { source, experiment } => {
                let _ = writeln!(
                    text,
                    "skipped {} (experiment `{experiment}`)",
                    source.display()
                );
            }
            Input::Absent { source, reason } => {
                let _ = writeln!(text, "absent {}: {reason}", source.display());
            }
        }
    }
    let header = format!(
        "report: {sections} section(s) from {} input(s)\n\n",
        inputs.len()
    );
    let mut out = Artifacts::default();
    out.file("report.txt", header + &text);
    out.file(
        "report.csv",
        csv_text(
            &["section", "family", "p", "quantity", "value", "pass"],
            &records,
        )?,
    );
    Ok(out)
}
