//! Executes a validated [`Plan`] and writes its artifacts.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use cylspectra::asymptotics::{
    beta2_upper_bound, central_p_mass, exp_test_upper_bound, fit_decay, gap_integral_i2,
    nu_infinity_estimate, picone_residual_min, poincare_lower_bound, slab_bound, sweep_field,
    translate_distance, SlabBoundVariant, MONOTONE_SLACK,
};
use cylspectra::mesh::slab_integrals;
use cylspectra::{
    build_mesh, cross_section_ground_state, half_cylinder_eigen, linear_spectrum,
    minimize_rayleigh, BoundaryKind, CoefficientField, DomainSpec, Side,
};

use crate::config::{self, BoundaryConfig, Experiment, ExperimentConfig, Plan};
use crate::error::CliError;
use crate::output::{csv_text, fresh_run_dir, num, write_atomic, JsonObject};
use crate::report;

/// Record of one run, written as `manifest.json` next to its outputs.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub experiment: String,
    pub config_path: PathBuf,
    pub config: ExperimentConfig,
    pub started: String,
    pub finished: String,
    pub output_dir: PathBuf,
    pub outputs: Vec<String>,
    pub convergence: Vec<ConvergenceFlag>,
    pub all_converged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceFlag {
    pub label: String,
    pub converged: bool,
}

/// Files produced by an experiment, kept in memory until the run succeeds.
#[derive(Default)]
pub struct Artifacts {
    pub files: Vec<(String, String)>,
    pub flags: Vec<ConvergenceFlag>,
}

impl Artifacts {
    pub(crate) fn file(&mut self, name: &str, contents: String) {
        self.files.push((name.into(), contents));
    }

    pub(crate) fn flag(&mut self, label: impl Into<String>, converged: bool) {
        self.flags.push(ConvergenceFlag {
            label: label.into(),
            converged,
        });
    }
}

fn timestamp() -> String {
    chrono::Utc::now()
        .format("%Y-%m-%dT%H:%M:%S%.3fZ")
        .to_string()
}

/// Loads, validates and runs `config_path`, writing everything under a new
/// directory of `output_dir` (or the config's own `output_dir`).
pub fn run_config(
    experiment: Experiment,
    config_path: &Path,
    output_dir: Option<&Path>,
) -> Result<RunManifest, CliError> {
    let started = timestamp();
    let cfg = config::load(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let root = match (output_dir, &cfg.output_dir) {
        (Some(dir), _) => dir.to_path_buf(),
        (None, Some(dir)) if dir.is_absolute() => dir.clone(),
        (None, Some(dir)) => base.join(dir),
        (None, None) => PathBuf::from("runs"),
    };
    let plan = cfg.plan(experiment, base)?;
    let artifacts = execute(&plan)?;

    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ").to_string();
    let dir = fresh_run_dir(&root, &experiment.to_string(), &stamp)?;
    let mut outputs = Vec::new();
    for (name, contents) in &artifacts.files {
        write_atomic(&dir, name, contents.as_bytes())?;
        outputs.push(name.clone());
    }
    let all_converged = artifacts.flags.iter().all(|f| f.converged);
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        experiment: experiment.to_string(),
        config_path: config_path.to_path_buf(),
        config: plan.config.clone(),
        started,
        finished: timestamp(),
        output_dir: dir.clone(),
        outputs,
        convergence: artifacts.flags,
        all_converged,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&dir, "manifest.json", text.as_bytes())?;
    Ok(manifest)
}

/// Runs the experiment and returns its files without touching the disk.
pub fn execute(plan: &Plan) -> Result<Artifacts, CliError> {
    match plan.experiment {
        Experiment::Solve => solve(plan),
        Experiment::Sweep => sweep(plan),
        Experiment::NuLadder => ladder(plan),
        Experiment::Spectrum => spectrum(plan),
        Experiment::GapCheck => gap_check(plan),
        Experiment::Decay => decay(plan),
        Experiment::Beta2 => beta2(plan),
        Experiment::Report => report::build(&plan.inputs),
    }
}

fn coeffs(plan: &Plan) -> &CoefficientField {
    plan.coeffs
        .as_ref()
        .expect("validated plan has coefficients")
}

fn label(plan: &Plan) -> String {
    plan.family.as_ref().map(|f| f.label()).unwrap_or_default()
}

fn full_spec(plan: &Plan, ell: f64, bc: BoundaryKind) -> DomainSpec {
    DomainSpec::full(ell, bc, plan.resolution.cells_per_unit, plan.resolution.nx2)
}

fn solve(plan: &Plan) -> Result<Artifacts, CliError> {
    let ell = plan.config.ells[0];
    let a = coeffs(plan);
    let result = match plan.config.boundary {
        BoundaryConfig::Mixed => minimize_rayleigh(
            &build_mesh(full_spec(plan, ell, BoundaryKind::Mixed))?,
            a,
            plan.p,
            &plan.opts,
        )?,
        BoundaryConfig::DirichletAll => minimize_rayleigh(
            &build_mesh(full_spec(plan, ell, BoundaryKind::DirichletAll))?,
            a,
            plan.p,
            &plan.opts,
        )?,
        BoundaryConfig::HalfPlus => {
            half_cylinder_eigen(Side::Plus, ell, plan.resolution, a, plan.p, &plan.opts)?.1
        }
        BoundaryConfig::HalfMinus => {
            half_cylinder_eigen(Side::Minus, ell, plan.resolution, a, plan.p, &plan.opts)?.1
        }
    };
    let mut out = Artifacts::default();
    let json = JsonObject::default()
        .num("lambda", result.lambda)
        .int("iterations", result.iterations)
        .num("residual", result.final_residual)
        .bool("converged", result.converged)
        .render();
    out.file("solve.json", json);
    out.flag(format!("solve ell={ell}"), result.converged);
    Ok(out)
}

fn sweep(plan: &Plan) -> Result<Artifacts, CliError> {
    let table = sweep_field(
        &plan.config.ells,
        &label(plan),
        coeffs(plan),
        plan.p,
        plan.resolution,
        &plan.opts,
    )?;
    let mut out = Artifacts::default();
    for row in &table.rows {
        out.flag(format!("sweep ell={}", row.ell), row.converged);
    }
    out.file("sweep.csv", table.to_csv_string()?);
    Ok(out)
}

fn ladder(plan: &Plan) -> Result<Artifacts, CliError> {
    let side = Side::from(plan.config.side);
    let est = nu_infinity_estimate(
        side,
        coeffs(plan),
        plan.p,
        &plan.config.ells,
        plan.resolution,
        &plan.opts,
    )?;
    let mut rows = Vec::new();
    let mut prev: Option<f64> = None;
    for &(ell, value) in &est.ladder {
        let ok = prev.is_none_or(|v| value <= v + MONOTONE_SLACK * v.abs().max(1.0));
        rows.push(vec![num(ell), num(value), ok.to_string()]);
        prev = Some(value);
    }
    let mut out = Artifacts::default();
    out.file(
        "ladder.csv",
        csv_text(&["ell", "lambda_tilde", "monotone_ok"], &rows)?,
    );
    let side_name = match side {
        Side::Plus => "plus",
        Side::Minus => "minus",
    };
    let json = JsonObject::default()
        .str("side", side_name)
        .num("last_value", est.last_value)
        .num("extrapolated", est.extrapolated)
        .bool("monotone_ok", est.monotone_ok)
        .bool("converged", est.converged)
        .render();
    out.file("nu.json", json);
    out.flag(format!("ladder {side_name}"), est.converged);
    Ok(out)
}

fn spectrum(plan: &Plan) -> Result<Artifacts, CliError> {
    let k = plan.config.k;
    let per_ell = plan
        .config
        .ells
        .par_iter()
        .map(|&ell| {
            let mesh = build_mesh(full_spec(plan, ell, BoundaryKind::Mixed))?;
            linear_spectrum(&mesh, coeffs(plan), k, &plan.opts).map(|s| (ell, s))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Artifacts::default();
    let mut rows = Vec::new();
    for (ell, results) in &per_ell {
        for (i, r) in results.iter().enumerate() {
            rows.push(vec![
                num(*ell),
                (i + 1).to_string(),
                num(r.lambda),
                num(r.final_residual),
                r.converged.to_string(),
            ]);
        }
        out.flag(
            format!("spectrum ell={ell}"),
            results.iter().all(|r| r.converged),
        );
    }
    out.file(
        "spectrum.csv",
        csv_text(&["ell", "k", "lambda", "residual", "converged"], &rows)?,
    );
    Ok(out)
}

fn gap_check(plan: &Plan) -> Result<Artifacts, CliError> {
    let a = coeffs(plan);
    let p = plan.p;
    let cross = cross_section_ground_state(plan.resolution.nx2, a, p)?;
    let gap = gap_integral_i2(&cross, a, p);
    let printed = slab_bound(&cross, a, p, SlabBoundVariant::AsPrinted);
    let squared = slab_bound(&cross, a, p, SlabBoundVariant::Squared);
    let blank = String::new;
    let mut rows = vec![
        vec!["mu1".into(), blank(), num(cross.mu1)],
        vec!["poincare_cp".into(), blank(), num(cross.poincare_cp)],
        vec![
            "poincare_lower_bound".into(),
            blank(),
            num(poincare_lower_bound(&cross, a)),
        ],
        vec!["gap_integral".into(), blank(), num(gap.value)],
        vec![
            "coupling_vanishes".into(),
            blank(),
            (gap.coupling_vanishes as u8).to_string(),
        ],
        vec!["slab_bound_as_printed".into(), blank(), num(printed.value)],
        vec![
            "slab_bound_as_printed_clamped".into(),
            blank(),
            printed.clamped.to_string(),
        ],
        vec!["slab_bound_squared".into(), blank(), num(squared.value)],
        vec![
            "slab_bound_squared_clamped".into(),
            blank(),
            squared.clamped.to_string(),
        ],
    ];
    for &eps in &plan.config.eps {
        let v = exp_test_upper_bound(eps, &cross, a, p, 20.0 / eps)?;
        rows.push(vec!["exp_test_upper_bound".into(), num(eps), num(v)]);
    }
    let mut out = Artifacts::default();
    out.file(
        "gap_check.csv",
        csv_text(&["quantity", "eps", "value"], &rows)?,
    );
    out.flag("cross section", cross.converged);
    Ok(out)
}

struct DecayRow {
    ell: f64,
    slabs: Vec<Vec<String>>,
    summary: Vec<String>,
    converged: bool,
}

fn decay_row(plan: &Plan, ell: f64) -> Result<DecayRow, CliError> {
    let a = coeffs(plan);
    let p = plan.p;
    let mesh = build_mesh(full_spec(plan, ell, BoundaryKind::Mixed))?;
    let u = minimize_rayleigh(&mesh, a, p, &plan.opts)?;
    let profile = slab_integrals(&mesh, a, &u.field, p)?;
    let slabs = profile
        .records
        .iter()
        .map(|s| {
            vec![
                num(ell),
                s.index.to_string(),
                num(s.x1_left),
                num(s.x1_right),
                num(s.grad_energy),
                num(s.energy),
                num(s.p_mass),
            ]
        })
        .collect();
    let (alpha, r2, lo, hi, from_left, no_decay) = match fit_decay(&profile, None) {
        Ok(f) => (
            f.alpha_hat,
            f.r_squared,
            f.window.0.to_string(),
            f.window.1.to_string(),
            f.from_left.to_string(),
            f.no_decay.to_string(),
        ),
        Err(_) => (
            f64::NAN,
            f64::NAN,
            String::new(),
            String::new(),
            String::new(),
            String::new(),
        ),
    };
    let cross = cross_section_ground_state(plan.resolution.nx2, a, p)?;
    let picone = picone_residual_min(&u.field, &cross, &mesh, a, p, None)
        .map(|r| r.min_relative)
        .unwrap_or(f64::NAN);
    let r = plan.config.r.unwrap_or(ell.min(2.0));
    let mut converged = u.converged;
    let mut distances = Vec::new();
    for side in [Side::Plus, Side::Minus] {
        let (half, v) = half_cylinder_eigen(side, ell, plan.resolution, a, p, &plan.opts)?;
        converged &= v.converged;
        distances.push(translate_distance(
            &u.field, &mesh, &v.field, &half, side, r, p,
        )?);
    }
    let summary = vec![
        num(ell),
        num(u.lambda),
        num(alpha),
        num(r2),
        lo,
        hi,
        from_left,
        no_decay,
        num(central_p_mass(&profile, 2.0)),
        num(picone),
        num(r),
        num(distances[0]),
        num(distances[1]),
        converged.to_string(),
    ];
    Ok(DecayRow {
        ell,
        slabs,
        summary,
        converged,
    })
}

fn decay(plan: &Plan) -> Result<Artifacts, CliError> {
    let rows = plan
        .config
        .ells
        .par_iter()
        .map(|&ell| decay_row(plan, ell))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Artifacts::default();
    let slabs: Vec<Vec<String>> = rows.iter().flat_map(|r| r.slabs.clone()).collect();
    out.file(
        "slabs.csv",
        csv_text(
            &[
                "ell",
                "slab",
                "x1_left",
                "x1_right",
                "grad_energy",
                "energy",
                "p_mass",
            ],
            &slabs,
        )?,
    );
    let summary: Vec<Vec<String>> = rows.iter().map(|r| r.summary.clone()).collect();
    out.file(
        "decay.csv",
        csv_text(
            &[
                "ell",
                "lambda_mixed",
                "alpha_hat",
                "r_squared",
                "window_lo",
                "window_hi",
                "from_left",
                "no_decay",
                "central_mass",
                "picone_min_relative",
                "r",
                "translate_plus",
                "translate_minus",
                "converged",
            ],
            &summary,
        )?,
    );
    for r in &rows {
        out.flag(format!("decay ell={}", r.ell), r.converged);
    }
    Ok(out)
}

fn beta2(plan: &Plan) -> Result<Artifacts, CliError> {
    let a = coeffs(plan);
    let rows = plan
        .config
        .ells
        .par_iter()
        .map(|&ell| -> Result<_, CliError> {
            let mixed = minimize_rayleigh(
                &build_mesh(full_spec(plan, ell, BoundaryKind::Mixed))?,
                a,
                plan.p,
                &plan.opts,
            )?;
            let b = beta2_upper_bound(ell, plan.resolution, a, plan.p, &plan.opts)?;
            Ok((ell, mixed, b))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Artifacts::default();
    let mut records = Vec::new();
    for (ell, mixed, b) in &rows {
        let converged = mixed.converged && b.converged;
        records.push(vec![
            num(*ell),
            num(mixed.lambda),
            num(b.plus),
            num(b.minus),
            num(b.value),
            num(b.value - mixed.lambda),
            converged.to_string(),
        ]);
        out.flag(format!("beta2 ell={ell}"), converged);
    }
    out.file(
        "beta2.csv",
        csv_text(
            &[
                "ell",
                "lambda_mixed",
                "lambda_half_plus",
                "lambda_half_minus",
                "beta2_ub",
                "excess",
                "converged",
            ],
            &records,
        )?,
    );
    Ok(out)
}
