//! JSON experiment configuration. Unknown keys are rejected and every value
//! is checked before any solve starts.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cylspectra::{
    asymptotics::family_field, build_mesh, BoundaryKind, CoefficientFamily, CoefficientField,
    DomainSpec, Init, Resolution, Shape, Side, SolveOptions, TabulatedSamples,
};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Solve,
    Sweep,
    #[serde(rename = "ladder")]
    #[value(name = "ladder")]
    NuLadder,
    Spectrum,
    GapCheck,
    Decay,
    Beta2,
    Report,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Experiment::Solve => "solve",
            Experiment::Sweep => "sweep",
            Experiment::NuLadder => "ladder",
            Experiment::Spectrum => "spectrum",
            Experiment::GapCheck => "gap-check",
            Experiment::Decay => "decay",
            Experiment::Beta2 => "beta2",
            Experiment::Report => "report",
        };
        f.write_str(name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyConfig {
    Identity {},
    ConstantOffDiag {
        c: f64,
    },
    LinearOffDiag {
        c: f64,
    },
    GradAligned {
        c: f64,
    },
    /// CSV with header `x2,a11,a12,a22`, relative to the config file.
    Tabulated {
        path: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryConfig {
    #[default]
    Mixed,
    DirichletAll,
    HalfPlus,
    HalfMinus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideConfig {
    #[default]
    Plus,
    Minus,
}

impl From<SideConfig> for Side {
    fn from(s: SideConfig) -> Side {
        match s {
            SideConfig::Plus => Side::Plus,
            SideConfig::Minus => Side::Minus,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolutionConfig {
    pub nx2: usize,
    pub cells_per_unit: usize,
}

impl Default for ResolutionConfig {
    fn default() -> Self {
        ResolutionConfig {
            nx2: 64,
            cells_per_unit: 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitConfig {
    #[default]
    LiftedW,
    PerturbedLift,
    Ones,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol_residual: f64,
    pub tol_stagnation: f64,
    pub max_iters: usize,
    pub armijo_c: f64,
    pub armijo_shrink: f64,
    pub init: InitConfig,
    pub positivity_projection: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolveOptions::default();
        SolverConfig {
            tol_residual: d.tol_residual,
            tol_stagnation: d.tol_stagnation,
            max_iters: d.max_iters,
            armijo_c: d.armijo_c,
            armijo_shrink: d.armijo_shrink,
            init: InitConfig::LiftedW,
            positivity_projection: d.positivity_projection,
        }
    }
}

fn default_k() -> usize {
    3
}

fn default_eps() -> Vec<f64> {
    vec![0.01, 0.05, 0.1, 0.2]
}

/// One experiment. Fields that an experiment does not use are ignored by it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Must match the subcommand when given.
    #[serde(default)]
    pub experiment: Option<Experiment>,
    #[serde(default)]
    pub family: Option<FamilyConfig>,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub ells: Vec<f64>,
    #[serde(default)]
    pub resolution: ResolutionConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Phase of the perturbed initial guess.
    #[serde(default)]
    pub seed: u64,
    /// `solve` only.
    #[serde(default)]
    pub boundary: BoundaryConfig,
    /// `ladder` only.
    #[serde(default)]
    pub side: SideConfig,
    /// Number of eigenpairs for `spectrum`.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Exponential test rates for `gap-check`.
    #[serde(default = "default_eps")]
    pub eps: Vec<f64>,
    /// Length of the end windows compared by `decay`.
    #[serde(default)]
    pub r: Option<f64>,
    /// Run directories or manifests summarized by `report`.
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
}

/// A validated configuration, ready to run.
#[derive(Clone, Debug)]
pub struct Plan {
    pub experiment: Experiment,
    pub config: ExperimentConfig,
    pub family: Option<CoefficientFamily>,
    pub coeffs: Option<CoefficientField>,
    pub p: f64,
    pub resolution: Resolution,
    pub opts: SolveOptions,
    pub inputs: Vec<PathBuf>,
}

pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn resolve_family(family: &FamilyConfig, base: &Path) -> Result<CoefficientFamily, CliError> {
    Ok(match family {
        FamilyConfig::Identity {} => CoefficientFamily::Identity,
        FamilyConfig::ConstantOffDiag { c } => CoefficientFamily::ConstantOffDiag(*c),
        FamilyConfig::LinearOffDiag { c } => CoefficientFamily::LinearOffDiag(*c),
        FamilyConfig::GradAligned { c } => CoefficientFamily::GradAligned(*c),
        FamilyConfig::Tabulated { path } => {
            let full = if path.is_absolute() {
                path.clone()
            } else {
                base.join(path)
            };
            CoefficientFamily::Tabulated(
                TabulatedSamples::from_csv(&full).map_err(|e| config_err(e.to_string()))?,
            )
        }
    })
}

fn check_ells(ells: &[f64], at_least: usize, strictly_increasing: bool) -> Result<(), CliError> {
    if ells.len() < at_least {
        return Err(config_err(format!(
            "`ells` needs at least {at_least} entries, got {}",
            ells.len()
        )));
    }
    if ells.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(config_err(format!("`ells` must be positive, got {ells:?}")));
    }
    if strictly_increasing && ells.windows(2).any(|w| w[1] <= w[0]) {
        return Err(config_err(format!(
            "`ells` must be strictly increasing, got {ells:?}"
        )));
    }
    Ok(())
}

impl ExperimentConfig {
    fn solve_options(&self) -> Result<SolveOptions, CliError> {
        let s = &self.solver;
        let opts = SolveOptions {
            tol_residual: s.tol_residual,
            tol_stagnation: s.tol_stagnation,
            max_iters: s.max_iters,
            armijo_c: s.armijo_c,
            armijo_shrink: s.armijo_shrink,
            init: match s.init {
                InitConfig::LiftedW => Init::LiftedW,
                InitConfig::PerturbedLift => Init::PerturbedLift,
                InitConfig::Ones => Init::Ones,
            },
            positivity_projection: s.positivity_projection,
            seed: self.seed,
        };
        opts.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(opts)
    }

    /// Meshes the experiment will build, for up-front validation.
    fn domains(&self, experiment: Experiment, res: Resolution) -> Vec<DomainSpec> {
        let full = |ell, bc| DomainSpec::full(ell, bc, res.cells_per_unit, res.nx2);
        let half = |shape, ell| DomainSpec::half(shape, ell, res.cells_per_unit, res.nx2);
        let mut out = Vec::new();
        for &ell in &self.ells {
            match experiment {
                Experiment::Solve => out.push(match self.boundary {
                    BoundaryConfig::Mixed => full(ell, BoundaryKind::Mixed),
                    BoundaryConfig::DirichletAll => full(ell, BoundaryKind::DirichletAll),
                    BoundaryConfig::HalfPlus => half(Shape::HalfPlus, ell),
                    BoundaryConfig::HalfMinus => half(Shape::HalfMinus, ell),
                }),
                Experiment::NuLadder => out.push(half(Side::from(self.side).shape(), ell)),
                Experiment::Spectrum => out.push(full(ell, BoundaryKind::Mixed)),
                _ => {
                    out.push(full(ell, BoundaryKind::Mixed));
                    out.push(full(ell, BoundaryKind::DirichletAll));
                    out.push(half(Shape::HalfPlus, ell));
                    out.push(half(Shape::HalfMinus, ell));
                }
            }
        }
        out
    }

    /// Checks everything the experiment needs and builds the coefficients.
    pub fn plan(self, experiment: Experiment, config_dir: &Path) -> Result<Plan, CliError> {
        if let Some(named) = self.experiment {
            if named != experiment {
                return Err(config_err(format!(
                    "config is for `{named}` but `{experiment}` was requested"
                )));
            }
        }
        let resolution = Resolution {
            nx2: self.resolution.nx2,
            cells_per_unit: self.resolution.cells_per_unit,
        };
        let opts = self.solve_options()?;
        if experiment == Experiment::Report {
            let inputs = self
                .inputs
                .iter()
                .map(|p| {
                    if p.is_absolute() {
                        p.clone()
                    } else {
                        config_dir.join(p)
                    }
                })
                .collect();
            return Ok(Plan {
                experiment,
                config: self,
                family: None,
                coeffs: None,
                p: f64::NAN,
                resolution,
                opts,
                inputs,
            });
        }

        let p = self.p.ok_or_else(|| config_err("`p` is required"))?;
        if !(p.is_finite() && p >= 2.0) {
            return Err(config_err(format!("`p` must be at least 2, got {p}")));
        }
        if resolution.nx2 < 8 {
            return Err(config_err(format!(
                "`resolution.nx2` must be at least 8, got {}",
                resolution.nx2
            )));
        }
        match experiment {
            Experiment::Solve => {
                check_ells(&self.ells, 1, true)?;
                if self.ells.len() != 1 {
                    return Err(config_err("`solve` takes exactly one length in `ells`"));
                }
            }
            Experiment::NuLadder => check_ells(&self.ells, 3, true)?,
            Experiment::GapCheck => {
                if self.eps.is_empty() || self.eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
                    return Err(config_err(format!(
                        "`eps` must be positive, got {:?}",
                        self.eps
                    )));
                }
            }
            Experiment::Spectrum => {
                check_ells(&self.ells, 1, true)?;
                if p != 2.0 {
                    return Err(config_err("`spectrum` needs p = 2"));
                }
                if self.k == 0 {
                    return Err(config_err("`k` must be positive"));
                }
            }
            Experiment::Decay => {
                check_ells(&self.ells, 1, true)?;
                if let Some(r) = self.r {
                    if !(r > 0.0) || self.ells.iter().any(|&l| r > l) {
                        return Err(config_err(format!("`r` = {r} must lie in (0, min ell]")));
                    }
                    let cells = r * resolution.cells_per_unit as f64;
                    if (cells - cells.round()).abs() > 1e-9 {
                        return Err(config_err(format!(
                            "`r` = {r} is not a whole number of axial cells"
                        )));
                    }
                }
            }
            _ => check_ells(&self.ells, 1, true)?,
        }
        for spec in self.domains(experiment, resolution) {
            build_mesh(spec).map_err(|e| config_err(e.to_string()))?;
        }

        let family_cfg = self
            .family
            .as_ref()
            .ok_or_else(|| config_err("`family` is required"))?;
        let family = resolve_family(family_cfg, config_dir)?;
        let coeffs =
            family_field(&family, resolution.nx2, p).map_err(|e| config_err(e.to_string()))?;
        Ok(Plan {
            experiment,
            config: self,
            family: Some(family),
            coeffs: Some(coeffs),
            p,
            resolution,
            opts,
            inputs: Vec::new(),
        })
    }
}
