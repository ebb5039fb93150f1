//! Coefficient matrices `A(x2) = [[a11, a12], [a12, a22]]` depending on the
//! cross-section coordinate only.
//!
//! Each entry is a [`Profile`] in `x2`. The built-in [`CoefficientFamily`]
//! variants cover the decoupled case (`a12 = 0`), the symmetric gap case
//! (constant `a12`), the one-sided case (`a12` odd in `x2`) and a family where
//! `a12` follows the derivative of the cross-section ground state.

use std::path::Path;

use serde::Deserialize;

use crate::eigensolve::CrossSectionResult;
use crate::error::{Error, Result};
use crate::mesh::{X2_MAX, X2_MIN};

/// Number of uniform samples used for the cached ellipticity margin.
pub const DEFAULT_ELLIPTICITY_SAMPLES: usize = 1024;

/// A scalar function of `x2`.
#[derive(Clone, Debug, PartialEq)]
pub enum Profile {
    Constant(f64),
    /// `intercept + slope * x2`
    Affine {
        intercept: f64,
        slope: f64,
    },
    /// Piecewise-linear interpolation through `(xs[i], ys[i])`, constant
    /// extension outside the knots.
    Table {
        xs: Vec<f64>,
        ys: Vec<f64>,
    },
}

impl Profile {
    pub fn eval(&self, x2: f64) -> f64 {
        match self {
            Profile::Constant(c) => *c,
            Profile::Affine { intercept, slope } => intercept + slope * x2,
            Profile::Table { xs, ys } => interpolate(xs, ys, x2),
        }
    }

    fn negated(&self) -> Profile {
        match self {
            Profile::Constant(c) => Profile::Constant(-c),
            Profile::Affine { intercept, slope } => Profile::Affine {
                intercept: -intercept,
                slope: -slope,
            },
            Profile::Table { xs, ys } => Profile::Table {
                xs: xs.clone(),
                ys: ys.iter().map(|y| -y).collect(),
            },
        }
    }

    fn knots(&self) -> &[f64] {
        match self {
            Profile::Table { xs, .. } => xs,
            _ => &[],
        }
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    if x <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return ys[last];
    }
    // first knot strictly greater than x
    let k = xs.partition_point(|&xk| xk <= x);
    let (x0, x1) = (xs[k - 1], xs[k]);
    let t = (x - x0) / (x1 - x0);
    ys[k - 1] * (1.0 - t) + ys[k] * t
}

/// Samples of a tabulated coefficient field, sorted by `x2`.
#[derive(Clone, Debug, PartialEq)]
pub struct TabulatedSamples {
    pub x2: Vec<f64>,
    pub a11: Vec<f64>,
    pub a12: Vec<f64>,
    pub a22: Vec<f64>,
}

#[derive(Deserialize)]
struct TableRow {
    x2: f64,
    a11: f64,
    a12: f64,
    a22: f64,
}

impl TabulatedSamples {
    /// Reads a CSV file with header `x2,a11,a12,a22`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::Table(format!("{}: {e}", path.display())))?;
        let header = reader
            .headers()
            .map_err(|e| Error::Table(e.to_string()))?
            .clone();
        let names: Vec<&str> = header.iter().collect();
        if names != ["x2", "a11", "a12", "a22"] {
            return Err(Error::Table(format!(
                "expected header `x2,a11,a12,a22`, found `{}`",
                names.join(",")
            )));
        }
        let mut samples = TabulatedSamples {
            x2: Vec::new(),
            a11: Vec::new(),
            a12: Vec::new(),
            a22: Vec::new(),
        };
        for row in reader.deserialize::<TableRow>() {
            let row = row.map_err(|e| Error::Table(e.to_string()))?;
            samples.x2.push(row.x2);
            samples.a11.push(row.a11);
            samples.a12.push(row.a12);
            samples.a22.push(row.a22);
        }
        samples.validate()?;
        Ok(samples)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.x2.len();
        if n < 2 || self.a11.len() != n || self.a12.len() != n || self.a22.len() != n {
            return Err(Error::Table("need at least two complete rows".into()));
        }
        if self.x2.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Table(
                "rows must be strictly increasing in x2".into(),
            ));
        }
        let covers = self.x2[0] <= X2_MIN + 1e-12 && self.x2[n - 1] >= X2_MAX - 1e-12;
        if !covers {
            return Err(Error::Table(format!(
                "rows cover [{}, {}], need [-0.5, 0.5]",
                self.x2[0],
                self.x2[n - 1]
            )));
        }
        let finite = [&self.a11, &self.a12, &self.a22]
            .iter()
            .all(|col| col.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::Table("non-finite coefficient value".into()));
        }
        Ok(())
    }
}

/// Parameterized coefficient families.
#[derive(Clone, Debug, PartialEq)]
pub enum CoefficientFamily {
    Identity,
    /// `a12 = c`
    ConstantOffDiag(f64),
    /// `a12 = c * x2`
    LinearOffDiag(f64),
    /// `a12 = c * W'(x2)` with `W` the cross-section ground state
    GradAligned(f64),
    Tabulated(TabulatedSamples),
}

impl CoefficientFamily {
    /// Short label used in tables.
    pub fn label(&self) -> String {
        match self {
            CoefficientFamily::Identity => "identity".into(),
            CoefficientFamily::ConstantOffDiag(c) => format!("constant_off_diag({c})"),
            CoefficientFamily::LinearOffDiag(c) => format!("linear_off_diag({c})"),
            CoefficientFamily::GradAligned(c) => format!("grad_aligned({c})"),
            CoefficientFamily::Tabulated(_) => "tabulated".into(),
        }
    }

    /// Whether [`make_coefficients`] needs a cross-section ground state.
    pub fn needs_cross_section(&self) -> bool {
        matches!(self, CoefficientFamily::GradAligned(_))
    }
}

/// The symmetric 2×2 coefficient field with cached ellipticity data.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField {
    a11: Profile,
    a12: Profile,
    a22: Profile,
    lambda_margin: f64,
    sup_norm: f64,
}

/// Smallest and largest eigenvalue of `[[a, b], [b, d]]`.
pub fn eigen_extremes(a: f64, b: f64, d: f64) -> (f64, f64) {
    let mean = 0.5 * (a + d);
    let radius = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    (mean - radius, mean + radius)
}

fn uniform_samples(n: usize) -> impl Iterator<Item = f64> {
    let step = (X2_MAX - X2_MIN) / (n - 1) as f64;
    (0..n).map(move |i| X2_MIN + step * i as f64)
}

impl CoefficientField {
    /// Builds a field from explicit profiles, validating ellipticity.
    pub fn from_profiles(a11: Profile, a12: Profile, a22: Profile) -> Result<Self> {
        let mut field = CoefficientField {
            a11,
            a12,
            a22,
            lambda_margin: f64::NAN,
            sup_norm: f64::NAN,
        };
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        let knots: Vec<f64> = [&field.a11, &field.a12, &field.a22]
            .iter()
            .flat_map(|p| p.knots().iter().copied())
            .filter(|x| (X2_MIN..=X2_MAX).contains(x))
            .collect();
        for x2 in uniform_samples(DEFAULT_ELLIPTICITY_SAMPLES).chain(knots) {
            let [a, b, d] = field.at(x2);
            let (emin, emax) = eigen_extremes(a, b, d);
            lo = lo.min(emin);
            hi = hi.max(emax.abs()).max(emin.abs());
        }
        if !(lo > 0.0) || !hi.is_finite() {
            return Err(Error::NotElliptic { margin: lo });
        }
        field.lambda_margin = lo;
        field.sup_norm = hi;
        Ok(field)
    }

    /// `[a11, a12, a22]` at `x2`.
    #[inline]
    pub fn at(&self, x2: f64) -> [f64; 3] {
        [self.a11.eval(x2), self.a12.eval(x2), self.a22.eval(x2)]
    }

    pub fn a11(&self) -> &Profile {
        &self.a11
    }

    pub fn a12(&self) -> &Profile {
        &self.a12
    }

    pub fn a22(&self) -> &Profile {
        &self.a22
    }

    /// Cached uniform ellipticity constant.
    pub fn lambda_margin(&self) -> f64 {
        self.lambda_margin
    }

    /// Cached uniform bound on the spectral norm of `A`.
    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    /// Minimum over `n_samples` uniform points of the smallest eigenvalue of
    /// `A(x2)`; the result replaces the cached margin.
    pub fn ellipticity_margin(&mut self, n_samples: usize) -> Result<f64> {
        if n_samples < 16 {
            return Err(Error::Precondition(format!(
                "ellipticity check needs at least 16 samples, got {n_samples}"
            )));
        }
        let margin = uniform_samples(n_samples)
            .map(|x2| {
                let [a, b, d] = self.at(x2);
                eigen_extremes(a, b, d).0
            })
            .fold(f64::INFINITY, f64::min);
        if !(margin > 0.0) {
            return Err(Error::NotElliptic { margin });
        }
        self.lambda_margin = margin;
        Ok(margin)
    }

    /// Checks `A(-x2) = A(x2)` entrywise on a dense sample of `[0, 1/2]`.
    /// The cross-section `(-1/2, 1/2)` is symmetric by construction.
    pub fn satisfies_symmetry_s(&self, tol: f64) -> bool {
        let mut knots: Vec<f64> = [&self.a11, &self.a12, &self.a22]
            .iter()
            .flat_map(|p| p.knots().iter().map(|x| x.abs()))
            .collect();
        knots.extend(uniform_samples(DEFAULT_ELLIPTICITY_SAMPLES).map(f64::abs));
        knots.iter().all(|&x| {
            let left = self.at(-x);
            let right = self.at(x);
            left.iter().zip(&right).all(|(l, r)| (l - r).abs() <= tol)
        })
    }

    /// The field with `a12` negated; corresponds to the reflection
    /// `x1 -> -x1`.
    pub fn reflect_axis(&self) -> CoefficientField {
        CoefficientField {
            a11: self.a11.clone(),
            a12: self.a12.negated(),
            a22: self.a22.clone(),
            lambda_margin: self.lambda_margin,
            sup_norm: self.sup_norm,
        }
    }

    /// Whether `a12` vanishes identically on the sample grid.
    pub fn is_decoupled(&self) -> bool {
        uniform_samples(DEFAULT_ELLIPTICITY_SAMPLES)
            .chain(self.a12.knots().iter().copied())
            .all(|x| self.a12.eval(x) == 0.0)
    }
}

/// Instantiates a coefficient family. `GradAligned` requires the cross-section
/// ground state `W` (the result of a solve with `a22 = 1`).
pub fn make_coefficients(
    family: &CoefficientFamily,
    cross: Option<&CrossSectionResult>,
) -> Result<CoefficientField> {
    let one = || Profile::Constant(1.0);
    match family {
        CoefficientFamily::Identity => {
            CoefficientField::from_profiles(one(), Profile::Constant(0.0), one())
        }
        CoefficientFamily::ConstantOffDiag(c) => {
            CoefficientField::from_profiles(one(), Profile::Constant(*c), one())
        }
        CoefficientFamily::LinearOffDiag(c) => CoefficientField::from_profiles(
            one(),
            Profile::Affine {
                intercept: 0.0,
                slope: *c,
            },
            one(),
        ),
        CoefficientFamily::GradAligned(c) => {
            let cross = cross.ok_or_else(|| {
                Error::Config("grad-aligned coefficients need a cross-section ground state".into())
            })?;
            let slopes = cross.nodal_derivative();
            let ys = slopes.iter().map(|s| c * s).collect();
            CoefficientField::from_profiles(
                one(),
                Profile::Table {
                    xs: cross.nodes().to_vec(),
                    ys,
                },
                one(),
            )
        }
        CoefficientFamily::Tabulated(samples) => {
            samples.validate()?;
            CoefficientField::from_profiles(
                Profile::Table {
                    xs: samples.x2.clone(),
                    ys: samples.a11.clone(),
                },
                Profile::Table {
                    xs: samples.x2.clone(),
                    ys: samples.a12.clone(),
                },
                Profile::Table {
                    xs: samples.x2.clone(),
                    ys: samples.a22.clone(),
                },
            )
        }
    }
}
