//! First eigenpairs for any `p >= 2`, linear spectra for `p = 2`, the
//! cross-section ground state and half-cylinder problems.

mod cross;
mod descent;
mod linear;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sprs::CsMat;

pub use cross::{cross_section_ground_state, CrossSectionResult};
pub use linear::linear_spectrum;

use crate::coeffs::CoefficientField;
use crate::discretization::{
    assemble_p2, csr_mul, lift_with_envelope, CellKernel, DiscreteField, QuadratureRule,
};
use crate::error::{check_exponent, Error, Result};
use crate::linalg::BandedCholesky;
use crate::mesh::{build_mesh, BoundaryKind, CylinderMesh, DomainSpec, Shape};
use descent::{minimize, RayleighProblem};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// `W(x2)` times the lowest axial mode compatible with the end conditions.
    LiftedW,
    /// `LiftedW` with a 1% sinusoidal axial modulation whose phase is drawn
    /// from the seed.
    PerturbedLift,
    Ones,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOptions {
    pub tol_residual: f64,
    pub tol_stagnation: f64,
    pub max_iters: usize,
    pub armijo_c: f64,
    pub armijo_shrink: f64,
    pub init: Init,
    pub positivity_projection: bool,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol_residual: 1e-8,
            tol_stagnation: 1e-12,
            max_iters: 50_000,
            armijo_c: 1e-4,
            armijo_shrink: 0.5,
            init: Init::LiftedW,
            positivity_projection: true,
            seed: 0,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.tol_residual > 0.0
            && self.tol_stagnation > 0.0
            && self.armijo_c > 0.0
            && self.armijo_c < 1.0
            && self.armijo_shrink > 0.0
            && self.armijo_shrink < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid solver options {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    Stagnation,
    MaxIterations,
    LineSearchFailure,
}

#[derive(Clone, Debug)]
pub struct EigenResult {
    pub lambda: f64,
    /// Normalized to unit p-mass.
    pub field: DiscreteField,
    pub iterations: usize,
    pub final_residual: f64,
    pub rayleigh_history: Vec<f64>,
    pub converged: bool,
    pub stop_reason: StopReason,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub fn shape(self) -> Shape {
        match self {
            Side::Plus => Shape::HalfPlus,
            Side::Minus => Shape::HalfMinus,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Resolution {
    pub nx2: usize,
    pub cells_per_unit: usize,
}

/// Rayleigh-quotient problem on a cylinder mesh, preconditioned by the
/// (optionally reweighted) stiffness of the same coefficients.
struct CylinderProblem<'a> {
    mesh: &'a CylinderMesh,
    kernel: CellKernel,
    p: f64,
    stiffness: CsMat<f64>,
    factor: BandedCholesky,
}

impl<'a> CylinderProblem<'a> {
    fn new(mesh: &'a CylinderMesh, coeffs: &CoefficientField, p: f64) -> Result<Self> {
        let quad = QuadratureRule::default();
        let pair = assemble_p2(mesh, coeffs, &quad)?;
        let factor = BandedCholesky::factor(&pair.stiffness)?;
        Ok(CylinderProblem {
            mesh,
            kernel: CellKernel::new(mesh, coeffs, &quad),
            p,
            stiffness: pair.stiffness,
            factor,
        })
    }

    fn expand(&self, u: &[f64]) -> Vec<f64> {
        let mut nodal = vec![0.0; self.mesh.node_count()];
        for (&node, &v) in self.mesh.dof_nodes().iter().zip(u) {
            nodal[node] = v;
        }
        nodal
    }

    fn restrict_into(&self, nodal: &[f64], out: &mut [f64]) {
        for (o, &node) in out.iter_mut().zip(self.mesh.dof_nodes()) {
            *o = nodal[node];
        }
    }
}

impl RayleighProblem for CylinderProblem<'_> {
    fn dim(&self) -> usize {
        self.mesh.free_dofs()
    }

    fn p(&self) -> f64 {
        self.p
    }

    fn energy(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        let nodal = self.expand(u);
        let mut g = vec![0.0; nodal.len()];
        let e = self.kernel.energy(&nodal, self.p, Some(&mut g));
        self.restrict_into(&g, grad);
        e
    }

    fn mass(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        let nodal = self.expand(u);
        let mut g = vec![0.0; nodal.len()];
        let m = self.kernel.p_mass(&nodal, self.p, Some(&mut g));
        self.restrict_into(&g, grad);
        m
    }

    fn energy_change(&self, u: &[f64], v: &[f64]) -> f64 {
        self.kernel
            .energy_change(&self.expand(u), &self.expand(v), self.p)
    }

    fn mass_change(&self, u: &[f64], v: &[f64]) -> f64 {
        self.kernel
            .p_mass_change(&self.expand(u), &self.expand(v), self.p)
    }

    fn precondition(&self, r: &[f64], out: &mut [f64]) {
        self.factor.solve(r, out);
    }

    fn metric(&self, s: &[f64], out: &mut [f64]) {
        csr_mul(&self.stiffness, s, out);
    }

    fn refresh(&mut self, u: &[f64]) {
        let k = self
            .kernel
            .weighted_stiffness(self.mesh, &self.expand(u), self.p, WEIGHT_FLOOR);
        if let Ok(factor) = BandedCholesky::factor(&k) {
            self.stiffness = k;
            self.factor = factor;
        }
    }
}

/// Relative floor on the preconditioner weights `|A∇u·∇u|^{(p-2)/2}`.
pub(crate) const WEIGHT_FLOOR: f64 = 1e-6;

/// Axial envelope of the lowest mode compatible with the end conditions.
fn axial_envelope(mesh: &CylinderMesh) -> impl Fn(f64) -> f64 {
    let spec = *mesh.spec();
    let (lo, hi) = mesh.x1_range();
    move |x1: f64| match (spec.bc, spec.shape) {
        (BoundaryKind::Mixed, _) => 1.0,
        (BoundaryKind::DirichletAll, _) => (PI * (x1 - lo) / (hi - lo)).sin(),
        (BoundaryKind::HalfCylinder, _) => (0.5 * PI * x1 / spec.ell).cos(),
    }
}

pub(crate) fn initial_field(
    mesh: &CylinderMesh,
    cross: &CrossSectionResult,
    opts: &SolveOptions,
) -> Result<DiscreteField> {
    let envelope = axial_envelope(mesh);
    match opts.init {
        Init::LiftedW => lift_with_envelope(cross, mesh, envelope),
        Init::PerturbedLift => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let phase = rng.random::<f64>() * 2.0 * PI;
            let (lo, hi) = mesh.x1_range();
            lift_with_envelope(cross, mesh, |x1| {
                envelope(x1) * (1.0 + 0.01 * (2.0 * PI * (x1 - lo) / (hi - lo) + phase).sin())
            })
        }
        Init::Ones => Ok(DiscreteField {
            values: vec![1.0; mesh.free_dofs()],
            mesh_id: mesh.id(),
        }),
    }
}

/// First eigenpair of the mesh's problem by minimizing the Rayleigh quotient.
pub fn minimize_rayleigh(
    mesh: &CylinderMesh,
    coeffs: &CoefficientField,
    p: f64,
    opts: &SolveOptions,
) -> Result<EigenResult> {
    check_exponent(p)?;
    opts.validate()?;
    let cross = cross::ground_state_unchecked(mesh.n2(), coeffs, p)?;
    let init = initial_field(mesh, &cross, opts)?;
    minimize_from(mesh, coeffs, p, opts, init)
}

/// As [`minimize_rayleigh`] from a caller-supplied starting field.
pub fn minimize_from(
    mesh: &CylinderMesh,
    coeffs: &CoefficientField,
    p: f64,
    opts: &SolveOptions,
    init: DiscreteField,
) -> Result<EigenResult> {
    check_exponent(p)?;
    opts.validate()?;
    init.check_mesh(mesh)?;
    let mut problem = CylinderProblem::new(mesh, coeffs, p)?;
    let outcome = minimize(&mut problem, init.values, opts, opts.positivity_projection)
        .ok_or(Error::ZeroField)?;
    Ok(EigenResult {
        lambda: outcome.lambda,
        field: DiscreteField {
            values: outcome.u,
            mesh_id: mesh.id(),
        },
        iterations: outcome.iterations,
        final_residual: outcome.residual,
        rayleigh_history: outcome.history,
        converged: outcome.stop == StopReason::Converged,
        stop_reason: outcome.stop,
    })
}

/// First eigenpair on `(0, ell) x omega` (Plus) or `(-ell, 0) x omega`
/// (Minus), Dirichlet on the lateral boundary and the far end.
pub fn half_cylinder_eigen(
    side: Side,
    ell: f64,
    resolution: Resolution,
    coeffs: &CoefficientField,
    p: f64,
    opts: &SolveOptions,
) -> Result<(CylinderMesh, EigenResult)> {
    let mesh = build_mesh(DomainSpec::half(
        side.shape(),
        ell,
        resolution.cells_per_unit,
        resolution.nx2,
    ))?;
    let result = minimize_rayleigh(&mesh, coeffs, p, opts)?;
    Ok((mesh, result))
}

#[cfg(test)]
mod tests;
