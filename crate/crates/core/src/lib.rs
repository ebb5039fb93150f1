//! Finite element eigenvalue solvers for the generalized p-Laplacian on
//! finite and half cylinders `(-ℓ, ℓ) × (-1/2, 1/2)`, with the sweep and
//! diagnostic machinery used to study the long-cylinder limit.

pub mod asymptotics;
pub mod coeffs;
pub mod discretization;
pub mod eigensolve;
pub mod error;
pub mod linalg;
pub mod mesh;

pub use asymptotics::{
    fit_decay, nu_infinity_estimate, sweep_lambda, DecayFit, NuEstimate, SweepRow, SweepTable,
};
pub use coeffs::{
    make_coefficients, CoefficientFamily, CoefficientField, Profile, TabulatedSamples,
};
pub use discretization::{DiscreteField, QuadratureRule};
pub use eigensolve::{
    cross_section_ground_state, half_cylinder_eigen, linear_spectrum, minimize_rayleigh,
    CrossSectionResult, EigenResult, Init, Resolution, Side, SolveOptions, StopReason,
};
pub use error::{Error, Result};
pub use mesh::{build_mesh, BoundaryKind, CylinderMesh, DomainSpec, Shape};
