//! Q1 finite element discretization of the energy `∫|A∇u·∇u|^{p/2}` and the
//! constraint `∫|u|^p`.
//!
//! Gradients are exact derivatives of the quadrature sums, so they agree with
//! finite differences of [`energy`] and [`p_mass`] up to rounding.

use sprs::{CsMat, TriMat};

use crate::coeffs::CoefficientField;
use crate::eigensolve::CrossSectionResult;
use crate::error::{check_exponent, Error, Result};
use crate::mesh::{BoundaryKind, CylinderMesh};

/// Tensor Gauss–Legendre rule on the unit square.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    points_per_dir: usize,
    /// abscissae on `[0, 1]`
    abscissae: Vec<f64>,
    /// weights on `[0, 1]`, summing to 1
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn gauss(points_per_dir: usize) -> Result<Self> {
        let (abscissae, weights) = match points_per_dir {
            2 => {
                let d = 0.5 / 3f64.sqrt();
                (vec![0.5 - d, 0.5 + d], vec![0.5, 0.5])
            }
            3 => {
                let d = 0.5 * (0.6f64).sqrt();
                (
                    vec![0.5 - d, 0.5, 0.5 + d],
                    vec![5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0],
                )
            }
            n => {
                return Err(Error::Config(format!(
                    "quadrature supports 2 or 3 points per direction, got {n}"
                )))
            }
        };
        Ok(QuadratureRule {
            points_per_dir,
            abscissae,
            weights,
        })
    }

    pub fn points_per_dir(&self) -> usize {
        self.points_per_dir
    }

    pub fn abscissae(&self) -> &[f64] {
        &self.abscissae
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        QuadratureRule::gauss(3).expect("3-point rule")
    }
}

/// Values on the free DOFs of one mesh; Dirichlet nodes are implicitly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteField {
    pub values: Vec<f64>,
    pub mesh_id: u64,
}

impl DiscreteField {
    pub fn zeros(mesh: &CylinderMesh) -> Self {
        DiscreteField {
            values: vec![0.0; mesh.free_dofs()],
            mesh_id: mesh.id(),
        }
    }

    /// Samples `f(x1, x2)` at the free nodes.
    pub fn from_fn(mesh: &CylinderMesh, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = mesh
            .dof_nodes()
            .iter()
            .map(|&n| {
                let (x1, x2) = mesh.node_coords(n);
                f(x1, x2)
            })
            .collect();
        DiscreteField {
            values,
            mesh_id: mesh.id(),
        }
    }

    pub fn from_values(mesh: &CylinderMesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.free_dofs() {
            return Err(Error::Dimension {
                expected: mesh.free_dofs(),
                actual: values.len(),
            });
        }
        Ok(DiscreteField {
            values,
            mesh_id: mesh.id(),
        })
    }

    pub fn check_mesh(&self, mesh: &CylinderMesh) -> Result<()> {
        if self.values.len() != mesh.free_dofs() {
            return Err(Error::Dimension {
                expected: mesh.free_dofs(),
                actual: self.values.len(),
            });
        }
        if self.mesh_id != mesh.id() {
            return Err(Error::Precondition(
                "field belongs to a different mesh".into(),
            ));
        }
        Ok(())
    }

    /// Full nodal vector with zeros at masked nodes.
    pub fn expand(&self, mesh: &CylinderMesh) -> Vec<f64> {
        let mut nodal = vec![0.0; mesh.node_count()];
        for (&node, &v) in mesh.dof_nodes().iter().zip(&self.values) {
            nodal[node] = v;
        }
        nodal
    }

    pub fn scaled(&self, c: f64) -> Self {
        DiscreteField {
            values: self.values.iter().map(|v| c * v).collect(),
            mesh_id: self.mesh_id,
        }
    }
}

/// Quadrature data shared by every cell of a uniform mesh.
pub(crate) struct CellKernel {
    nq: usize,
    /// per quadrature point: weight including the cell area
    w: Vec<f64>,
    phi: Vec<[f64; 4]>,
    d1: Vec<[f64; 4]>,
    d2: Vec<[f64; 4]>,
    /// per cross cell `j` and cross point `qy`: `[a11, a12, a22]`
    coef: Vec<[f64; 3]>,
    n1: usize,
    n2: usize,
}

impl CellKernel {
    pub(crate) fn new(
        mesh: &CylinderMesh,
        coeffs: &CoefficientField,
        quad: &QuadratureRule,
    ) -> Self {
        let nq = quad.points_per_dir();
        let (h1, h2) = (mesh.h1(), mesh.h2());
        let mut w = Vec::with_capacity(nq * nq);
        let mut phi = Vec::with_capacity(nq * nq);
        let mut d1 = Vec::with_capacity(nq * nq);
        let mut d2 = Vec::with_capacity(nq * nq);
        for qx in 0..nq {
            for qy in 0..nq {
                let (s, t) = (quad.abscissae()[qx], quad.abscissae()[qy]);
                w.push(quad.weights()[qx] * quad.weights()[qy] * h1 * h2);
                phi.push([(1.0 - s) * (1.0 - t), s * (1.0 - t), (1.0 - s) * t, s * t]);
                d1.push([-(1.0 - t) / h1, (1.0 - t) / h1, -t / h1, t / h1]);
                d2.push([-(1.0 - s) / h2, -s / h2, (1.0 - s) / h2, s / h2]);
            }
        }
        let mut coef = Vec::with_capacity(mesh.n2() * nq);
        for j in 0..mesh.n2() {
            for qy in 0..nq {
                let x2 = mesh.x2(j) + quad.abscissae()[qy] * h2;
                coef.push(coeffs.at(x2));
            }
        }
        CellKernel {
            nq,
            w,
            phi,
            d1,
            d2,
            coef,
            n1: mesh.n1(),
            n2: mesh.n2(),
        }
    }

    #[inline]
    fn cell_nodes(&self, i: usize, j: usize) -> [usize; 4] {
        let a = i * (self.n2 + 1) + j;
        let b = a + self.n2 + 1;
        [a, b, a + 1, b + 1]
    }

    /// Energy of a nodal vector; accumulates the nodal gradient when given.
    pub(crate) fn energy(&self, nodal: &[f64], p: f64, mut grad: Option<&mut [f64]>) -> f64 {
        let nq = self.nq;
        let mut total = 0.0;
        for i in 0..self.n1 {
            for j in 0..self.n2 {
                let nodes = self.cell_nodes(i, j);
                let u = nodes.map(|n| nodal[n]);
                let mut gl = [0.0; 4];
                let mut cell = 0.0;
                for q in 0..nq * nq {
                    let [a11, a12, a22] = self.coef[j * nq + q % nq];
                    let (g1, g2) = grad_at(&u, &self.d1[q], &self.d2[q]);
                    let f1 = a11 * g1 + a12 * g2;
                    let f2 = a12 * g1 + a22 * g2;
                    let s = g1 * f1 + g2 * f2;
                    let (val, dval) = power_and_slope(s, p);
                    cell += self.w[q] * val;
                    if grad.is_some() {
                        // d|s|^{p/2}/dg = (p/2) |s|^{p/2-1} sgn(s) * 2 A g
                        let c = self.w[q] * dval * 2.0;
                        for a in 0..4 {
                            gl[a] += c * (f1 * self.d1[q][a] + f2 * self.d2[q][a]);
                        }
                    }
                }
                total += cell;
                if let Some(g) = grad.as_deref_mut() {
                    for a in 0..4 {
                        g[nodes[a]] += gl[a];
                    }
                }
            }
        }
        total
    }

    pub(crate) fn p_mass(&self, nodal: &[f64], p: f64, mut grad: Option<&mut [f64]>) -> f64 {
        let nq = self.nq;
        let mut total = 0.0;
        for i in 0..self.n1 {
            for j in 0..self.n2 {
                let nodes = self.cell_nodes(i, j);
                let u = nodes.map(|n| nodal[n]);
                let mut gl = [0.0; 4];
                let mut cell = 0.0;
                for q in 0..nq * nq {
                    let phi = &self.phi[q];
                    let v = u[0] * phi[0] + u[1] * phi[1] + u[2] * phi[2] + u[3] * phi[3];
                    let (val, dval) = abs_power(v, p);
                    cell += self.w[q] * val;
                    if grad.is_some() {
                        let c = self.w[q] * dval;
                        for a in 0..4 {
                            gl[a] += c * phi[a];
                        }
                    }
                }
                total += cell;
                if let Some(g) = grad.as_deref_mut() {
                    for a in 0..4 {
                        g[nodes[a]] += gl[a];
                    }
                }
            }
        }
        total
    }
    /// `E(v) - E(u)` evaluated pointwise without cancellation.
    pub(crate) fn energy_change(&self, u_nodal: &[f64], v_nodal: &[f64], p: f64) -> f64 {
        let nq = self.nq;
        let mut total = 0.0;
        for i in 0..self.n1 {
            for j in 0..self.n2 {
                let nodes = self.cell_nodes(i, j);
                let u = nodes.map(|n| u_nodal[n]);
                let dv = nodes.map(|n| v_nodal[n] - u_nodal[n]);
                let mut cell = 0.0;
                for q in 0..nq * nq {
                    let [a11, a12, a22] = self.coef[j * nq + q % nq];
                    let (g1, g2) = grad_at(&u, &self.d1[q], &self.d2[q]);
                    let (e1, e2) = grad_at(&dv, &self.d1[q], &self.d2[q]);
                    let (h1, h2) = (g1 + e1, g2 + e2);
                    let su = g1 * (a11 * g1 + a12 * g2) + g2 * (a12 * g1 + a22 * g2);
                    let sv = h1 * (a11 * h1 + a12 * h2) + h2 * (a12 * h1 + a22 * h2);
                    // (h - g)ᵀ A (h + g)
                    let (m1, m2) = (g1 + h1, g2 + h2);
                    let ds = e1 * (a11 * m1 + a12 * m2) + e2 * (a12 * m1 + a22 * m2);
                    cell += self.w[q] * power_change(su, sv, ds, 0.5 * p);
                }
                total += cell;
            }
        }
        total
    }

    /// `m(v) - m(u)` evaluated pointwise without cancellation.
    pub(crate) fn p_mass_change(&self, u_nodal: &[f64], v_nodal: &[f64], p: f64) -> f64 {
        let nq = self.nq;
        let mut total = 0.0;
        for i in 0..self.n1 {
            for j in 0..self.n2 {
                let nodes = self.cell_nodes(i, j);
                let u = nodes.map(|n| u_nodal[n]);
                let dv = nodes.map(|n| v_nodal[n] - u_nodal[n]);
                let mut cell = 0.0;
                for q in 0..nq * nq {
                    let phi = &self.phi[q];
                    let a = u[0] * phi[0] + u[1] * phi[1] + u[2] * phi[2] + u[3] * phi[3];
                    let d = dv[0] * phi[0] + dv[1] * phi[1] + dv[2] * phi[2] + dv[3] * phi[3];
                    cell += self.w[q] * abs_power_change(a, d, p);
                }
                total += cell;
            }
        }
        total
    }

    /// Stiffness over the free DOFs with the `A`-form weighted by
    /// `|A∇u·∇u|^{(p-2)/2}`, floored at `floor` times its maximum.
    pub(crate) fn weighted_stiffness(
        &self,
        mesh: &CylinderMesh,
        nodal: &[f64],
        p: f64,
        floor: f64,
    ) -> CsMat<f64> {
        let nq = self.nq;
        let mut weights = Vec::with_capacity(self.n1 * self.n2 * nq * nq);
        for i in 0..self.n1 {
            for j in 0..self.n2 {
                let u = self.cell_nodes(i, j).map(|n| nodal[n]);
                for q in 0..nq * nq {
                    let [a11, a12, a22] = self.coef[j * nq + q % nq];
                    let (g1, g2) = grad_at(&u, &self.d1[q], &self.d2[q]);
                    let s = g1 * (a11 * g1 + a12 * g2) + g2 * (a12 * g1 + a22 * g2);
                    weights.push(power_and_slope(s, p).1 / (0.5 * p));
                }
            }
        }
        let top = weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        let lo = floor * top.max(f64::MIN_POSITIVE);
        weights.iter_mut().for_each(|w| *w = w.abs().max(lo));
        self.assemble_weighted(mesh, &weights)
    }

    fn assemble_weighted(&self, mesh: &CylinderMesh, weights: &[f64]) -> CsMat<f64> {
        let nq = self.nq;
        let n = mesh.free_dofs();
        let dof = mesh.free_dof_map();
        let mut tri = TriMat::with_capacity((n, n), 16 * self.n1 * self.n2);
        for i in 0..self.n1 {
            for j in 0..self.n2 {
                let nodes = self.cell_nodes(i, j);
                let base = (i * self.n2 + j) * nq * nq;
                let mut ke = [[0.0; 4]; 4];
                for q in 0..nq * nq {
                    let [a11, a12, a22] = self.coef[j * nq + q % nq];
                    let (d1, d2) = (&self.d1[q], &self.d2[q]);
                    let w = self.w[q] * weights[base + q];
                    for a in 0..4 {
                        for b in 0..4 {
                            ke[a][b] += w
                                * (a11 * d1[a] * d1[b]
                                    + a12 * (d1[a] * d2[b] + d2[a] * d1[b])
                                    + a22 * d2[a] * d2[b]);
                        }
                    }
                }
                for a in 0..4 {
                    let Some(ra) = dof[nodes[a]] else { continue };
                    for b in 0..4 {
                        let Some(rb) = dof[nodes[b]] else { continue };
                        tri.add_triplet(ra, rb, ke[a][b]);
                    }
                }
            }
        }
        tri.to_csr()
    }
}

#[inline]
fn grad_at(u: &[f64; 4], d1: &[f64; 4], d2: &[f64; 4]) -> (f64, f64) {
    (
        u[0] * d1[0] + u[1] * d1[1] + u[2] * d1[2] + u[3] * d1[3],
        u[0] * d2[0] + u[1] * d2[1] + u[2] * d2[2] + u[3] * d2[3],
    )
}

/// `(|s|^{p/2}, (p/2)|s|^{p/2-1} sgn s)`
#[inline]
pub(crate) fn power_and_slope(s: f64, p: f64) -> (f64, f64) {
    let a = s.abs();
    let sign = if s < 0.0 { -1.0 } else { 1.0 };
    let lower = if p == 2.0 {
        1.0
    } else if p == 3.0 {
        a.sqrt()
    } else if p == 4.0 {
        a
    } else {
        a.powf(0.5 * p - 1.0)
    };
    (a * lower, 0.5 * p * lower * sign)
}

/// `(|v|^p, p|v|^{p-2}v)`
#[inline]
pub(crate) fn abs_power(v: f64, p: f64) -> (f64, f64) {
    let a = v.abs();
    let lower = if p == 2.0 {
        1.0
    } else if p == 3.0 {
        a
    } else if p == 4.0 {
        a * a
    } else {
        a.powf(p - 2.0)
    };
    (a * a * lower, p * lower * v)
}

/// `|b|^q - |a|^q` for `a, b >= 0` given `d = b - a` computed separately.
#[inline]
pub(crate) fn power_change(a: f64, b: f64, d: f64, q: f64) -> f64 {
    if a > 0.0 && b >= 0.0 && d > -a {
        a.powf(q) * (q * (d / a).ln_1p()).exp_m1()
    } else {
        b.abs().powf(q) - a.abs().powf(q)
    }
}

/// `|a + d|^p - |a|^p` without cancellation when `d` is small.
#[inline]
pub(crate) fn abs_power_change(a: f64, d: f64, p: f64) -> f64 {
    if a != 0.0 && d / a > -1.0 {
        a.abs().powf(p) * (p * (d / a).ln_1p()).exp_m1()
    } else {
        (a + d).abs().powf(p) - a.abs().powf(p)
    }
}

fn restrict(mesh: &CylinderMesh, nodal: &[f64]) -> Vec<f64> {
    mesh.dof_nodes().iter().map(|&n| nodal[n]).collect()
}

fn check_quad(quad: &QuadratureRule) -> Result<()> {
    match quad.points_per_dir() {
        2 | 3 => Ok(()),
        n => Err(Error::Config(format!(
            "unsupported quadrature with {n} points"
        ))),
    }
}

/// `∫ |A∇u·∇u|^{p/2}` by tensor Gauss quadrature.
pub fn energy(
    mesh: &CylinderMesh,
    coeffs: &CoefficientField,
    u: &DiscreteField,
    p: f64,
    quad: &QuadratureRule,
) -> Result<f64> {
    check_exponent(p)?;
    check_quad(quad)?;
    u.check_mesh(mesh)?;
    let kernel = CellKernel::new(mesh, coeffs, quad);
    Ok(kernel.energy(&u.expand(mesh), p, None))
}

/// Exact derivative of [`energy`] with respect to the free nodal values.
pub fn energy_gradient(
    mesh: &CylinderMesh,
    coeffs: &CoefficientField,
    u: &DiscreteField,
    p: f64,
    quad: &QuadratureRule,
) -> Result<DiscreteField> {
    check_exponent(p)?;
    check_quad(quad)?;
    u.check_mesh(mesh)?;
    let kernel = CellKernel::new(mesh, coeffs, quad);
    let mut g = vec![0.0; mesh.node_count()];
    kernel.energy(&u.expand(mesh), p, Some(&mut g));
    Ok(DiscreteField {
        values: restrict(mesh, &g),
        mesh_id: mesh.id(),
    })
}

/// `∫|u|^p` and its exact gradient.
pub fn p_mass(
    mesh: &CylinderMesh,
    u: &DiscreteField,
    p: f64,
    quad: &QuadratureRule,
) -> Result<(f64, DiscreteField)> {
    check_exponent(p)?;
    check_quad(quad)?;
    u.check_mesh(mesh)?;
    // mass does not see the coefficients
    let kernel = CellKernel::new(mesh, &identity_field(), quad);
    let mut g = vec![0.0; mesh.node_count()];
    let value = kernel.p_mass(&u.expand(mesh), p, Some(&mut g));
    Ok((
        value,
        DiscreteField {
            values: restrict(mesh, &g),
            mesh_id: mesh.id(),
        },
    ))
}

fn identity_field() -> CoefficientField {
    crate::coeffs::make_coefficients(&crate::coeffs::CoefficientFamily::Identity, None)
        .expect("identity is elliptic")
}

/// Energy over p-mass.
pub fn rayleigh(
    mesh: &CylinderMesh,
    coeffs: &CoefficientField,
    u: &DiscreteField,
    p: f64,
    quad: &QuadratureRule,
) -> Result<f64> {
    check_exponent(p)?;
    check_quad(quad)?;
    u.check_mesh(mesh)?;
    let kernel = CellKernel::new(mesh, coeffs, quad);
    let nodal = u.expand(mesh);
    let m = kernel.p_mass(&nodal, p, None);
    if m == 0.0 {
        return Err(Error::ZeroField);
    }
    Ok(kernel.energy(&nodal, p, None) / m)
}

/// Stiffness and mass matrices of the `p = 2` problem over the free DOFs.
#[derive(Clone, Debug)]
pub struct SparsePair {
    pub stiffness: CsMat<f64>,
    pub mass: CsMat<f64>,
}

pub fn assemble_p2(
    mesh: &CylinderMesh,
    coeffs: &CoefficientField,
    quad: &QuadratureRule,
) -> Result<SparsePair> {
    check_quad(quad)?;
    let kernel = CellKernel::new(mesh, coeffs, quad);
    let n = mesh.free_dofs();
    let dof = mesh.free_dof_map();
    let nq = kernel.nq;
    let mut k_tri = TriMat::with_capacity((n, n), 16 * mesh.n1() * mesh.n2());
    let mut m_tri = TriMat::with_capacity((n, n), 16 * mesh.n1() * mesh.n2());
    for i in 0..mesh.n1() {
        for j in 0..mesh.n2() {
            let nodes = mesh.cell_nodes(i, j);
            let mut ke = [[0.0; 4]; 4];
            let mut me = [[0.0; 4]; 4];
            for q in 0..nq * nq {
                let [a11, a12, a22] = kernel.coef[j * nq + q % nq];
                let (d1, d2, phi, w) = (&kernel.d1[q], &kernel.d2[q], &kernel.phi[q], kernel.w[q]);
                for a in 0..4 {
                    for b in 0..4 {
                        ke[a][b] += w
                            * (a11 * d1[a] * d1[b]
                                + a12 * (d1[a] * d2[b] + d2[a] * d1[b])
                                + a22 * d2[a] * d2[b]);
                        me[a][b] += w * phi[a] * phi[b];
                    }
                }
            }
            for a in 0..4 {
                let Some(ra) = dof[nodes[a]] else { continue };
                for b in 0..4 {
                    let Some(rb) = dof[nodes[b]] else { continue };
                    k_tri.add_triplet(ra, rb, ke[a][b]);
                    m_tri.add_triplet(ra, rb, me[a][b]);
                }
            }
        }
    }
    Ok(SparsePair {
        stiffness: k_tri.to_csr(),
        mass: m_tri.to_csr(),
    })
}

/// `u(x1, x2) = W(x2)` on a mixed mesh, renormalized to unit p-mass.
pub fn lift_cross_section(
    cross: &CrossSectionResult,
    mesh: &CylinderMesh,
) -> Result<DiscreteField> {
    if mesh.spec().bc != BoundaryKind::Mixed {
        return Err(Error::Admissibility(format!(
            "an x1-independent lift violates the {:?} boundary condition",
            mesh.spec().bc
        )));
    }
    let lifted = lift_with_envelope(cross, mesh, |_| 1.0)?;
    let (m, _) = p_mass(mesh, &lifted, cross.p, &QuadratureRule::default())?;
    Ok(lifted.scaled(m.powf(-1.0 / cross.p)))
}

/// `u(x1, x2) = envelope(x1) W(x2)` restricted to the free DOFs.
pub(crate) fn lift_with_envelope(
    cross: &CrossSectionResult,
    mesh: &CylinderMesh,
    envelope: impl Fn(f64) -> f64,
) -> Result<DiscreteField> {
    let w = cross.w();
    if w.len() != mesh.n2() + 1 {
        return Err(Error::Dimension {
            expected: mesh.n2() + 1,
            actual: w.len(),
        });
    }
    let values = mesh
        .dof_nodes()
        .iter()
        .map(|&node| {
            let (i, j) = (node / (mesh.n2() + 1), node % (mesh.n2() + 1));
            envelope(mesh.x1(i)) * w[j]
        })
        .collect();
    Ok(DiscreteField {
        values,
        mesh_id: mesh.id(),
    })
}

/// Per-cell integrals used by slab and end-split diagnostics.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct CellIntegrals {
    pub energy: f64,
    pub grad_p: f64,
    pub p_mass: f64,
}

/// Cell integrals in row-major order `i * n2 + j`.
pub(crate) fn cell_integrals(
    mesh: &CylinderMesh,
    coeffs: &CoefficientField,
    nodal: &[f64],
    p: f64,
    quad: &QuadratureRule,
) -> Vec<CellIntegrals> {
    let kernel = CellKernel::new(mesh, coeffs, quad);
    let nq = kernel.nq;
    let mut out = Vec::with_capacity(mesh.n1() * mesh.n2());
    for i in 0..mesh.n1() {
        for j in 0..mesh.n2() {
            let u = mesh.cell_nodes(i, j).map(|n| nodal[n]);
            let mut c = CellIntegrals::default();
            for q in 0..nq * nq {
                let [a11, a12, a22] = kernel.coef[j * nq + q % nq];
                let (g1, g2) = grad_at(&u, &kernel.d1[q], &kernel.d2[q]);
                let s = a11 * g1 * g1 + 2.0 * a12 * g1 * g2 + a22 * g2 * g2;
                let phi = &kernel.phi[q];
                let v = u[0] * phi[0] + u[1] * phi[1] + u[2] * phi[2] + u[3] * phi[3];
                c.energy += kernel.w[q] * power_and_slope(s, p).0;
                c.grad_p += kernel.w[q] * power_and_slope(g1 * g1 + g2 * g2, p).0;
                c.p_mass += kernel.w[q] * abs_power(v, p).0;
            }
            out.push(c);
        }
    }
    out
}

/// `∫ |∇u|^p` (plain gradient, identity coefficients).
pub fn gradient_p_norm(mesh: &CylinderMesh, u: &DiscreteField, p: f64) -> Result<f64> {
    energy(mesh, &identity_field(), u, p, &QuadratureRule::default())
}

pub(crate) fn csr_mul(a: &CsMat<f64>, x: &[f64], out: &mut [f64]) {
    for (row, vec) in a.outer_iterator().enumerate() {
        out[row] = vec.iter().map(|(col, v)| v * x[col]).sum();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{make_coefficients, CoefficientFamily};
    use crate::mesh::{build_mesh, DomainSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn quad_form(a: &CsMat<f64>, x: &[f64]) -> f64 {
        let mut ax = vec![0.0; x.len()];
        csr_mul(a, x, &mut ax);
        ax.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    fn small_mesh(bc: BoundaryKind) -> CylinderMesh {
        build_mesh(DomainSpec::full(1.0, bc, 3, 6)).unwrap()
    }

    fn random_field(mesh: &CylinderMesh, rng: &mut ChaCha8Rng) -> DiscreteField {
        let values = (0..mesh.free_dofs())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        DiscreteField::from_values(mesh, values).unwrap()
    }

    #[test]
    fn quadrature_exactness() {
        for n in [2, 3] {
            let q = QuadratureRule::gauss(n).unwrap();
            for deg in 0..(2 * n) {
                let approx: f64 = q
                    .abscissae()
                    .iter()
                    .zip(q.weights())
                    .map(|(x, w)| w * x.powi(deg as i32))
                    .sum();
                assert!(
                    (approx - 1.0 / (deg as f64 + 1.0)).abs() < 1e-15,
                    "n={n} deg={deg}"
                );
            }
        }
        assert!(QuadratureRule::gauss(4).is_err());
    }

    #[test]
    fn zero_field_has_zero_energy_and_gradient() {
        let m = small_mesh(BoundaryKind::Mixed);
        let f = make_coefficients(&CoefficientFamily::ConstantOffDiag(0.3), None).unwrap();
        let q = QuadratureRule::default();
        let z = DiscreteField::zeros(&m);
        assert_eq!(energy(&m, &f, &z, 3.0, &q).unwrap(), 0.0);
        assert!(energy_gradient(&m, &f, &z, 3.0, &q)
            .unwrap()
            .values
            .iter()
            .all(|v| *v == 0.0));
        let (mass, g) = p_mass(&m, &z, 2.5, &q).unwrap();
        assert_eq!(mass, 0.0);
        assert!(g.values.iter().all(|v| *v == 0.0));
        assert!(matches!(
            rayleigh(&m, &f, &z, 2.0, &q),
            Err(Error::ZeroField)
        ));
    }

    #[test]
    fn exponent_below_two_is_rejected() {
        let m = small_mesh(BoundaryKind::Mixed);
        let f = make_coefficients(&CoefficientFamily::Identity, None).unwrap();
        let z = DiscreteField::zeros(&m);
        let q = QuadratureRule::default();
        assert!(matches!(
            energy(&m, &f, &z, 1.5, &q),
            Err(Error::UnsupportedExponent(_))
        ));
        assert!(matches!(
            energy_gradient(&m, &f, &z, 1.0, &q),
            Err(Error::UnsupportedExponent(_))
        ));
    }

    #[test]
    fn homogeneity_and_scale_invariance() {
        let m = small_mesh(BoundaryKind::Mixed);
        let f = make_coefficients(&CoefficientFamily::LinearOffDiag(0.8), None).unwrap();
        let q = QuadratureRule::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for p in [2.0, 2.5, 3.0, 4.0] {
            let u = random_field(&m, &mut rng);
            let c: f64 = -1.7;
            let e = energy(&m, &f, &u, p, &q).unwrap();
            let ec = energy(&m, &f, &u.scaled(c), p, &q).unwrap();
            assert!((ec - c.abs().powf(p) * e).abs() < 1e-12 * ec);
            let (mu, _) = p_mass(&m, &u, p, &q).unwrap();
            let (mc, _) = p_mass(&m, &u.scaled(c), p, &q).unwrap();
            assert!((mc - c.abs().powf(p) * mu).abs() < 1e-12 * mc);
            let r = rayleigh(&m, &f, &u, p, &q).unwrap();
            let r2 = rayleigh(&m, &f, &u.scaled(2.0), p, &q).unwrap();
            assert!((r - r2).abs() < 1e-12 * r);
        }
    }

    #[test]
    fn p2_energy_matches_quadratic_forms() {
        let q = QuadratureRule::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for bc in [BoundaryKind::Mixed, BoundaryKind::DirichletAll] {
            let m = small_mesh(bc);
            let f = make_coefficients(&CoefficientFamily::ConstantOffDiag(0.3), None).unwrap();
            let pair = assemble_p2(&m, &f, &q).unwrap();
            for _ in 0..5 {
                let u = random_field(&m, &mut rng);
                let e = energy(&m, &f, &u, 2.0, &q).unwrap();
                assert!((e - quad_form(&pair.stiffness, &u.values)).abs() < 1e-12 * e);
                let (mass, _) = p_mass(&m, &u, 2.0, &q).unwrap();
                assert!((mass - quad_form(&pair.mass, &u.values)).abs() < 1e-12 * mass);
                let g = energy_gradient(&m, &f, &u, 2.0, &q).unwrap();
                let mut ku = vec![0.0; u.values.len()];
                csr_mul(&pair.stiffness, &u.values, &mut ku);
                let scale = ku.iter().fold(0.0f64, |a, b| a.max(b.abs()));
                for (gi, ki) in g.values.iter().zip(&ku) {
                    assert!((gi - 2.0 * ki).abs() < 1e-12 * scale);
                }
            }
        }
    }

    #[test]
    fn assembled_matrices_are_symmetric() {
        let m = small_mesh(BoundaryKind::Mixed);
        let f = make_coefficients(&CoefficientFamily::LinearOffDiag(0.8), None).unwrap();
        let pair = assemble_p2(&m, &f, &QuadratureRule::default()).unwrap();
        for mat in [&pair.stiffness, &pair.mass] {
            let dense = mat.to_dense();
            let asym = (&dense - &dense.t())
                .iter()
                .fold(0.0f64, |a, b| a.max(b.abs()));
            assert!(asym < 1e-14);
        }
        let mass = nalgebra::DMatrix::from_fn(pair.mass.rows(), pair.mass.cols(), |r, c| {
            *pair.mass.get(r, c).unwrap_or(&0.0)
        });
        assert!(mass.cholesky().is_some());
    }

    #[test]
    fn ellipticity_transfers_to_energy() {
        let m = small_mesh(BoundaryKind::Mixed);
        let q = QuadratureRule::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for fam in [
            CoefficientFamily::ConstantOffDiag(0.3),
            CoefficientFamily::LinearOffDiag(0.8),
        ] {
            let f = make_coefficients(&fam, None).unwrap();
            for p in [2.0, 3.0] {
                let u = random_field(&m, &mut rng);
                let e = energy(&m, &f, &u, p, &q).unwrap();
                let plain = gradient_p_norm(&m, &u, p).unwrap();
                assert!(e >= f.lambda_margin().powf(p / 2.0) * plain * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn foreign_field_is_rejected() {
        let a = small_mesh(BoundaryKind::Mixed);
        let b = small_mesh(BoundaryKind::DirichletAll);
        let f = make_coefficients(&CoefficientFamily::Identity, None).unwrap();
        let u = DiscreteField::zeros(&b);
        assert!(matches!(
            energy(&a, &f, &u, 2.0, &QuadratureRule::default()),
            Err(Error::Dimension { .. })
        ));
    }
}
