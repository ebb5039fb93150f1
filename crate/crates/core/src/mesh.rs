//! Tensor-product quadrilateral meshes of full and half cylinders over the
//! cross-section `(-1/2, 1/2)`.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use crate::coeffs::CoefficientField;
use crate::discretization::{cell_integrals, DiscreteField, QuadratureRule};
use crate::error::{check_exponent, Error, Result};

pub const X2_MIN: f64 = -0.5;
pub const X2_MAX: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Shape {
    /// `(-ell, ell) x omega`
    FullCylinder,
    /// `(0, ell) x omega`
    HalfPlus,
    /// `(-ell, 0) x omega`
    HalfMinus,
    /// `omega` alone; solved by the 1D cross-section solver, never meshed here
    CrossSection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryKind {
    /// Dirichlet on the lateral boundary, natural on both ends.
    Mixed,
    /// Dirichlet on the whole boundary.
    DirichletAll,
    /// Dirichlet on the lateral boundary and the far end, natural at `x1 = 0`.
    HalfCylinder,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DomainSpec {
    pub shape: Shape,
    pub ell: f64,
    pub bc: BoundaryKind,
    pub cells_per_unit: usize,
    pub nx2: usize,
}

impl DomainSpec {
    pub fn full(ell: f64, bc: BoundaryKind, cells_per_unit: usize, nx2: usize) -> Self {
        DomainSpec {
            shape: Shape::FullCylinder,
            ell,
            bc,
            cells_per_unit,
            nx2,
        }
    }

    pub fn half(shape: Shape, ell: f64, cells_per_unit: usize, nx2: usize) -> Self {
        DomainSpec {
            shape,
            ell,
            bc: BoundaryKind::HalfCylinder,
            cells_per_unit,
            nx2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bc_ok = match self.shape {
            Shape::FullCylinder => {
                matches!(self.bc, BoundaryKind::Mixed | BoundaryKind::DirichletAll)
            }
            Shape::HalfPlus | Shape::HalfMinus => self.bc == BoundaryKind::HalfCylinder,
            Shape::CrossSection => false,
        };
        if !bc_ok {
            return Err(Error::Config(format!(
                "boundary condition {:?} cannot be used with shape {:?}",
                self.bc, self.shape
            )));
        }
        if !(self.ell > 0.0 && self.ell.is_finite()) {
            return Err(Error::Config(format!(
                "ell must be positive, got {}",
                self.ell
            )));
        }
        if self.cells_per_unit < 2 {
            return Err(Error::Config("cells_per_unit must be at least 2".into()));
        }
        if self.nx2 < 4 {
            return Err(Error::Config("nx2 must be at least 4".into()));
        }
        Ok(())
    }

    fn axial_extent(&self) -> (f64, f64) {
        match self.shape {
            Shape::FullCylinder => (-self.ell, self.ell),
            Shape::HalfPlus => (0.0, self.ell),
            Shape::HalfMinus => (-self.ell, 0.0),
            Shape::CrossSection => (0.0, 0.0),
        }
    }

    fn id(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.shape.hash(&mut h);
        self.ell.to_bits().hash(&mut h);
        self.bc.hash(&mut h);
        self.cells_per_unit.hash(&mut h);
        self.nx2.hash(&mut h);
        h.finish()
    }
}

/// Structured Q1 mesh. Node `(i, j)` sits at `(x1_min + i*h1, -1/2 + j*h2)`
/// and has global index `i * (n2 + 1) + j`.
#[derive(Clone, Debug)]
pub struct CylinderMesh {
    spec: DomainSpec,
    id: u64,
    x1_min: f64,
    x1_max: f64,
    n1: usize,
    n2: usize,
    h1: f64,
    h2: f64,
    dirichlet_mask: Vec<bool>,
    free_dof_map: Vec<Option<usize>>,
    dof_nodes: Vec<usize>,
    slab_edges: Vec<f64>,
}

pub fn build_mesh(spec: DomainSpec) -> Result<CylinderMesh> {
    spec.validate()?;
    let (x1_min, x1_max) = spec.axial_extent();
    let length = x1_max - x1_min;
    let exact = spec.cells_per_unit as f64 * length;
    let n1 = exact.round() as usize;
    if n1 == 0 || (exact - n1 as f64).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "axial length {length} is not a multiple of the cell size 1/{}",
            spec.cells_per_unit
        )));
    }
    let n2 = spec.nx2;
    let nodes = (n1 + 1) * (n2 + 1);
    let mut dirichlet_mask = vec![false; nodes];
    for i in 0..=n1 {
        for j in 0..=n2 {
            let lateral = j == 0 || j == n2;
            let masked = match spec.bc {
                BoundaryKind::Mixed => lateral,
                BoundaryKind::DirichletAll => lateral || i == 0 || i == n1,
                BoundaryKind::HalfCylinder => match spec.shape {
                    Shape::HalfPlus => lateral || i == n1,
                    _ => lateral || i == 0,
                },
            };
            dirichlet_mask[i * (n2 + 1) + j] = masked;
        }
    }
    let mut free_dof_map = vec![None; nodes];
    let mut dof_nodes = Vec::with_capacity(nodes);
    for (node, masked) in dirichlet_mask.iter().enumerate() {
        if !masked {
            free_dof_map[node] = Some(dof_nodes.len());
            dof_nodes.push(node);
        }
    }
    Ok(CylinderMesh {
        spec,
        id: spec.id(),
        x1_min,
        x1_max,
        n1,
        n2,
        h1: length / n1 as f64,
        h2: (X2_MAX - X2_MIN) / n2 as f64,
        dirichlet_mask,
        free_dof_map,
        dof_nodes,
        slab_edges: slab_edges(x1_min, x1_max),
    })
}

/// Unit-spaced breakpoints anchored at both ends, meeting at the midpoint.
fn slab_edges(lo: f64, hi: f64) -> Vec<f64> {
    let mid = 0.5 * (lo + hi);
    let mut edges = Vec::new();
    let mut k = 0.0;
    while lo + k < mid - 1e-9 {
        edges.push(lo + k);
        k += 1.0;
    }
    edges.push(mid);
    let mut right = Vec::new();
    let mut k = 0.0;
    while hi - k > mid + 1e-9 {
        right.push(hi - k);
        k += 1.0;
    }
    edges.extend(right.into_iter().rev());
    edges
}

impl CylinderMesh {
    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn x1_range(&self) -> (f64, f64) {
        (self.x1_min, self.x1_max)
    }

    /// Number of axial cells.
    pub fn n1(&self) -> usize {
        self.n1
    }

    /// Number of cross-section cells.
    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn h1(&self) -> f64 {
        self.h1
    }

    pub fn h2(&self) -> f64 {
        self.h2
    }

    pub fn node_count(&self) -> usize {
        (self.n1 + 1) * (self.n2 + 1)
    }

    pub fn free_dofs(&self) -> usize {
        self.dof_nodes.len()
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        i * (self.n2 + 1) + j
    }

    #[inline]
    pub fn x1(&self, i: usize) -> f64 {
        if i == self.n1 {
            self.x1_max
        } else {
            self.x1_min + i as f64 * self.h1
        }
    }

    #[inline]
    pub fn x2(&self, j: usize) -> f64 {
        if j == self.n2 {
            X2_MAX
        } else {
            X2_MIN + j as f64 * self.h2
        }
    }

    pub fn node_coords(&self, node: usize) -> (f64, f64) {
        let (i, j) = (node / (self.n2 + 1), node % (self.n2 + 1));
        (self.x1(i), self.x2(j))
    }

    /// Corner nodes of cell `(i, j)` in the order
    /// `(i, j), (i+1, j), (i, j+1), (i+1, j+1)`.
    #[inline]
    pub fn cell_nodes(&self, i: usize, j: usize) -> [usize; 4] {
        let a = self.node_index(i, j);
        let b = self.node_index(i + 1, j);
        [a, b, a + 1, b + 1]
    }

    pub fn cells(&self) -> impl Iterator<Item = [usize; 4]> + '_ {
        (0..self.n1).flat_map(move |i| (0..self.n2).map(move |j| self.cell_nodes(i, j)))
    }

    pub fn dirichlet_mask(&self) -> &[bool] {
        &self.dirichlet_mask
    }

    pub fn free_dof_map(&self) -> &[Option<usize>] {
        &self.free_dof_map
    }

    /// Node index of every free DOF, in DOF order.
    pub fn dof_nodes(&self) -> &[usize] {
        &self.dof_nodes
    }

    pub fn slab_edges(&self) -> &[f64] {
        &self.slab_edges
    }

    /// Slab containing the axial cell `i` (by cell midpoint).
    pub fn slab_of_cell(&self, i: usize) -> usize {
        let xc = self.x1_min + (i as f64 + 0.5) * self.h1;
        let k = self.slab_edges.partition_point(|&e| e <= xc);
        k.clamp(1, self.slab_edges.len() - 1) - 1
    }

    /// Cross-resolution and axial spacing agree.
    pub fn grid_compatible(&self, other: &CylinderMesh) -> bool {
        self.n2 == other.n2 && (self.h1 - other.h1).abs() <= 1e-12 * self.h1
    }
}

/// Integrals over one unit slab.
#[derive(Clone, Debug, PartialEq)]
pub struct SlabRecord {
    /// Position from the left end (0 = leftmost slab).
    pub index: usize,
    pub x1_left: f64,
    pub x1_right: f64,
    /// `∫ |∇u|^p`
    pub grad_energy: f64,
    /// `∫ |A∇u·∇u|^{p/2}`
    pub energy: f64,
    /// `∫ |u|^p`
    pub p_mass: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlabProfile {
    pub records: Vec<SlabRecord>,
}

impl SlabProfile {
    pub fn total_p_mass(&self) -> f64 {
        self.records.iter().map(|r| r.p_mass).sum()
    }

    pub fn total_energy(&self) -> f64 {
        self.records.iter().map(|r| r.energy).sum()
    }
}

/// Per-slab `∫|∇u|^p`, `∫|A∇u·∇u|^{p/2}` and `∫|u|^p` of a discrete field.
pub fn slab_integrals(
    mesh: &CylinderMesh,
    coeffs: &CoefficientField,
    u: &DiscreteField,
    p: f64,
) -> Result<SlabProfile> {
    u.check_mesh(mesh)?;
    slab_integrals_nodal(mesh, coeffs, &u.expand(mesh), p)
}

/// As [`slab_integrals`] but for an arbitrary nodal vector (no Dirichlet
/// mask applied).
pub fn slab_integrals_nodal(
    mesh: &CylinderMesh,
    coeffs: &CoefficientField,
    nodal: &[f64],
    p: f64,
) -> Result<SlabProfile> {
    check_exponent(p)?;
    if nodal.len() != mesh.node_count() {
        return Err(Error::Dimension {
            expected: mesh.node_count(),
            actual: nodal.len(),
        });
    }
    let edges = mesh.slab_edges();
    let mut records: Vec<SlabRecord> = edges
        .windows(2)
        .enumerate()
        .map(|(index, w)| SlabRecord {
            index,
            x1_left: w[0],
            x1_right: w[1],
            grad_energy: 0.0,
            energy: 0.0,
            p_mass: 0.0,
        })
        .collect();
    let quad = QuadratureRule::default();
    let cells = cell_integrals(mesh, coeffs, nodal, p, &quad);
    for i in 0..mesh.n1() {
        let rec = &mut records[mesh.slab_of_cell(i)];
        for j in 0..mesh.n2() {
            let c = &cells[i * mesh.n2() + j];
            rec.grad_energy += c.grad_p;
            rec.energy += c.energy;
            rec.p_mass += c.p_mass;
        }
    }
    Ok(SlabProfile { records })
}
