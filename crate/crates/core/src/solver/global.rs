//! Global step: one constrained sparse solve for positions.
//!
//! For fixed local variables every energy here is a quadratic `xᵀAx − 2 rhsᵀx`
//! (up to a constant), so the minimiser solves `A x = rhs` with the
//! constrained rows and columns eliminated.

use rayon::prelude::*;

use crate::energies::{for_each_cell_edge, ArapMode, TriangleRotationField, UnitVectorField, VertexRotationField};
use crate::mesh::{ConstraintSet, TriMesh, Vec3};
use crate::operators::DiscreteOperators;
use crate::sparse::{Cholesky, CsrMatrix};

use super::SolveError;

/// Which quadratic the system matrix belongs to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SystemKind {
    Hybrid { lambda: f64 },
    Arap(ArapMode),
}

/// A factorization of the free block of the system matrix, valid for one
/// constraint index set.
#[derive(Debug, Clone)]
pub struct FactoredSystem {
    kind: SystemKind,
    constrained: Vec<usize>,
    free: Vec<usize>,
    a_fc: CsrMatrix,
    factor: Cholesky,
}

impl FactoredSystem {
    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn constrained(&self) -> &[usize] {
        &self.constrained
    }

    pub fn free_count(&self) -> usize {
        self.free.len()
    }

    /// Whether this factorization can serve `constraints` under `kind`.
    pub fn matches(&self, kind: SystemKind, constraints: &ConstraintSet) -> bool {
        self.kind == kind && constraints.indices() == self.constrained
    }
}

/// `A = 2λ Lc + (1 − λ) Lc P M⁻¹ Lc`, where `2 Lc` is the quadratic form of
/// the halfedge stretching sum and `P` masks boundary rows out of bending.
pub fn hybrid_matrix(ops: &DiscreteOperators, lambda: f64) -> CsrMatrix {
    if lambda == 1.0 {
        return ops.lc.linear_combination(2.0, &ops.lc, 0.0);
    }
    ops.lc.linear_combination(2.0 * lambda, &ops.bilaplacian(), 1.0 - lambda)
}

/// `Σ_cells Σ_edges w (e_a − e_b)(e_a − e_b)ᵀ`.
pub fn arap_matrix(mesh: &TriMesh, ops: &DiscreteOperators, mode: ArapMode) -> CsrMatrix {
    let mut triplets = Vec::new();
    for v in 0..mesh.vertex_count() {
        for_each_cell_edge(mesh, ops, v, mode, |a, b, w| {
            triplets.extend_from_slice(&[(a, a, w), (b, b, w), (a, b, -w), (b, a, -w)]);
        });
    }
    CsrMatrix::from_triplets(mesh.vertex_count(), mesh.vertex_count(), triplets)
}

pub fn system_matrix(mesh: &TriMesh, ops: &DiscreteOperators, kind: SystemKind) -> CsrMatrix {
    match kind {
        SystemKind::Hybrid { lambda } => hybrid_matrix(ops, lambda),
        SystemKind::Arap(mode) => arap_matrix(mesh, ops, mode),
    }
}

/// Eliminates the constrained vertices and factors the free block.
pub fn assemble_system(
    mesh: &TriMesh,
    ops: &DiscreteOperators,
    kind: SystemKind,
    constraints: &ConstraintSet,
) -> Result<FactoredSystem, SolveError> {
    if let SystemKind::Hybrid { lambda } = kind {
        crate::energies::check_lambda(lambda)?;
    }
    if constraints.is_empty() {
        return Err(SolveError::NoConstraints);
    }
    if let Some(max) = constraints.indices().last() {
        if *max >= mesh.vertex_count() {
            return Err(SolveError::ConstraintOutOfRange { vertex: *max, count: mesh.vertex_count() });
        }
    }
    let constrained = constraints.indices();
    let free: Vec<usize> = (0..mesh.vertex_count()).filter(|v| !constraints.contains(*v)).collect();
    let a = system_matrix(mesh, ops, kind);
    let factor = Cholesky::factor(&a.submatrix(&free, &free))?;
    Ok(FactoredSystem {
        kind,
        a_fc: a.submatrix(&free, &constrained),
        constrained,
        free,
        factor,
    })
}

/// Stretching right-hand side: for every halfedge `a → b` of face `t`,
/// `b_a += cot R_t (x_a − x_b)` and `b_b −= cot R_t (x_a − x_b)`.
pub fn stretch_rhs(mesh: &TriMesh, ops: &DiscreteOperators, rotations: &TriangleRotationField) -> Vec<Vec3> {
    let x = mesh.positions();
    let he = mesh.halfedges();
    let mut b = vec![Vec3::zeros(); mesh.vertex_count()];
    for (h, e) in he.iter().enumerate() {
        let r = ops.cotan.halfedge(h) * (rotations.0[e.face] * (x[e.from] - x[e.to]));
        b[e.from] += r;
        b[e.to] -= r;
    }
    b
}

/// `λ b + (1 − λ) Lc (|H| u′)`.
pub fn hybrid_rhs(
    mesh: &TriMesh,
    ops: &DiscreteOperators,
    rotations: &TriangleRotationField,
    units: &UnitVectorField,
    lambda: f64,
) -> Vec<Vec3> {
    let b = stretch_rhs(mesh, ops, rotations);
    if lambda == 1.0 {
        return b;
    }
    let bend = ops.bending_rhs(&units.0);
    b.par_iter().zip(&bend).map(|(s, t)| lambda * s + (1.0 - lambda) * t).collect()
}

pub fn arap_rhs(mesh: &TriMesh, ops: &DiscreteOperators, rotations: &VertexRotationField, mode: ArapMode) -> Vec<Vec3> {
    let x = mesh.positions();
    let mut b = vec![Vec3::zeros(); mesh.vertex_count()];
    for v in 0..mesh.vertex_count() {
        let r = &rotations.0[v];
        for_each_cell_edge(mesh, ops, v, mode, |a, c, w| {
            let t = w * (r * (x[a] - x[c]));
            b[a] += t;
            b[c] -= t;
        });
    }
    b
}

/// Solves `A x = rhs` with constrained entries of `x` held at their targets.
pub fn solve_constrained(
    sys: &FactoredSystem,
    rhs: &[Vec3],
    constraints: &ConstraintSet,
) -> Result<Vec<Vec3>, SolveError> {
    if constraints.indices() != sys.constrained {
        return Err(SolveError::StaleFactorization);
    }
    let targets: Vec<Vec3> = constraints.iter().map(|(_, p)| *p).collect();
    let coupling = sys.a_fc.mul_vec3(&targets);
    let mut free_rhs: Vec<Vec3> = sys.free.iter().zip(&coupling).map(|(&v, c)| rhs[v] - c).collect();
    sys.factor.solve_vec3(&mut free_rhs);
    let mut x = vec![Vec3::zeros(); rhs.len()];
    for (&v, p) in sys.free.iter().zip(&free_rhs) {
        x[v] = *p;
    }
    for (v, p) in constraints.iter() {
        x[v] = *p;
    }
    if let Some(v) = x.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(SolveError::NonFinite { vertex: v });
    }
    Ok(x)
}

/// Minimiser of the hybrid energy in `x′` for fixed rotations and unit
/// vectors.
pub fn global_step(
    sys: &FactoredSystem,
    mesh: &TriMesh,
    ops: &DiscreteOperators,
    rotations: &TriangleRotationField,
    units: &UnitVectorField,
    lambda: f64,
    constraints: &ConstraintSet,
) -> Result<Vec<Vec3>, SolveError> {
    if sys.kind != (SystemKind::Hybrid { lambda }) {
        return Err(SolveError::StaleFactorization);
    }
    solve_constrained(sys, &hybrid_rhs(mesh, ops, rotations, units, lambda), constraints)
}

/// Minimiser of the ARAP energy in `x′` for fixed vertex rotations.
pub fn arap_global_step(
    sys: &FactoredSystem,
    mesh: &TriMesh,
    ops: &DiscreteOperators,
    rotations: &VertexRotationField,
    mode: ArapMode,
    constraints: &ConstraintSet,
) -> Result<Vec<Vec3>, SolveError> {
    if sys.kind != SystemKind::Arap(mode) {
        return Err(SolveError::StaleFactorization);
    }
    solve_constrained(sys, &arap_rhs(mesh, ops, rotations, mode), constraints)
}

/// Gradient of the hybrid energy in `x′`: `2 (A x′ − rhs)`.
pub fn hybrid_gradient(
    mesh: &TriMesh,
    ops: &DiscreteOperators,
    positions: &[Vec3],
    rotations: &TriangleRotationField,
    units: &UnitVectorField,
    lambda: f64,
) -> Vec<Vec3> {
    let ax = hybrid_matrix(ops, lambda).mul_vec3(positions);
    let rhs = hybrid_rhs(mesh, ops, rotations, units, lambda);
    ax.iter().zip(&rhs).map(|(a, r)| 2.0 * (a - r)).collect()
}

/// Gradient of the ARAP energy in `x′` for fixed rotations.
pub fn arap_gradient(
    mesh: &TriMesh,
    ops: &DiscreteOperators,
    positions: &[Vec3],
    rotations: &VertexRotationField,
    mode: ArapMode,
) -> Vec<Vec3> {
    let ax = arap_matrix(mesh, ops, mode).mul_vec3(positions);
    let rhs = arap_rhs(mesh, ops, rotations, mode);
    ax.iter().zip(&rhs).map(|(a, r)| 2.0 * (a - r)).collect()
}
