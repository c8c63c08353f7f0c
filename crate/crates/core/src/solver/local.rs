//! Closed-form local fits: rotations by Procrustes, unit vectors by
//! normalisation.

use rayon::prelude::*;

use crate::energies::{
    for_each_cell_edge, ArapMode, Mat3, TriangleRotationField, UnitVectorField, VertexRotationField,
};
use crate::mesh::{DeformState, TriMesh, Vec3};
use crate::operators::DiscreteOperators;

/// Result of a rotation fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationFit {
    pub rotation: Mat3,
    /// The covariance was zero (collapsed cell); `rotation` is the identity.
    pub degenerate: bool,
}

/// Rotation maximising `tr(Rᵀ C)` over SO(3).
pub fn rotation_from_covariance(cov: &Mat3) -> RotationFit {
    let norm = cov.norm();
    if norm == 0.0 || !norm.is_finite() {
        return RotationFit { rotation: Mat3::identity(), degenerate: true };
    }
    let svd = cov.svd(true, true);
    let (mut u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let smallest = svd.singular_values.imin();
        u.column_mut(smallest).neg_mut();
        r = u * v_t;
    }
    RotationFit { rotation: r, degenerate: false }
}

/// Best rotation of one triangle. Edges run `i → i+1`; `cots[i]` is the
/// cotangent of the corner opposite edge `i`.
pub fn fit_rotation(rest: &[Vec3; 3], deformed: &[Vec3; 3], cots: &[f64; 3]) -> RotationFit {
    let mut cov = Mat3::zeros();
    for i in 0..3 {
        let j = (i + 1) % 3;
        cov += cots[i] * (deformed[i] - deformed[j]) * (rest[i] - rest[j]).transpose();
    }
    rotation_from_covariance(&cov)
}

fn triangle_rotation(mesh: &TriMesh, ops: &DiscreteOperators, y: &[Vec3], f: usize) -> RotationFit {
    let [a, b, c] = mesh.faces()[f];
    let x = mesh.positions();
    fit_rotation(&[x[a], x[b], x[c]], &[y[a], y[b], y[c]], &ops.cotan.face(f))
}

/// Best rotation of the ARAP cell of `vertex`.
pub fn fit_vertex_rotation(
    vertex: usize,
    mesh: &TriMesh,
    ops: &DiscreteOperators,
    state: &DeformState,
    mode: ArapMode,
) -> RotationFit {
    let x = mesh.positions();
    let y = &state.positions;
    let mut cov = Mat3::zeros();
    for_each_cell_edge(mesh, ops, vertex, mode, |a, b, w| {
        cov += w * (y[a] - y[b]) * (x[a] - x[b]).transpose();
    });
    rotation_from_covariance(&cov)
}

pub fn fit_triangle_rotations(mesh: &TriMesh, ops: &DiscreteOperators, state: &DeformState) -> TriangleRotationField {
    TriangleRotationField(
        (0..mesh.face_count())
            .into_par_iter()
            .map(|f| triangle_rotation(mesh, ops, &state.positions, f).rotation)
            .collect(),
    )
}

pub fn fit_vertex_rotations(
    mesh: &TriMesh,
    ops: &DiscreteOperators,
    state: &DeformState,
    mode: ArapMode,
) -> VertexRotationField {
    VertexRotationField(
        (0..mesh.vertex_count())
            .into_par_iter()
            .map(|v| fit_vertex_rotation(v, mesh, ops, state, mode).rotation)
            .collect(),
    )
}

/// Norm below which a Laplacian is treated as zero.
pub fn unit_vector_threshold(ops: &DiscreteOperators) -> f64 {
    1e-12 / ops.diameter
}

/// Rest mean-curvature directions, `+z` where the rest Laplacian vanishes.
pub fn initial_unit_vectors(ops: &DiscreteOperators) -> UnitVectorField {
    let eps = unit_vector_threshold(ops);
    UnitVectorField(
        ops.rest_normals
            .iter()
            .map(|n| {
                let len = n.norm();
                if len > eps { n / len } else { Vec3::z() }
            })
            .collect(),
    )
}

/// Normalised `(M⁻¹ Lc x′)_v`, keeping `previous` where it vanishes.
pub fn update_unit_vectors(ops: &DiscreteOperators, state: &DeformState, previous: &UnitVectorField) -> UnitVectorField {
    let eps = unit_vector_threshold(ops);
    let lap = ops.laplacian(&state.positions);
    UnitVectorField(
        lap.par_iter()
            .zip(&previous.0)
            .map(|(l, prev)| {
                let len = l.norm();
                if len > eps { l / len } else { *prev }
            })
            .collect(),
    )
}
