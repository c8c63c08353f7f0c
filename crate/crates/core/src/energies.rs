//! Deformation energies of a deformed state against the rest surface.
//!
//! Every evaluator takes its local variables explicitly; the `optimal_*`
//! helpers fit them first. Sums run over fixed index order so results are
//! reproducible regardless of the thread pool size.

use nalgebra::{Matrix2, Matrix3, Matrix3x2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{DeformState, HalfEdge, TriMesh, Vec3};
use crate::operators::DiscreteOperators;
use crate::solver::local;

pub type Mat3 = Matrix3<f64>;

/// Ratio between the halfedge cotan sum of a triangle and twice its area
/// integral: `Σ_he cot |Δf|² = 2 ∫ |∇f|²` for any linear `f`.
pub const SINGULAR_VALUE_SCALE: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("lambda must lie in [0, 1], got {0}")]
    LambdaOutOfRange(f64),
    #[error("{what} has {found} entries, expected {expected}")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
}

/// One rotation per face.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleRotationField(pub Vec<Mat3>);

/// One rotation per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexRotationField(pub Vec<Mat3>);

/// One unit vector per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVectorField(pub Vec<Vec3>);

impl TriangleRotationField {
    pub fn identity(faces: usize) -> Self {
        TriangleRotationField(vec![Mat3::identity(); faces])
    }
}

impl VertexRotationField {
    pub fn identity(vertices: usize) -> Self {
        VertexRotationField(vec![Mat3::identity(); vertices])
    }
}

/// Which edges a vertex rotation is fitted over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArapMode {
    /// Edges from the vertex to its one-ring.
    Spoke,
    /// Every edge of every incident triangle.
    SpokeRim,
}

impl std::str::FromStr for ArapMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "spoke" => Ok(ArapMode::Spoke),
            "spoke-rim" => Ok(ArapMode::SpokeRim),
            other => Err(format!("unknown ARAP mode {other:?} (spoke|spoke-rim)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub stretch: f64,
    pub bend: f64,
    pub total: f64,
    pub lambda: f64,
}

impl EnergyBreakdown {
    pub fn new(stretch: f64, bend: f64, lambda: f64) -> Result<Self, EnergyError> {
        check_lambda(lambda)?;
        Ok(EnergyBreakdown {
            stretch,
            bend,
            total: lambda * stretch + (1.0 - lambda) * bend,
            lambda,
        })
    }

    /// A pure stretching energy (ARAP baselines), reported with `λ = 1`.
    pub fn stretch_only(stretch: f64) -> Self {
        EnergyBreakdown { stretch, bend: 0.0, total: stretch, lambda: 1.0 }
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<(), EnergyError> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(EnergyError::LambdaOutOfRange(lambda))
    }
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<(), EnergyError> {
    if expected == found {
        Ok(())
    } else {
        Err(EnergyError::SizeMismatch { what, expected, found })
    }
}

fn edge_residual(x: &[Vec3], y: &[Vec3], r: &Mat3, a: usize, b: usize) -> Vec3 {
    (y[a] - y[b]) - r * (x[a] - x[b])
}

/// Triangle stretching energy: `Σ_he cot ‖(x′_a − x′_b) − R_t (x_a − x_b)‖²`.
pub fn stretch_energy(
    mesh: &TriMesh,
    ops: &DiscreteOperators,
    state: &DeformState,
    rotations: &TriangleRotationField,
) -> Result<f64, EnergyError> {
    check_len("state", mesh.vertex_count(), state.len())?;
    check_len("rotation field", mesh.face_count(), rotations.0.len())?;
    let x = mesh.positions();
    let y = &state.positions;
    let he = mesh.halfedges();
    let per_face: Vec<f64> = (0..mesh.face_count())
        .into_par_iter()
        .map(|f| {
            (3 * f..3 * f + 3)
                .map(|h| {
                    let r = edge_residual(x, y, &rotations.0[f], he[h].from, he[h].to);
                    ops.cotan.halfedge(h) * r.norm_squared()
                })
                .sum::<f64>()
        })
        .collect();
    Ok(per_face.iter().sum())
}

/// Visits the weighted edges `(a, b, weight)` of the ARAP cell of `v`.
///
/// Weights are full edge weights `cot a_ab + cot a_ba` (a single cotangent on
/// boundary edges). Each undirected edge is visited once per cell.
pub fn for_each_cell_edge(
    mesh: &TriMesh,
    ops: &DiscreteOperators,
    v: usize,
    mode: ArapMode,
    mut visit: impl FnMut(usize, usize, f64),
) {
    let he = mesh.halfedges();
    for &h in mesh.outgoing(v) {
        match mode {
            ArapMode::Spoke => {
                visit(v, he[h].to, ops.cotan.edge(mesh, h));
                // A boundary edge ending at v has no outgoing twin.
                let p = HalfEdge::prev(h);
                if he[p].twin.is_none() {
                    visit(v, he[p].from, ops.cotan.halfedge(p));
                }
            }
            ArapMode::SpokeRim => {
                let f = he[h].face;
                for g in 3 * f..3 * f + 3 {
                    let shared = he[g].twin.is_some_and(|t| {
                        mesh.faces()[he[t].face].contains(&v)
                    });
                    if !shared || he[g].from < he[g].to {
                        visit(he[g].from, he[g].to, ops.cotan.edge(mesh, g));
                    }
                }
            }
        }
    }
}

/// ARAP energy with one rotation per vertex over the chosen cells.
pub fn arap_energy(
    mesh: &TriMesh,
    ops: &DiscreteOperators,
    state: &DeformState,
    rotations: &VertexRotationField,
    mode: ArapMode,
) -> Result<f64, EnergyError> {
    check_len("state", mesh.vertex_count(), state.len())?;
    check_len("rotation field", mesh.vertex_count(), rotations.0.len())?;
    let x = mesh.positions();
    let y = &state.positions;
    let per_vertex: Vec<f64> = (0..mesh.vertex_count())
        .into_par_iter()
        .map(|v| {
            let mut e = 0.0;
            for_each_cell_edge(mesh, ops, v, mode, |a, b, w| {
                e += w * edge_residual(x, y, &rotations.0[v], a, b).norm_squared();
            });
            e
        })
        .collect();
    Ok(per_vertex.iter().sum())
}

/// Spoke ARAP energy over one-ring edges.
pub fn arap_spoke_energy(
    mesh: &TriMesh,
    ops: &DiscreteOperators,
    state: &DeformState,
    rotations: &VertexRotationField,
) -> Result<f64, EnergyError> {
    arap_energy(mesh, ops, state, rotations, ArapMode::Spoke)
}

/// Spoke-rim ARAP energy over every edge of the incident triangles.
pub fn arap_spoke_rim_energy(
    mesh: &TriMesh,
    ops: &DiscreteOperators,
    state: &DeformState,
    rotations: &VertexRotationField,
) -> Result<f64, EnergyError> {
    arap_energy(mesh, ops, state, rotations, ArapMode::SpokeRim)
}

/// Bending energy `Σ_v M_v ‖(M⁻¹ Lc x′)_v − |H_v| u′_v‖²` over interior
/// vertices.
pub fn bending_energy(
    mesh: &TriMesh,
    ops: &DiscreteOperators,
    state: &DeformState,
    units: &UnitVectorField,
) -> Result<f64, EnergyError> {
    check_len("state", mesh.vertex_count(), state.len())?;
    check_len("unit vector field", mesh.vertex_count(), units.0.len())?;
    let lap = ops.laplacian(&state.positions);
    let terms: Vec<f64> = (0..mesh.vertex_count())
        .into_par_iter()
        .map(|v| {
            if !ops.interior[v] {
                return 0.0;
            }
            ops.mass[v] * (lap[v] - units.0[v] * ops.curvature[v]).norm_squared()
        })
        .collect();
    Ok(terms.iter().sum())
}

/// `λ E_s + (1 − λ) E_db` with both parts reported.
pub fn hybrid_energy(
    mesh: &TriMesh,
    ops: &DiscreteOperators,
    state: &DeformState,
    rotations: &TriangleRotationField,
    units: &UnitVectorField,
    lambda: f64,
) -> Result<EnergyBreakdown, EnergyError> {
    check_lambda(lambda)?;
    let stretch = stretch_energy(mesh, ops, state, rotations)?;
    let bend = bending_energy(mesh, ops, state, units)?;
    EnergyBreakdown::new(stretch, bend, lambda)
}

/// Per-triangle stretching measured through the singular values of the
/// deformation differential:
/// `Σ_t c A_t [(σ₁ − 1)² + (σ₂ − 1)²]` with `c = SINGULAR_VALUE_SCALE`.
pub fn singular_value_stretch(mesh: &TriMesh, state: &DeformState) -> Result<f64, EnergyError> {
    check_len("state", mesh.vertex_count(), state.len())?;
    let terms: Vec<f64> = (0..mesh.face_count())
        .into_par_iter()
        .map(|f| {
            let [s1, s2] = face_singular_values(mesh, state, f);
            SINGULAR_VALUE_SCALE * mesh.face_area(f) * ((s1 - 1.0).powi(2) + (s2 - 1.0).powi(2))
        })
        .collect();
    Ok(terms.iter().sum())
}

/// Singular values of the linear map taking the rest triangle `f` (in an
/// orthonormal frame of its plane) to its deformed image.
pub fn face_singular_values(mesh: &TriMesh, state: &DeformState, f: usize) -> [f64; 2] {
    let [i, j, k] = mesh.faces()[f];
    let x = mesh.positions();
    let y = &state.positions;
    let e1 = x[j] - x[i];
    let e2 = x[k] - x[i];
    let t1 = e1.normalize();
    let t2 = (e2 - t1 * t1.dot(&e2)).normalize();
    let rest = Matrix2::new(e1.dot(&t1), e2.dot(&t1), e1.dot(&t2), e2.dot(&t2));
    let deformed = Matrix3x2::from_columns(&[y[j] - y[i], y[k] - y[i]]);
    let inv = rest.try_inverse().unwrap_or_else(Matrix2::zeros);
    let sv = (deformed * inv).singular_values();
    [sv[0], sv[1]]
}

/// Stretching energy with per-triangle optimal rotations.
pub fn optimal_stretch_energy(mesh: &TriMesh, ops: &DiscreteOperators, state: &DeformState) -> Result<f64, EnergyError> {
    check_len("state", mesh.vertex_count(), state.len())?;
    let rots = local::fit_triangle_rotations(mesh, ops, state);
    stretch_energy(mesh, ops, state, &rots)
}

/// ARAP energy with per-vertex optimal rotations.
pub fn optimal_arap_energy(
    mesh: &TriMesh,
    ops: &DiscreteOperators,
    state: &DeformState,
    mode: ArapMode,
) -> Result<f64, EnergyError> {
    check_len("state", mesh.vertex_count(), state.len())?;
    let rots = local::fit_vertex_rotations(mesh, ops, state, mode);
    arap_energy(mesh, ops, state, &rots, mode)
}

/// Bending energy with optimal unit vectors, `Σ M_v (‖L x′_v‖ − |H_v|)²`.
pub fn optimal_bending_energy(mesh: &TriMesh, ops: &DiscreteOperators, state: &DeformState) -> Result<f64, EnergyError> {
    check_len("state", mesh.vertex_count(), state.len())?;
    let units = local::update_unit_vectors(ops, state, &local::initial_unit_vectors(ops));
    bending_energy(mesh, ops, state, &units)
}

/// Hybrid energy with every local variable fitted.
pub fn optimal_hybrid_energy(
    mesh: &TriMesh,
    ops: &DiscreteOperators,
    state: &DeformState,
    lambda: f64,
) -> Result<EnergyBreakdown, EnergyError> {
    check_lambda(lambda)?;
    EnergyBreakdown::new(
        optimal_stretch_energy(mesh, ops, state)?,
        optimal_bending_energy(mesh, ops, state)?,
        lambda,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_fold, generate_grid, generate_icosphere};
    use nalgebra::{Rotation3, Unit};

    fn rigid(mesh: &TriMesh, q: &Mat3, t: Vec3) -> DeformState {
        DeformState {
            positions: mesh.positions().iter().map(|p| q * p + t).collect(),
        }
    }

    fn some_rotation() -> Mat3 {
        Rotation3::from_axis_angle(&Unit::new_normalize(Vec3::new(0.3, -1.0, 0.4)), 1.1).into_inner()
    }

    #[test]
    fn rest_state_energies_vanish() {
        let m = generate_icosphere(1, 1.0).unwrap();
        let ops = DiscreteOperators::new(&m).unwrap();
        let rest = m.rest_state();
        let id_t = TriangleRotationField::identity(m.face_count());
        let id_v = VertexRotationField::identity(m.vertex_count());
        assert_eq!(stretch_energy(&m, &ops, &rest, &id_t).unwrap(), 0.0);
        assert_eq!(arap_spoke_energy(&m, &ops, &rest, &id_v).unwrap(), 0.0);
        assert_eq!(arap_spoke_rim_energy(&m, &ops, &rest, &id_v).unwrap(), 0.0);
        let units = local::initial_unit_vectors(&ops);
        assert!(bending_energy(&m, &ops, &rest, &units).unwrap() < 1e-10);
        let e = hybrid_energy(&m, &ops, &rest, &id_t, &units, 0.5).unwrap();
        assert!(e.total < 1e-10);
    }

    #[test]
    fn rigid_motion_with_its_rotation_is_free() {
        let m = generate_grid(4, 1.0).unwrap();
        let ops = DiscreteOperators::new(&m).unwrap();
        let q = some_rotation();
        let moved = rigid(&m, &q, Vec3::new(1.0, 2.0, -3.0));
        let rt = TriangleRotationField(vec![q; m.face_count()]);
        let rv = VertexRotationField(vec![q; m.vertex_count()]);
        assert!(stretch_energy(&m, &ops, &moved, &rt).unwrap() < 1e-24);
        assert!(arap_spoke_energy(&m, &ops, &moved, &rv).unwrap() < 1e-24);
        assert!(arap_spoke_rim_energy(&m, &ops, &moved, &rv).unwrap() < 1e-24);
    }

    #[test]
    fn lambda_endpoints() {
        let m = generate_icosphere(1, 1.0).unwrap();
        let ops = DiscreteOperators::new(&m).unwrap();
        let mut s = m.rest_state();
        s.positions[0] *= 1.2;
        let rots = TriangleRotationField::identity(m.face_count());
        let units = local::initial_unit_vectors(&ops);
        let one = hybrid_energy(&m, &ops, &s, &rots, &units, 1.0).unwrap();
        assert_eq!(one.total, stretch_energy(&m, &ops, &s, &rots).unwrap());
        let zero = hybrid_energy(&m, &ops, &s, &rots, &units, 0.0).unwrap();
        assert_eq!(zero.total, bending_energy(&m, &ops, &s, &units).unwrap());
        assert_eq!(
            hybrid_energy(&m, &ops, &s, &rots, &units, 1.5),
            Err(EnergyError::LambdaOutOfRange(1.5))
        );
    }

    #[test]
    fn mismatched_fields_rejected() {
        let m = generate_grid(2, 1.0).unwrap();
        let ops = DiscreteOperators::new(&m).unwrap();
        let rots = TriangleRotationField::identity(3);
        assert!(matches!(
            stretch_energy(&m, &ops, &m.rest_state(), &rots),
            Err(EnergyError::SizeMismatch { .. })
        ));
    }

    #[test]
    fn fold_has_no_stretch() {
        for (n, angle) in [(4, 1.0), (10, std::f64::consts::PI), (12, 0.3)] {
            let (m, s) = generate_fold(n, 1.0, angle).unwrap();
            let ops = DiscreteOperators::new(&m).unwrap();
            assert!(optimal_stretch_energy(&m, &ops, &s).unwrap() < 1e-10);
            assert!(singular_value_stretch(&m, &s).unwrap() < 1e-10);
        }
    }

    #[test]
    fn uniform_scale_singular_values() {
        let m = generate_grid(3, 2.0).unwrap();
        let s = 1.7;
        let state = DeformState { positions: m.positions().iter().map(|p| p * s).collect() };
        let expected = SINGULAR_VALUE_SCALE * m.surface_area() * 2.0 * (s - 1.0f64).powi(2);
        let got = singular_value_stretch(&m, &state).unwrap();
        assert!((got - expected).abs() < 1e-12 * expected);
        let ops = DiscreteOperators::new(&m).unwrap();
        let fitted = optimal_stretch_energy(&m, &ops, &state).unwrap();
        assert!((fitted - expected).abs() < 1e-10 * expected);
    }

    #[test]
    fn each_cell_edge_visited_once() {
        let m = generate_grid(3, 1.0).unwrap();
        let ops = DiscreteOperators::new(&m).unwrap();
        for v in 0..m.vertex_count() {
            for mode in [ArapMode::Spoke, ArapMode::SpokeRim] {
                let mut seen = Vec::new();
                for_each_cell_edge(&m, &ops, v, mode, |a, b, _| seen.push((a.min(b), a.max(b))));
                let count = seen.len();
                seen.sort_unstable();
                seen.dedup();
                assert_eq!(seen.len(), count, "vertex {v} {mode:?}");
                if mode == ArapMode::Spoke {
                    assert_eq!(count, m.neighbors(v).len());
                }
            }
        }
    }

    #[test]
    fn spoke_rim_cell_of_interior_grid_vertex() {
        // Six incident triangles: six spokes plus six rim edges.
        let m = generate_grid(4, 1.0).unwrap();
        let ops = DiscreteOperators::new(&m).unwrap();
        let mut count = 0;
        for_each_cell_edge(&m, &ops, 2 * 5 + 2, ArapMode::SpokeRim, |_, _, _| count += 1);
        assert_eq!(count, 12);
    }
}
