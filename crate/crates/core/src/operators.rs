//! Discrete differential operators of the rest surface.
//!
//! The cotan matrix follows the usual half-weight convention,
//! `Lc[v][w] = -½ (cot a_vw + cot a_wv)`, so `M⁻¹ Lc x` approximates the
//! mean-curvature normal `2H n` (magnitude 2 on the unit sphere). The
//! stretching terms use the full per-halfedge cotangents, which sum to
//! `2 Lc`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{TriMesh, Vec3};
use crate::sparse::CsrMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("face {face} is degenerate: non-finite cotangent at corner {corner}")]
    DegenerateFace { face: usize, corner: usize },
}

/// How per-vertex area is lumped onto the diagonal mass matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MassKind {
    /// One third of every incident triangle.
    #[default]
    Barycentric,
    /// Voronoi areas with the obtuse-triangle fallback.
    MixedVoronoi,
}

impl std::str::FromStr for MassKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "barycentric" => Ok(MassKind::Barycentric),
            "mixed-voronoi" => Ok(MassKind::MixedVoronoi),
            other => Err(format!("unknown mass kind {other:?} (barycentric|mixed-voronoi)")),
        }
    }
}

/// Cotangent of the corner opposite each halfedge, indexed like
/// [`TriMesh::halfedges`].
#[derive(Debug, Clone, PartialEq)]
pub struct CotanWeights(Vec<f64>);

impl CotanWeights {
    pub fn new(mesh: &TriMesh) -> Result<Self, OperatorError> {
        let p = mesh.positions();
        let mut cots = Vec::with_capacity(3 * mesh.face_count());
        for (f, tri) in mesh.faces().iter().enumerate() {
            for k in 0..3 {
                let corner = tri[(k + 2) % 3];
                let c = corner_cot(p[tri[k]], p[tri[(k + 1) % 3]], p[corner]);
                if !c.is_finite() {
                    return Err(OperatorError::DegenerateFace { face: f, corner: (k + 2) % 3 });
                }
                cots.push(c);
            }
        }
        Ok(CotanWeights(cots))
    }

    pub fn halfedge(&self, h: usize) -> f64 {
        self.0[h]
    }

    /// Cotangents of the three corners of face `f`, ordered by the halfedge
    /// they face: `[cot at corner 2, cot at corner 0, cot at corner 1]`.
    pub fn face(&self, f: usize) -> [f64; 3] {
        [self.0[3 * f], self.0[3 * f + 1], self.0[3 * f + 2]]
    }

    /// `cot a_vw + cot a_wv` for the edge of halfedge `h`; boundary edges
    /// carry a single cotangent.
    pub fn edge(&self, mesh: &TriMesh, h: usize) -> f64 {
        self.0[h] + mesh.halfedges()[h].twin.map_or(0.0, |t| self.0[t])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Cotangent of the angle at `corner` in the triangle `(a, b, corner)`.
pub fn corner_cot(a: Vec3, b: Vec3, corner: Vec3) -> f64 {
    let u = a - corner;
    let v = b - corner;
    u.dot(&v) / u.cross(&v).norm()
}

/// Symmetric cotan matrix with zero row sums.
pub fn build_cotan_matrix(mesh: &TriMesh) -> Result<CsrMatrix, OperatorError> {
    let cots = CotanWeights::new(mesh)?;
    Ok(cotan_matrix_from(mesh, &cots))
}

fn cotan_matrix_from(mesh: &TriMesh, cots: &CotanWeights) -> CsrMatrix {
    let mut triplets = Vec::with_capacity(4 * mesh.halfedges().len());
    for (h, he) in mesh.halfedges().iter().enumerate() {
        let w = 0.5 * cots.halfedge(h);
        triplets.push((he.from, he.to, -w));
        triplets.push((he.to, he.from, -w));
        triplets.push((he.from, he.from, w));
        triplets.push((he.to, he.to, w));
    }
    CsrMatrix::from_triplets(mesh.vertex_count(), mesh.vertex_count(), triplets)
}

/// Diagonal of the lumped mass matrix.
pub fn build_mass_matrix(mesh: &TriMesh, kind: MassKind) -> Vec<f64> {
    let p = mesh.positions();
    let mut mass = vec![0.0; mesh.vertex_count()];
    for (f, tri) in mesh.faces().iter().enumerate() {
        let area = mesh.face_area(f);
        match kind {
            MassKind::Barycentric => {
                for &v in tri {
                    mass[v] += area / 3.0;
                }
            }
            MassKind::MixedVoronoi => {
                let corner = |k: usize| {
                    let (a, b, c) = (p[tri[k]], p[tri[(k + 1) % 3]], p[tri[(k + 2) % 3]]);
                    (b - a).dot(&(c - a))
                };
                if let Some(obtuse) = (0..3).find(|&k| corner(k) < 0.0) {
                    for k in 0..3 {
                        mass[tri[k]] += if k == obtuse { area / 2.0 } else { area / 4.0 };
                    }
                } else {
                    for k in 0..3 {
                        let (a, b, c) = (p[tri[k]], p[tri[(k + 1) % 3]], p[tri[(k + 2) % 3]]);
                        let cot_b = corner_cot(c, a, b);
                        let cot_c = corner_cot(a, b, c);
                        mass[tri[k]] += ((a - c).norm_squared() * cot_b
                            + (a - b).norm_squared() * cot_c)
                            / 8.0;
                    }
                }
            }
        }
    }
    mass
}

/// `‖(M⁻¹ Lc x)_v‖` on interior vertices; zero on the boundary.
pub fn mean_curvature_magnitudes(mesh: &TriMesh, ops: &DiscreteOperators) -> Vec<f64> {
    curvature_normals(&ops.lc, &ops.mass, mesh.positions())
        .iter()
        .enumerate()
        .map(|(v, n)| if mesh.is_boundary(v) { 0.0 } else { n.norm() })
        .collect()
}

fn curvature_normals(lc: &CsrMatrix, mass: &[f64], x: &[Vec3]) -> Vec<Vec3> {
    lc.mul_vec3(x)
        .into_iter()
        .zip(mass)
        .map(|(v, m)| v / *m)
        .collect()
}

/// Frozen geometry of the rest surface shared by every energy and solver.
#[derive(Debug, Clone)]
pub struct DiscreteOperators {
    pub cotan: CotanWeights,
    /// Symmetric cotan matrix (half-weight convention).
    pub lc: CsrMatrix,
    /// Diagonal of the lumped mass matrix.
    pub mass: Vec<f64>,
    /// Rest mean-curvature magnitudes `|H_v|`, zero on the boundary.
    pub curvature: Vec<f64>,
    /// Rest mean-curvature normals `(M⁻¹ Lc x)_v`.
    pub rest_normals: Vec<Vec3>,
    /// Vertices whose rows enter the bending sum.
    pub interior: Vec<bool>,
    pub mass_kind: MassKind,
    pub diameter: f64,
}

impl DiscreteOperators {
    pub fn new(mesh: &TriMesh) -> Result<Self, OperatorError> {
        Self::with_mass(mesh, MassKind::Barycentric)
    }

    pub fn with_mass(mesh: &TriMesh, mass_kind: MassKind) -> Result<Self, OperatorError> {
        let cotan = CotanWeights::new(mesh)?;
        let lc = cotan_matrix_from(mesh, &cotan);
        let mass = build_mass_matrix(mesh, mass_kind);
        let rest_normals = curvature_normals(&lc, &mass, mesh.positions());
        let interior: Vec<bool> = (0..mesh.vertex_count()).map(|v| !mesh.is_boundary(v)).collect();
        let curvature = rest_normals
            .iter()
            .zip(&interior)
            .map(|(n, &inside)| if inside { n.norm() } else { 0.0 })
            .collect();
        Ok(DiscreteOperators {
            cotan,
            lc,
            mass,
            curvature,
            rest_normals,
            interior,
            mass_kind,
            diameter: mesh.diameter(),
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.mass.len()
    }

    /// Pointwise Laplacian `M⁻¹ Lc x`.
    pub fn laplacian(&self, x: &[Vec3]) -> Vec<Vec3> {
        curvature_normals(&self.lc, &self.mass, x)
    }

    /// Bending operator `Lc P M⁻¹ Lc`, where `P` keeps interior rows only.
    pub fn bilaplacian(&self) -> CsrMatrix {
        let inv_mass: Vec<f64> = self
            .mass
            .iter()
            .zip(&self.interior)
            .map(|(m, &inside)| if inside { 1.0 / m } else { 0.0 })
            .collect();
        self.lc.matmul(&self.lc.scale_rows(&inv_mass))
    }

    /// Rest-curvature target field `Lc (|H| u)`, the bending part of the
    /// global right-hand side.
    pub fn bending_rhs(&self, units: &[Vec3]) -> Vec<Vec3> {
        let target: Vec<Vec3> = units
            .par_iter()
            .zip(&self.curvature)
            .map(|(u, h)| u * *h)
            .collect();
        self.lc.mul_vec3(&target)
    }
}
