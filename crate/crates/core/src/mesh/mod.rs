//! Indexed triangle meshes with half-edge connectivity.
//!
//! [`TriMesh`] is the frozen reference surface. Deformations are carried
//! separately as a [`DeformState`] so the rest geometry can be shared by
//! every evaluator and solver that needs it.

mod constraint_file;
mod generators;
mod obj;

pub use constraint_file::{ConstraintEntry, ConstraintFile};

pub use generators::{
    generate_bar, generate_bar_with_extent, generate_cylinder_map, generate_fold, generate_grid,
    generate_grid_with, generate_icosphere, GridPattern, MAX_ICOSPHERE_SUBDIVISIONS,
};
pub use obj::{load_obj, load_obj_state, save_obj};

use std::collections::{BTreeMap, HashMap};

use nalgebra::Vector3;
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Faces whose area falls below this fraction of the squared diameter are rejected.
pub const DEGENERATE_AREA_RATIO: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("face {face} references vertex {index} but the mesh has {count} vertices")]
    IndexOutOfRange {
        face: usize,
        index: usize,
        count: usize,
    },
    #[error("face {face} repeats vertex {vertex}")]
    RepeatedVertex { face: usize, vertex: usize },
    #[error("non-manifold connectivity at edges {edges:?}")]
    NonManifold { edges: Vec<(usize, usize)> },
    #[error("vertex {vertex} is not referenced by any face")]
    IsolatedVertex { vertex: usize },
    #[error("face {face} is degenerate (area {area:e})")]
    DegenerateFace { face: usize, area: f64 },
    #[error("vertex {vertex} has a non-finite coordinate")]
    NonFinite { vertex: usize },
    #[error("expected {expected} positions, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("mesh has no faces")]
    Empty,
    #[error("{0}")]
    InvalidArgument(String),
}

/// Directed edge of a face. Halfedge `3 * f + k` runs from corner `k` to
/// corner `(k + 1) % 3` of face `f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HalfEdge {
    pub from: usize,
    pub to: usize,
    pub face: usize,
    pub twin: Option<usize>,
}

impl HalfEdge {
    pub fn next(index: usize) -> usize {
        3 * (index / 3) + (index % 3 + 1) % 3
    }

    pub fn prev(index: usize) -> usize {
        3 * (index / 3) + (index % 3 + 2) % 3
    }
}

#[derive(Debug, Clone)]
pub struct TriMesh {
    positions: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    halfedges: Vec<HalfEdge>,
    boundary: Vec<bool>,
    /// Outgoing halfedge ids per vertex, in no particular order.
    outgoing: Vec<Vec<usize>>,
}

impl TriMesh {
    /// Builds and validates a mesh. Faces are counterclockwise vertex triples.
    pub fn new(positions: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        if faces.is_empty() {
            return Err(MeshError::Empty);
        }
        let count = positions.len();
        for (v, p) in positions.iter().enumerate() {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(MeshError::NonFinite { vertex: v });
            }
        }
        for (f, tri) in faces.iter().enumerate() {
            for &index in tri {
                if index >= count {
                    return Err(MeshError::IndexOutOfRange {
                        face: f,
                        index,
                        count,
                    });
                }
            }
            if tri[0] == tri[1] || tri[0] == tri[2] {
                return Err(MeshError::RepeatedVertex {
                    face: f,
                    vertex: tri[0],
                });
            }
            if tri[1] == tri[2] {
                return Err(MeshError::RepeatedVertex {
                    face: f,
                    vertex: tri[1],
                });
            }
        }

        let mut halfedges = Vec::with_capacity(3 * faces.len());
        let mut directed: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * faces.len());
        let mut bad: BTreeMap<(usize, usize), ()> = BTreeMap::new();
        for (f, tri) in faces.iter().enumerate() {
            for k in 0..3 {
                let (from, to) = (tri[k], tri[(k + 1) % 3]);
                let id = halfedges.len();
                if directed.insert((from, to), id).is_some() {
                    // Two faces traverse the edge in the same direction: either
                    // a non-manifold edge or inconsistent orientation.
                    bad.insert((from.min(to), from.max(to)), ());
                }
                halfedges.push(HalfEdge {
                    from,
                    to,
                    face: f,
                    twin: None,
                });
            }
        }
        if !bad.is_empty() {
            return Err(MeshError::NonManifold {
                edges: bad.into_keys().collect(),
            });
        }
        for he in halfedges.iter_mut() {
            he.twin = directed.get(&(he.to, he.from)).copied();
        }

        let mut boundary = vec![false; count];
        let mut outgoing = vec![Vec::new(); count];
        for (id, he) in halfedges.iter().enumerate() {
            outgoing[he.from].push(id);
            if he.twin.is_none() {
                boundary[he.from] = true;
                boundary[he.to] = true;
            }
        }
        if let Some(vertex) = outgoing.iter().position(|o| o.is_empty()) {
            return Err(MeshError::IsolatedVertex { vertex });
        }

        let mesh = TriMesh {
            positions,
            faces,
            halfedges,
            boundary,
            outgoing,
        };
        let limit = DEGENERATE_AREA_RATIO * mesh.diameter().powi(2);
        for f in 0..mesh.faces.len() {
            let area = mesh.face_area(f);
            if area.is_nan() || area <= limit {
                return Err(MeshError::DegenerateFace { face: f, area });
            }
        }
        Ok(mesh)
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn halfedges(&self) -> &[HalfEdge] {
        &self.halfedges
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn outgoing(&self, v: usize) -> &[usize] {
        &self.outgoing[v]
    }

    /// Distinct one-ring neighbours of `v`, sorted.
    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for &h in &self.outgoing[v] {
            out.push(self.halfedges[h].to);
            // The incoming edge from the previous corner also touches `v`.
            out.push(self.halfedges[HalfEdge::prev(h)].from);
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Faces incident to `v`, sorted.
    pub fn vertex_faces(&self, v: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.outgoing[v]
            .iter()
            .map(|&h| self.halfedges[h].face)
            .collect();
        out.sort_unstable();
        out
    }

    /// Undirected edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self
            .halfedges
            .iter()
            .filter(|he| he.twin.is_none() || he.from < he.to)
            .map(|he| (he.from.min(he.to), he.from.max(he.to)))
            .collect();
        out.sort_unstable();
        out
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f];
        let p = &self.positions;
        0.5 * (p[b] - p[a]).cross(&(p[c] - p[a])).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Diagonal of the axis-aligned bounding box.
    pub fn diameter(&self) -> f64 {
        bounding_diagonal(&self.positions)
    }

    /// Volume enclosed by a closed, outward-oriented mesh.
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|&[a, b, c]| {
                let p = &self.positions;
                p[a].dot(&p[b].cross(&p[c])) / 6.0
            })
            .sum()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertex_count() as i64 - self.edges().len() as i64 + self.face_count() as i64
    }

    /// The same connectivity with every position multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> TriMesh {
        TriMesh {
            positions: self.positions.iter().map(|p| p * factor).collect(),
            ..self.clone()
        }
    }

    pub fn rest_state(&self) -> DeformState {
        DeformState {
            positions: self.positions.clone(),
        }
    }
}

pub(crate) fn bounding_diagonal(points: &[Vec3]) -> f64 {
    let Some(first) = points.first() else {
        return 0.0;
    };
    let (lo, hi) = points.iter().fold((*first, *first), |(lo, hi), p| {
        (lo.inf(p), hi.sup(p))
    });
    (hi - lo).norm()
}

/// Deformed vertex positions of a [`TriMesh`].
#[derive(Debug, Clone, PartialEq)]
pub struct DeformState {
    pub positions: Vec<Vec3>,
}

impl DeformState {
    pub fn new(mesh: &TriMesh, positions: Vec<Vec3>) -> Result<Self, MeshError> {
        if positions.len() != mesh.vertex_count() {
            return Err(MeshError::LengthMismatch {
                expected: mesh.vertex_count(),
                found: positions.len(),
            });
        }
        if let Some(vertex) = positions
            .iter()
            .position(|p| !p.iter().all(|c| c.is_finite()))
        {
            return Err(MeshError::NonFinite { vertex });
        }
        Ok(DeformState { positions })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Largest per-vertex distance between two states.
    pub fn max_distance(&self, other: &DeformState) -> f64 {
        self.positions
            .iter()
            .zip(&other.positions)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Pinned vertices and their target positions, ordered by vertex index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintSet {
    entries: BTreeMap<usize, Vec3>,
}

impl ConstraintSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a set from `(vertex, target)` pairs, rejecting duplicates and
    /// indices outside `0..vertex_count`.
    pub fn from_entries(
        vertex_count: usize,
        entries: impl IntoIterator<Item = (usize, Vec3)>,
    ) -> Result<Self, MeshError> {
        let mut set = ConstraintSet::new();
        for (v, target) in entries {
            if v >= vertex_count {
                return Err(MeshError::InvalidArgument(format!(
                    "constraint vertex {v} out of range (mesh has {vertex_count} vertices)"
                )));
            }
            if !target.iter().all(|c| c.is_finite()) {
                return Err(MeshError::NonFinite { vertex: v });
            }
            if set.entries.insert(v, target).is_some() {
                return Err(MeshError::InvalidArgument(format!(
                    "vertex {v} is constrained twice"
                )));
            }
        }
        Ok(set)
    }

    /// Pins `vertices` at their rest positions.
    pub fn pin_rest(mesh: &TriMesh, vertices: &[usize]) -> Result<Self, MeshError> {
        Self::from_entries(
            mesh.vertex_count(),
            vertices.iter().map(|&v| {
                let p = mesh.positions().get(v).copied().unwrap_or_else(Vec3::zeros);
                (v, p)
            }),
        )
    }

    pub fn insert(&mut self, vertex: usize, target: Vec3) -> Option<Vec3> {
        self.entries.insert(vertex, target)
    }

    pub fn get(&self, vertex: usize) -> Option<&Vec3> {
        self.entries.get(&vertex)
    }

    pub fn contains(&self, vertex: usize) -> bool {
        self.entries.contains_key(&vertex)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Vec3)> + '_ {
        self.entries.iter().map(|(&v, p)| (v, p))
    }

    pub fn indices(&self) -> Vec<usize> {
        self.entries.keys().copied().collect()
    }

    pub fn same_indices(&self, other: &ConstraintSet) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.keys().zip(other.entries.keys()).all(|(a, b)| a == b)
    }

    /// Applies `f` to every target position.
    pub fn map_targets(&self, f: impl Fn(&Vec3) -> Vec3) -> ConstraintSet {
        ConstraintSet {
            entries: self.entries.iter().map(|(&v, p)| (v, f(p))).collect(),
        }
    }

    /// Rest positions with every constrained vertex moved to its target.
    pub fn impose(&self, state: &DeformState) -> DeformState {
        let mut out = state.clone();
        for (v, p) in self.iter() {
            out.positions[v] = *p;
        }
        out
    }
}
