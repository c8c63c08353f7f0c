//! Procedural test surfaces: planar grids and their fold/cylinder
//! deformations, icospheres, and closed box surfaces.

use std::collections::HashMap;
use std::f64::consts::PI;

use super::{DeformState, MeshError, TriMesh, Vec3};

pub const MAX_ICOSPHERE_SUBDIVISIONS: u32 = 7;

/// Diagonal layout of the split grid squares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GridPattern {
    /// Every square split along the same diagonal.
    #[default]
    Uniform,
    /// Diagonal direction flips in a checkerboard.
    Alternating,
}

/// Planar `[0, width]²` sheet in the z = 0 plane with `(n + 1)²` vertices
/// and `2n²` counterclockwise triangles. Vertex `(i, j)` has index
/// `j * (n + 1) + i` and sits at `(i, j) * width / n`.
pub fn generate_grid(n: usize, width: f64) -> Result<TriMesh, MeshError> {
    generate_grid_with(n, width, GridPattern::Uniform)
}

pub fn generate_grid_with(n: usize, width: f64, pattern: GridPattern) -> Result<TriMesh, MeshError> {
    if n == 0 {
        return Err(MeshError::InvalidArgument("grid resolution must be at least 1".into()));
    }
    if !(width > 0.0 && width.is_finite()) {
        return Err(MeshError::InvalidArgument(format!("grid width must be positive, got {width}")));
    }
    let h = width / n as f64;
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut positions = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            positions.push(Vec3::new(i as f64 * h, j as f64 * h, 0.0));
        }
    }
    let mut faces = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            if pattern == GridPattern::Alternating && (i + j) % 2 == 1 {
                faces.push([a, b, d]);
                faces.push([b, c, d]);
            } else {
                faces.push([a, b, c]);
                faces.push([a, c, d]);
            }
        }
    }
    TriMesh::new(positions, faces)
}

/// Folds the `n × n` grid about its centre line `u = width / 2`.
///
/// Columns right of the centre line are rotated by `angle` about it; the
/// centre column itself stays put. At `angle = π` the right half lies flat
/// on top of the left half.
pub fn generate_fold(n: usize, width: f64, angle: f64) -> Result<(TriMesh, DeformState), MeshError> {
    if n % 2 == 1 {
        return Err(MeshError::InvalidArgument(format!(
            "fold needs an even grid resolution so the centre line is a vertex path, got {n}"
        )));
    }
    let mesh = generate_grid(n, width)?;
    let h = width / n as f64;
    let centre = n / 2;
    let (sin, cos) = angle.sin_cos();
    let mut positions = mesh.positions().to_vec();
    for j in 0..=n {
        for i in centre + 1..=n {
            let d = (i - centre) as f64 * h;
            let p = &mut positions[j * (n + 1) + i];
            p.x += d * (cos - 1.0);
            p.z = d * sin;
        }
    }
    let state = DeformState::new(&mesh, positions)?;
    Ok((mesh, state))
}

/// Rolls the u-direction of the `n × n` grid onto a circle whose
/// circumference equals `width`. The first and last columns land on the
/// same points but stay distinct vertices.
pub fn generate_cylinder_map(n: usize, width: f64) -> Result<(TriMesh, DeformState), MeshError> {
    let mesh = generate_grid(n, width)?;
    let h = width / n as f64;
    let radius = width / (2.0 * PI);
    let mut positions = Vec::with_capacity(mesh.vertex_count());
    for j in 0..=n {
        for i in 0..=n {
            let t = 2.0 * PI * (i % n) as f64 / n as f64;
            positions.push(Vec3::new(radius * t.sin(), j as f64 * h, radius * (1.0 - t.cos())));
        }
    }
    let state = DeformState::new(&mesh, positions)?;
    Ok((mesh, state))
}

/// Subdivided icosahedron projected onto the sphere of `radius` about the
/// origin: `20 · 4^subdivisions` faces.
pub fn generate_icosphere(subdivisions: u32, radius: f64) -> Result<TriMesh, MeshError> {
    if subdivisions > MAX_ICOSPHERE_SUBDIVISIONS {
        return Err(MeshError::InvalidArgument(format!(
            "icosphere subdivisions {subdivisions} exceed the limit of {MAX_ICOSPHERE_SUBDIVISIONS}"
        )));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(MeshError::InvalidArgument(format!("radius must be positive, got {radius}")));
    }
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut positions: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, positions: &mut Vec<Vec3>| -> usize {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                positions.push(((positions[a] + positions[b]) * 0.5).normalize());
                positions.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut positions);
            let bc = midpoint(b, c, &mut positions);
            let ca = midpoint(c, a, &mut positions);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    for p in positions.iter_mut() {
        *p = p.normalize() * radius;
    }
    TriMesh::new(positions, faces)
}

/// Closed box surface with `nx × ny × nz` segments per axis and cubic cells
/// whose longest side spans one unit.
pub fn generate_bar(nx: usize, ny: usize, nz: usize) -> Result<TriMesh, MeshError> {
    let longest = nx.max(ny).max(nz).max(1) as f64;
    generate_bar_with_extent(
        [nx, ny, nz],
        Vec3::new(nx as f64, ny as f64, nz as f64) / longest,
    )
}

/// Closed box `[0, extent]` surface, outward oriented, with the given
/// segment counts per axis.
pub fn generate_bar_with_extent(segments: [usize; 3], extent: Vec3) -> Result<TriMesh, MeshError> {
    if segments.contains(&0) {
        return Err(MeshError::InvalidArgument(format!(
            "bar segment counts must be positive, got {segments:?}"
        )));
    }
    if !extent.iter().all(|&e| e > 0.0 && e.is_finite()) {
        return Err(MeshError::InvalidArgument("bar extent must be positive".into()));
    }
    let [nx, ny, nz] = segments;
    let mut index: HashMap<[usize; 3], usize> = HashMap::new();
    let mut positions = Vec::new();
    let mut vertex = |c: [usize; 3], positions: &mut Vec<Vec3>| -> usize {
        *index.entry(c).or_insert_with(|| {
            positions.push(Vec3::new(
                extent.x * c[0] as f64 / nx as f64,
                extent.y * c[1] as f64 / ny as f64,
                extent.z * c[2] as f64 / nz as f64,
            ));
            positions.len() - 1
        })
    };

    let mut faces = Vec::new();
    // For each axis pair (a, b) with normal axis `c`, emit the two opposite
    // sides. (a, b, c) is a right-handed cyclic permutation of (x, y, z).
    for (a, b, c) in [(0usize, 1usize, 2usize), (1, 2, 0), (2, 0, 1)] {
        let (na, nb) = (segments[a], segments[b]);
        for (level, outward_positive) in [(0usize, false), (segments[c], true)] {
            for i in 0..na {
                for j in 0..nb {
                    let coord = |di: usize, dj: usize| {
                        let mut k = [0usize; 3];
                        k[a] = i + di;
                        k[b] = j + dj;
                        k[c] = level;
                        k
                    };
                    let p00 = vertex(coord(0, 0), &mut positions);
                    let p10 = vertex(coord(1, 0), &mut positions);
                    let p11 = vertex(coord(1, 1), &mut positions);
                    let p01 = vertex(coord(0, 1), &mut positions);
                    if outward_positive {
                        faces.push([p00, p10, p11]);
                        faces.push([p00, p11, p01]);
                    } else {
                        faces.push([p00, p11, p10]);
                        faces.push([p00, p01, p11]);
                    }
                }
            }
        }
    }
    TriMesh::new(positions, faces)
}
