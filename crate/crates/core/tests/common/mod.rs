//! Deformation scenarios shared by the integration tests.
#![allow(dead_code)]

use deformlab::mesh::{generate_bar, generate_grid, generate_icosphere, ConstraintSet, TriMesh, Vec3};
use nalgebra::{Rotation3, Unit};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub struct Scenario {
    pub name: &'static str,
    pub mesh: TriMesh,
    pub constraints: ConstraintSet,
}

/// Icosphere with one vertex fixed and the opposite vertex pulled outward.
pub fn sphere_pull(subdivisions: u32) -> Scenario {
    let mesh = generate_icosphere(subdivisions, 1.0).unwrap();
    let p = mesh.positions();
    let far = (0..p.len())
        .max_by(|&a, &b| (p[a] - p[0]).norm().total_cmp(&(p[b] - p[0]).norm()))
        .unwrap();
    let mut constraints = ConstraintSet::pin_rest(&mesh, &[0]).unwrap();
    constraints.insert(far, p[far] * 1.5);
    Scenario { name: "sphere-pull", mesh, constraints }
}

/// Bar along x with both end caps pinned and the far cap turned a quarter
/// turn about the bar axis.
pub fn bar_twist(segments: [usize; 3]) -> Scenario {
    bar_twist_by(segments, std::f64::consts::FRAC_PI_2)
}

pub fn bar_twist_by(segments: [usize; 3], angle: f64) -> Scenario {
    let mesh = generate_bar(segments[0], segments[1], segments[2]).unwrap();
    let p = mesh.positions();
    let x_max = p.iter().map(|q| q.x).fold(f64::MIN, f64::max);
    let axis_y = p.iter().map(|q| q.y).fold(f64::MIN, f64::max) / 2.0;
    let axis_z = p.iter().map(|q| q.z).fold(f64::MIN, f64::max) / 2.0;
    let turn = Rotation3::from_axis_angle(&Vec3::x_axis(), angle);
    let mut constraints = ConstraintSet::new();
    for (v, q) in p.iter().enumerate() {
        if q.x.abs() < 1e-12 {
            constraints.insert(v, *q);
        } else if (q.x - x_max).abs() < 1e-12 {
            let centre = Vec3::new(x_max, axis_y, axis_z);
            constraints.insert(v, centre + turn * (q - centre));
        }
    }
    Scenario { name: "bar-twist", mesh, constraints }
}

/// Grid carrying a Gaussian bump, boundary pinned, bump tip raised.
pub fn bump_plane(n: usize) -> Scenario {
    let grid = generate_grid(n, 1.0).unwrap();
    let positions: Vec<Vec3> = grid
        .positions()
        .iter()
        .map(|q| {
            let r2 = (q.x - 0.5).powi(2) + (q.y - 0.5).powi(2);
            Vec3::new(q.x, q.y, 0.15 * (-r2 / 0.02).exp())
        })
        .collect();
    let mesh = TriMesh::new(positions, grid.faces().to_vec()).unwrap();
    let boundary: Vec<usize> = (0..mesh.vertex_count()).filter(|&v| mesh.is_boundary(v)).collect();
    let mut constraints = ConstraintSet::pin_rest(&mesh, &boundary).unwrap();
    let tip = (n / 2) * (n + 1) + n / 2;
    constraints.insert(tip, mesh.positions()[tip] + Vec3::new(0.05, 0.0, 0.2));
    Scenario { name: "bump-plane", mesh, constraints }
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn random_rotation(rng: &mut impl Rng) -> Rotation3<f64> {
    let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let angle = rng.random_range(-3.0..3.0);
    Rotation3::from_axis_angle(&Unit::new_normalize(axis + Vec3::new(1e-3, 0.0, 0.0)), angle)
}

pub fn random_unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Random triangulated patch: a jittered grid lifted onto a smooth height
/// field, with obtuse triangles from the jitter.
pub fn random_patch(rng: &mut impl Rng, n: usize, jitter: f64) -> TriMesh {
    let grid = generate_grid(n, 1.0).unwrap();
    let h = 1.0 / n as f64;
    let (a, b) = (rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
    let positions = grid
        .positions()
        .iter()
        .map(|q| {
            let x = q.x + rng.random_range(-jitter..jitter) * h;
            let y = q.y + rng.random_range(-jitter..jitter) * h;
            Vec3::new(x, y, a * (3.0 * x).sin() * y + b * x * x)
        })
        .collect();
    TriMesh::new(positions, grid.faces().to_vec()).unwrap()
}

/// Positions perturbed by up to `scale` per coordinate.
pub fn jitter(rng: &mut impl Rng, positions: &[Vec3], scale: f64) -> Vec<Vec3> {
    positions
        .iter()
        .map(|p| p + Vec3::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale), rng.random_range(-scale..scale)))
        .collect()
}
