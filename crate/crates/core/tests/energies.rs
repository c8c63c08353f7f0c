mod common;

use deformlab::energies::*;
use deformlab::mesh::{generate_cylinder_map, generate_fold, generate_grid, generate_icosphere, DeformState, Vec3};
use deformlab::operators::DiscreteOperators;
use deformlab::solver::local;
use proptest::prelude::*;

fn transform(state: &DeformState, q: &Mat3, t: Vec3) -> DeformState {
    DeformState { positions: state.positions.iter().map(|p| q * p + t).collect() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fitted_energies_are_rigid_invariant(seed in any::<u64>(), n in 2usize..7) {
        let mut rng = common::rng(seed);
        let mesh = common::random_patch(&mut rng, n, 0.3);
        let ops = DiscreteOperators::new(&mesh).unwrap();
        let state = DeformState { positions: common::jitter(&mut rng, mesh.positions(), 0.05) };
        let q = common::random_rotation(&mut rng).into_inner();
        let moved = transform(&state, &q, Vec3::new(0.4, -1.3, 2.0));
        let pairs = [
            (optimal_stretch_energy(&mesh, &ops, &state).unwrap(), optimal_stretch_energy(&mesh, &ops, &moved).unwrap()),
            (optimal_arap_energy(&mesh, &ops, &state, ArapMode::Spoke).unwrap(),
             optimal_arap_energy(&mesh, &ops, &moved, ArapMode::Spoke).unwrap()),
            (optimal_arap_energy(&mesh, &ops, &state, ArapMode::SpokeRim).unwrap(),
             optimal_arap_energy(&mesh, &ops, &moved, ArapMode::SpokeRim).unwrap()),
            (optimal_bending_energy(&mesh, &ops, &state).unwrap(), optimal_bending_energy(&mesh, &ops, &moved).unwrap()),
        ];
        for (a, b) in pairs {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-12), "{a} vs {b}");
        }
    }

    #[test]
    fn stretch_quadratic_form_is_psd(seed in any::<u64>(), n in 2usize..6) {
        // With rotations fixed the stretching energy is xᵀ(2 Lc)x + linear.
        let mut rng = common::rng(seed);
        let mesh = common::random_patch(&mut rng, n, 0.45);
        let ops = DiscreteOperators::new(&mesh).unwrap();
        let eig = ops.lc.to_dense().symmetric_eigenvalues();
        prop_assert!(eig.iter().all(|&l| l >= -1e-8), "{eig}");
    }

    #[test]
    fn cotan_matrix_properties(seed in any::<u64>(), n in 2usize..8) {
        let mut rng = common::rng(seed);
        let mesh = common::random_patch(&mut rng, n, 0.4);
        let ops = DiscreteOperators::new(&mesh).unwrap();
        prop_assert!(ops.lc.asymmetry() < 1e-12);
        let x: Vec<f64> = (0..mesh.vertex_count()).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let lx = ops.lc.mul_scalars(&x);
        let quad: f64 = x.iter().zip(&lx).map(|(a, b)| a * b).sum();
        let norm2: f64 = x.iter().map(|a| a * a).sum();
        prop_assert!(quad >= -1e-10 * norm2);
        prop_assert!(ops.mass.iter().all(|&m| m > 0.0));
        let total: f64 = ops.mass.iter().sum();
        prop_assert!((total - mesh.surface_area()).abs() < 1e-12 * total);
    }

    #[test]
    fn linear_precision_on_planar_meshes(seed in any::<u64>(), n in 2usize..8) {
        let mut rng = common::rng(seed);
        let grid = generate_grid(n, 1.0).unwrap();
        let flat: Vec<Vec3> = common::jitter(&mut rng, grid.positions(), 0.3 / n as f64)
            .into_iter()
            .map(|p| Vec3::new(p.x, p.y, 0.0))
            .collect();
        let mesh = deformlab::mesh::TriMesh::new(flat, grid.faces().to_vec()).unwrap();
        let ops = DiscreteOperators::new(&mesh).unwrap();
        let (a, b, c) = (rand::Rng::random_range(&mut rng, -2.0..2.0), rand::Rng::random_range(&mut rng, -2.0..2.0), 0.7);
        let f: Vec<f64> = mesh.positions().iter().map(|p| a * p.x + b * p.y + c).collect();
        for (v, r) in ops.lc.mul_scalars(&f).iter().enumerate() {
            if !mesh.is_boundary(v) {
                prop_assert!(r.abs() < 1e-10, "vertex {v}: {r}");
            }
        }
    }
}

#[test]
fn fold_is_an_isometry() {
    let (mesh, state) = generate_fold(10, 1.0, std::f64::consts::FRAC_PI_2).unwrap();
    for (a, b) in mesh.edges() {
        let rest = (mesh.positions()[a] - mesh.positions()[b]).norm();
        let folded = (state.positions[a] - state.positions[b]).norm();
        assert!((rest - folded).abs() < 1e-12);
    }
    for (v, p) in state.positions.iter().enumerate() {
        if mesh.positions()[v].x > 0.5 + 1e-12 {
            assert!(p.x.abs() - 0.5 < 1e-12 && p.z > 0.0);
        }
    }
}

#[test]
fn cylinder_map_edge_error_shrinks_quadratically() {
    let mut previous = f64::INFINITY;
    for n in [10, 20, 40, 80] {
        let (mesh, state) = generate_cylinder_map(n, 1.0).unwrap();
        let worst = mesh
            .edges()
            .iter()
            .map(|&(a, b)| {
                let rest = (mesh.positions()[a] - mesh.positions()[b]).norm();
                ((state.positions[a] - state.positions[b]).norm() - rest).abs() / rest
            })
            .fold(0.0, f64::max);
        // Chord over arc for a 2π/n turn: 1 − sinc ≈ (π/n)²/6.
        let expected = (std::f64::consts::PI / n as f64).powi(2) / 6.0;
        assert!((worst - expected).abs() < 0.05 * expected, "n={n}: {worst} vs {expected}");
        assert!(worst < previous / 3.9);
        previous = worst;
        for j in 0..=n {
            let row = j * (n + 1);
            assert!((state.positions[row] - state.positions[row + n]).norm() < 1e-12);
        }
    }
}

#[test]
fn cylinder_stretch_decays_with_refinement() {
    let mut previous = f64::INFINITY;
    for n in [10, 20, 40] {
        let (mesh, state) = generate_cylinder_map(n, 1.0).unwrap();
        let ops = DiscreteOperators::new(&mesh).unwrap();
        let e = optimal_stretch_energy(&mesh, &ops, &state).unwrap();
        assert!(e < previous / 8.0);
        previous = e;
    }
}

#[test]
fn fold_spoke_scaling_at_small_sizes() {
    let mut energies = Vec::new();
    for n in [4, 8, 16] {
        let (mesh, state) = generate_fold(n, 1.0, std::f64::consts::FRAC_PI_2).unwrap();
        let ops = DiscreteOperators::new(&mesh).unwrap();
        energies.push(optimal_arap_energy(&mesh, &ops, &state, ArapMode::Spoke).unwrap());
    }
    assert!((energies[1] / energies[0] - 0.5).abs() < 0.025);
    assert!((energies[2] / energies[1] - 0.5).abs() < 0.025);
}

#[test]
fn unit_vector_optimum_against_random_fields() {
    let mut rng = common::rng(11);
    let mesh = generate_icosphere(1, 1.0).unwrap();
    let ops = DiscreteOperators::new(&mesh).unwrap();
    let state = DeformState { positions: common::jitter(&mut rng, mesh.positions(), 0.1) };
    let fitted = local::update_unit_vectors(&ops, &state, &local::initial_unit_vectors(&ops));
    let best = bending_energy(&mesh, &ops, &state, &fitted).unwrap();
    for _ in 0..1000 {
        let field = UnitVectorField((0..mesh.vertex_count()).map(|_| common::random_unit(&mut rng)).collect());
        assert!(best <= bending_energy(&mesh, &ops, &state, &field).unwrap());
    }
}

#[test]
fn singular_value_constant_is_frozen() {
    assert_eq!(SINGULAR_VALUE_SCALE, 2.0);
}
