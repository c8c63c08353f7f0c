use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use deformlab::bench::{FOLD_ANGLE, FOLD_REFERENCE};
use deformlab::energies::{self, ArapMode};
use deformlab::mesh::{generate_cylinder_map, load_obj, load_obj_state, ConstraintEntry, ConstraintFile, TriMesh};
use deformlab::operators::DiscreteOperators;
use serde_json::Value;
use tempfile::TempDir;

fn deformlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deformlab")).args(args).output().unwrap()
}

fn deformlab_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deformlab")).args(args).env(key, value).output().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn mesh_at(path: &Path) -> TriMesh {
    load_obj(&std::fs::read(path).unwrap()).unwrap()
}

fn stdout_f64(out: &Output) -> f64 {
    String::from_utf8_lossy(&out.stdout).trim().parse().unwrap()
}

fn write_constraints(dir: &TempDir, name: &str, file: &ConstraintFile) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, serde_json::to_vec(file).unwrap()).unwrap();
    path
}

fn entry(mesh: &TriMesh, vertex: usize, scale: f64) -> ConstraintEntry {
    let p = mesh.positions()[vertex] * scale;
    ConstraintEntry { vertex, position: [p.x, p.y, p.z] }
}

/// Icosphere with vertex 0 fixed at rest and its antipode pulled outward.
fn sphere_pull(dir: &TempDir) -> (PathBuf, PathBuf) {
    let mesh_path = dir.path().join("sphere.obj");
    ok(&deformlab(&["generate", "icosphere", "--sub", "2", "-o", s(&mesh_path)]));
    let mesh = mesh_at(&mesh_path);
    let p = mesh.positions();
    let far = (0..p.len()).max_by(|&a, &b| (p[a] - p[0]).norm().total_cmp(&(p[b] - p[0]).norm())).unwrap();
    let file = ConstraintFile { fixed: vec![entry(&mesh, 0, 1.0)], handles: vec![entry(&mesh, far, 1.5)] };
    (mesh_path, write_constraints(dir, "pull.json", &file))
}

#[test]
fn generate_shapes() {
    let dir = TempDir::new().unwrap();
    let grid = dir.path().join("grid.obj");
    ok(&deformlab(&["generate", "grid", "--n", "10", "-o", s(&grid)]));
    assert_eq!(mesh_at(&grid).vertex_count(), 121);

    let sphere = dir.path().join("s.obj");
    ok(&deformlab(&["generate", "icosphere", "--sub", "2", "-o", s(&sphere)]));
    assert_eq!(mesh_at(&sphere).face_count(), 320);

    let (rest, fold) = (dir.path().join("rest.obj"), dir.path().join("fold.obj"));
    ok(&deformlab(&["generate", "fold", "--n", "10", "--angle", "3.14159", "-o", s(&rest), "--deformed", s(&fold)]));
    let m = mesh_at(&rest);
    let folded = load_obj_state(&m, &std::fs::read(&fold).unwrap()).unwrap();
    assert_eq!(folded.len(), 121);

    let bar = dir.path().join("bar.obj");
    ok(&deformlab(&["generate", "bar", "--segments", "4", "1", "1", "-o", s(&bar)]));
    assert_eq!(mesh_at(&bar).euler_characteristic(), 2);
}

#[test]
fn generate_usage_errors() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x.obj");
    assert_eq!(code(&deformlab(&["generate", "torus", "-o", s(&out)])), 2);
    assert_eq!(code(&deformlab(&["generate", "fold", "-o", s(&out)])), 2);
    assert_eq!(code(&deformlab(&["generate", "grid", "--n", "0", "-o", s(&out)])), 2);
    assert_eq!(code(&deformlab(&["generate", "grid", "-o", s(&out), "--deformed", s(&out)])), 2);
    assert_eq!(code(&deformlab(&["frobnicate"])), 2);
}

#[test]
fn pinned_rest_is_a_fixed_point() {
    let dir = TempDir::new().unwrap();
    let mesh_path = dir.path().join("s.obj");
    ok(&deformlab(&["generate", "icosphere", "--sub", "2", "-o", s(&mesh_path)]));
    let mesh = mesh_at(&mesh_path);
    let file = ConstraintFile { fixed: vec![entry(&mesh, 0, 1.0), entry(&mesh, 50, 1.0)], handles: vec![] };
    let c = write_constraints(&dir, "rest.json", &file);
    let out = dir.path().join("out.obj");
    ok(&deformlab(&["deform", s(&mesh_path), s(&c), "-o", s(&out)]));
    let result = load_obj_state(&mesh, &std::fs::read(&out).unwrap()).unwrap();
    assert!(result.max_distance(&mesh.rest_state()) < 1e-8);
}

#[test]
fn deform_failures_map_to_exit_codes() {
    let dir = TempDir::new().unwrap();
    let (mesh_path, _) = sphere_pull(&dir);
    let out = dir.path().join("out.obj");

    let empty = write_constraints(&dir, "empty.json", &ConstraintFile::default());
    let r = deformlab(&["deform", s(&mesh_path), s(&empty), "-o", s(&out)]);
    assert_eq!(code(&r), 3);
    assert!(String::from_utf8_lossy(&r.stderr).contains("singular"));

    let mesh = mesh_at(&mesh_path);
    let bad = ConstraintFile { fixed: vec![ConstraintEntry { vertex: 9999, position: [0.0; 3] }], handles: vec![] };
    let bad = write_constraints(&dir, "bad.json", &bad);
    assert_eq!(code(&deformlab(&["deform", s(&mesh_path), s(&bad), "-o", s(&out)])), 3);
    let dup = ConstraintFile { fixed: vec![entry(&mesh, 3, 1.0)], handles: vec![entry(&mesh, 3, 1.2)] };
    let dup = write_constraints(&dir, "dup.json", &dup);
    assert_eq!(code(&deformlab(&["deform", s(&mesh_path), s(&dup), "-o", s(&out)])), 3);

    let junk = dir.path().join("junk.json");
    std::fs::write(&junk, "{not json").unwrap();
    assert_eq!(code(&deformlab(&["deform", s(&mesh_path), s(&junk), "-o", s(&out)])), 2);
    let missing = dir.path().join("missing.obj");
    assert_eq!(code(&deformlab(&["deform", s(&missing), s(&junk), "-o", s(&out)])), 2);
    let (_, pull) = sphere_pull(&dir);
    assert_eq!(code(&deformlab(&["deform", s(&mesh_path), s(&pull), "-o", s(&out), "--lambda", "1.5"])), 2);
}

#[test]
fn stretch_only_bends_more_than_hybrid() {
    let dir = TempDir::new().unwrap();
    let (mesh_path, pull) = sphere_pull(&dir);
    let mut bending = Vec::new();
    let mut outputs = Vec::new();
    for lambda in ["1", "0", "0.5"] {
        let out = dir.path().join(format!("out{lambda}.obj"));
        ok(&deformlab(&["deform", s(&mesh_path), s(&pull), "-o", s(&out), "--lambda", lambda]));
        let e = deformlab(&["energy", s(&mesh_path), s(&out), "--which", "bending"]);
        ok(&e);
        bending.push(stdout_f64(&e));
        outputs.push(std::fs::read(&out).unwrap());
    }
    assert_ne!(outputs[0], outputs[1]);
    assert!(bending[0] > bending[1], "{bending:?}");
    assert!(bending[0] > bending[2], "{bending:?}");
}

#[test]
fn report_is_monotone_and_runs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let (mesh_path, pull) = sphere_pull(&dir);
    let (a, b) = (dir.path().join("a.obj"), dir.path().join("b.obj"));
    let report = dir.path().join("r.json");
    ok(&deformlab(&["deform", s(&mesh_path), s(&pull), "-o", s(&a), "--report", s(&report), "--iters", "40"]));
    ok(&deformlab_env(&["deform", s(&mesh_path), s(&pull), "-o", s(&b), "--iters", "40"], "DEFORMLAB_THREADS", "1"));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let r: Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    let totals: Vec<f64> = r["energies"].as_array().unwrap().iter().map(|e| e["total"].as_f64().unwrap()).collect();
    assert_eq!(totals.len(), r["iterations"].as_u64().unwrap() as usize + 1);
    assert!(totals.windows(2).all(|w| w[1] <= w[0] + 1e-10), "{totals:?}");
    assert_eq!(r["model"], "hybrid");
    assert_eq!(r["lambda"], 0.5);

    // Restarting from the result leaves little to do.
    let c = dir.path().join("c.obj");
    let report2 = dir.path().join("r2.json");
    ok(&deformlab(&["deform", s(&mesh_path), s(&pull), "-o", s(&c), "--warm-start", s(&a), "--report", s(&report2)]));
    let r2: Value = serde_json::from_slice(&std::fs::read(&report2).unwrap()).unwrap();
    assert!(r2["energies"][0]["total"].as_f64().unwrap() <= totals.last().unwrap() + 1e-12);
}

#[test]
fn arap_models_run() {
    let dir = TempDir::new().unwrap();
    let (mesh_path, pull) = sphere_pull(&dir);
    for model in ["spoke", "spoke-rim"] {
        let out = dir.path().join(format!("{model}.obj"));
        let report = dir.path().join(format!("{model}.json"));
        ok(&deformlab(&["deform", s(&mesh_path), s(&pull), "-o", s(&out), "--model", model, "--report", s(&report)]));
        let r: Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
        assert_eq!(r["model"], model);
    }
    let out = dir.path().join("x.obj");
    assert_eq!(code(&deformlab(&["deform", s(&mesh_path), s(&pull), "-o", s(&out), "--model", "spoke", "--rigid-start"])), 2);
}

#[test]
fn energies_from_files() {
    let dir = TempDir::new().unwrap();
    let (rest, fold) = (dir.path().join("grid.obj"), dir.path().join("fold.obj"));
    let angle = FOLD_ANGLE.to_string();
    ok(&deformlab(&["generate", "fold", "--n", "10", "--width", "100", "--angle", &angle, "-o", s(&rest), "--deformed", s(&fold)]));
    for which in ["stretch", "spoke", "spoke-rim", "bending", "hybrid", "singular-value"] {
        let e = deformlab(&["energy", s(&rest), s(&rest), "--which", which]);
        ok(&e);
        assert!(stdout_f64(&e).abs() < 1e-20, "{which}");
    }
    let spoke = stdout_f64(&deformlab(&["energy", s(&rest), s(&fold), "--which", "spoke"]));
    assert!((spoke / FOLD_REFERENCE[0].1 - 1.0).abs() < 0.02, "{spoke}");
    let stretch = stdout_f64(&deformlab(&["energy", s(&rest), s(&fold), "--which", "stretch"]));
    assert!(stretch <= 1e-8);

    // The printed value is the library value to six significant digits.
    let (grid, cyl) = (dir.path().join("g.obj"), dir.path().join("c.obj"));
    ok(&deformlab(&["generate", "cylinder", "--n", "10", "--width", "100", "-o", s(&grid), "--deformed", s(&cyl)]));
    let printed = stdout_f64(&deformlab(&["energy", s(&grid), s(&cyl), "--which", "spoke-rim"]));
    let (m, state) = generate_cylinder_map(10, 100.0).unwrap();
    let ops = DiscreteOperators::new(&m).unwrap();
    let direct = energies::optimal_arap_energy(&m, &ops, &state, ArapMode::SpokeRim).unwrap();
    assert!((printed / direct - 1.0).abs() < 1e-5, "{printed} vs {direct}");

    let other = dir.path().join("other.obj");
    ok(&deformlab(&["generate", "grid", "--n", "4", "-o", s(&other)]));
    assert_eq!(code(&deformlab(&["energy", s(&rest), s(&other), "--which", "spoke"])), 2);
}

#[test]
fn bench_tables() {
    let dir = TempDir::new().unwrap();
    let t1 = dir.path().join("t1.csv");
    ok(&deformlab(&["bench", "fold", "-o", s(&t1)]));
    let csv = std::fs::read_to_string(&t1).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "n,triangles,spoke,spoke_rim,bending");
    assert_eq!(lines.len(), 6);
    assert!(lines[5].starts_with("160,51200,"));

    let t2 = dir.path().join("t2.csv");
    let r = deformlab(&["bench", "cylinder", "-o", s(&t2)]);
    ok(&r);
    assert!(String::from_utf8_lossy(&r.stderr).contains("PASS bending ratio 80->160"));

    let md = deformlab(&["bench", "fold", "--levels", "10", "20", "--markdown"]);
    ok(&md);
    assert!(String::from_utf8_lossy(&md.stdout).contains("| 10 | 200 |"));

    assert_eq!(code(&deformlab(&["bench", "sphere"])), 2);
    assert_eq!(code(&deformlab(&["bench", "fold", "--levels", "1280"])), 2);
    assert_eq!(code(&deformlab(&["bench", "fold", "--levels", "11"])), 2);
}

#[test]
fn thread_variable_is_validated() {
    assert_eq!(code(&deformlab_env(&["bench", "fold", "--levels", "10"], "DEFORMLAB_THREADS", "zero")), 2);
    let one = deformlab_env(&["bench", "fold", "--levels", "10", "20"], "DEFORMLAB_THREADS", "1");
    let many = deformlab_env(&["bench", "fold", "--levels", "10", "20"], "DEFORMLAB_THREADS", "4");
    ok(&one);
    assert_eq!(one.stdout, many.stdout);
}
