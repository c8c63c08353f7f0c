//! Command implementations behind the `deformlab` binary.

use std::fs;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use deformlab::bench::{self, BenchCase};
use deformlab::energies::{self, ArapMode};
use deformlab::mesh::{
    generate_bar, generate_cylinder_map, generate_fold, generate_grid, generate_icosphere, load_obj, load_obj_state,
    save_obj, ConstraintFile, DeformState, MeshError, TriMesh,
};
use deformlab::operators::{DiscreteOperators, MassKind, OperatorError};
use deformlab::solver::{self, IterationReport, SolveError, SolverConfig};
use serde::Serialize;
use thiserror::Error;

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "DEFORMLAB_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Mesh { path: PathBuf, source: MeshError },
    #[error("{0}")]
    Constraint(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    /// 2 usage or unreadable input, 3 constraint or singular system,
    /// 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } | CliError::Mesh { .. } => 2,
            CliError::Constraint(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::NoConstraints | SolveError::Factor(_) | SolveError::ConstraintOutOfRange { .. } => {
                CliError::Constraint(e.to_string())
            }
            SolveError::InvalidConfig(_) | SolveError::Energy(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<OperatorError> for CliError {
    fn from(e: OperatorError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "deformlab", version, about = "Surface deformation with a hybrid stretching and bending energy")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a procedural mesh as OBJ.
    Generate(GenerateArgs),
    /// Deform a mesh under positional constraints.
    Deform(DeformArgs),
    /// Evaluate an energy between a rest mesh and a deformed copy.
    Energy(EnergyArgs),
    /// Refinement tables for the fold and cylinder deformations.
    Bench(BenchArgs),
    /// Run the session server for the interactive editor.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Shape {
    Grid,
    Fold,
    Cylinder,
    Icosphere,
    Bar,
}

#[derive(Debug, clap::Args)]
pub struct GenerateArgs {
    pub shape: Shape,
    #[arg(short, long)]
    pub out: PathBuf,
    /// Grid resolution (grid, fold, cylinder).
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    /// Sheet side length (grid, fold, cylinder).
    #[arg(long, default_value_t = 1.0)]
    pub width: f64,
    /// Fold dihedral angle in radians.
    #[arg(long, default_value_t = bench::FOLD_ANGLE)]
    pub angle: f64,
    /// Icosphere subdivision count.
    #[arg(long, default_value_t = 2)]
    pub sub: u32,
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    /// Bar segments along x, y and z.
    #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"], default_values_t = [8, 2, 2])]
    pub segments: Vec<usize>,
    /// Deformed state output (required for fold and cylinder).
    #[arg(long)]
    pub deformed: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Hybrid,
    Spoke,
    SpokeRim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MassArg {
    Barycentric,
    MixedVoronoi,
}

impl From<MassArg> for MassKind {
    fn from(m: MassArg) -> Self {
        match m {
            MassArg::Barycentric => MassKind::Barycentric,
            MassArg::MixedVoronoi => MassKind::MixedVoronoi,
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct DeformArgs {
    pub mesh: PathBuf,
    /// Constraint file (JSON with `fixed` and `handles` lists).
    pub constraints: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    #[arg(long, default_value_t = 100)]
    pub iters: usize,
    /// Relative energy decrease below which iteration stops.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Per-iteration energy report (JSON).
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModelArg::Hybrid)]
    pub model: ModelArg,
    #[arg(long, value_enum, default_value_t = MassArg::Barycentric)]
    pub mass: MassArg,
    /// Start from this deformed OBJ instead of the rest mesh.
    #[arg(long, conflicts_with = "rigid_start")]
    pub warm_start: Option<PathBuf>,
    /// Start from the rest mesh moved rigidly onto the constraint targets.
    #[arg(long)]
    pub rigid_start: bool,
    /// Solve on a copy scaled to unit diameter.
    #[arg(long)]
    pub scale_normalize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Stretch,
    Spoke,
    SpokeRim,
    Bending,
    Hybrid,
    /// Stretching measured through singular values of each triangle map.
    SingularValue,
}

#[derive(Debug, clap::Args)]
pub struct EnergyArgs {
    pub mesh: PathBuf,
    pub deformed: PathBuf,
    #[arg(long, value_enum)]
    pub which: Which,
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    #[arg(long, value_enum, default_value_t = MassArg::Barycentric)]
    pub mass: MassArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CaseArg {
    Fold,
    Cylinder,
}

#[derive(Debug, clap::Args)]
pub struct BenchArgs {
    #[arg(value_enum)]
    pub case: CaseArg,
    /// Include the 320 and 640 levels.
    #[arg(long)]
    pub full: bool,
    /// Explicit levels, overriding the defaults.
    #[arg(long, num_args = 1.., conflicts_with = "full")]
    pub levels: Option<Vec<usize>>,
    /// Allow levels above the size guard.
    #[arg(long)]
    pub force: bool,
    /// Output path; standard output when omitted.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Emit a markdown table with the reference values instead of CSV.
    #[arg(long)]
    pub markdown: bool,
}

#[derive(Debug, clap::Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = deformlab_service::DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn read_mesh(path: &Path) -> Result<TriMesh, CliError> {
    load_obj(&read(path)?).map_err(|source| CliError::Mesh { path: path.to_path_buf(), source })
}

fn write_obj(path: &Path, mesh: &TriMesh, state: &DeformState) -> Result<(), CliError> {
    let bytes = save_obj(mesh, state).map_err(|e| CliError::Numerical(e.to_string()))?;
    write(path, &bytes)
}

/// Applies [`THREADS_ENV`] to the global thread pool.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    // A pool that is already built keeps its size.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Generate(args) => generate(&args),
        Command::Deform(args) => deform(&args),
        Command::Energy(args) => energy(&args),
        Command::Bench(args) => run_bench(&args),
        Command::Serve(args) => serve(&args),
    }
}

pub fn generate(args: &GenerateArgs) -> Result<(), CliError> {
    let usage = |e: MeshError| CliError::Usage(e.to_string());
    let (mesh, deformed) = match args.shape {
        Shape::Grid => (generate_grid(args.n, args.width).map_err(usage)?, None),
        Shape::Icosphere => (generate_icosphere(args.sub, args.radius).map_err(usage)?, None),
        Shape::Bar => {
            let [x, y, z] = args.segments[..] else {
                return Err(CliError::Usage("--segments takes three counts".into()));
            };
            (generate_bar(x, y, z).map_err(usage)?, None)
        }
        Shape::Fold => {
            let (m, s) = generate_fold(args.n, args.width, args.angle).map_err(usage)?;
            (m, Some(s))
        }
        Shape::Cylinder => {
            let (m, s) = generate_cylinder_map(args.n, args.width).map_err(usage)?;
            (m, Some(s))
        }
    };
    match (&deformed, &args.deformed) {
        (Some(_), None) => return Err(CliError::Usage("fold and cylinder need --deformed <PATH>".into())),
        (None, Some(_)) => return Err(CliError::Usage("--deformed only applies to fold and cylinder".into())),
        _ => {}
    }
    write_obj(&args.out, &mesh, &mesh.rest_state())?;
    if let (Some(state), Some(path)) = (deformed, &args.deformed) {
        write_obj(path, &mesh, &state)?;
    }
    Ok(())
}

/// JSON written by `deform --report`.
#[derive(Debug, Serialize)]
pub struct DeformReport {
    pub model: String,
    pub lambda: f64,
    pub vertex_count: usize,
    pub constraint_count: usize,
    #[serde(flatten)]
    pub iterations: IterationReport,
}

pub fn deform(args: &DeformArgs) -> Result<(), CliError> {
    let mesh = read_mesh(&args.mesh)?;
    let file: ConstraintFile = serde_json::from_slice(&read(&args.constraints)?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.constraints.display())))?;
    let constraints = file
        .to_constraint_set(mesh.vertex_count())
        .map_err(|e| CliError::Constraint(format!("{}: {e}", args.constraints.display())))?;
    let config = SolverConfig {
        lambda: args.lambda,
        max_iterations: args.iters,
        rel_energy_tol: args.tol,
        scale_normalize: args.scale_normalize,
    };
    config.validate()?;
    let ops = DiscreteOperators::with_mass(&mesh, args.mass.into())?;
    let (state, report) = match args.model {
        ModelArg::Hybrid => {
            let start = match (&args.warm_start, args.rigid_start) {
                (Some(path), _) => Some(
                    load_obj_state(&mesh, &read(path)?).map_err(|source| CliError::Mesh { path: path.clone(), source })?,
                ),
                (None, true) => Some(solver::rigid_fit_start(&mesh, &constraints)),
                (None, false) => None,
            };
            solver::solve(&mesh, &ops, &constraints, &config, start.as_ref())?
        }
        ModelArg::Spoke | ModelArg::SpokeRim => {
            if args.warm_start.is_some() || args.rigid_start {
                return Err(CliError::Usage("start states apply to the hybrid model only".into()));
            }
            let mode = if args.model == ModelArg::Spoke { ArapMode::Spoke } else { ArapMode::SpokeRim };
            solver::solve_arap(&mesh, &ops, &constraints, &config, mode)?
        }
    };
    write_obj(&args.out, &mesh, &state)?;
    if let Some(path) = &args.report {
        let model = args.model.to_possible_value().expect("no skipped variants").get_name().to_string();
        let report = DeformReport {
            model,
            lambda: if args.model == ModelArg::Hybrid { args.lambda } else { 1.0 },
            vertex_count: mesh.vertex_count(),
            constraint_count: constraints.len(),
            iterations: report,
        };
        let json = serde_json::to_vec_pretty(&report).map_err(|e| CliError::Numerical(e.to_string()))?;
        write(path, &json)?;
    }
    Ok(())
}

/// Energy of `deformed` against `mesh` with optimally fitted local variables.
pub fn evaluate(mesh: &TriMesh, deformed: &DeformState, which: Which, lambda: f64, mass: MassKind) -> Result<f64, CliError> {
    let ops = DiscreteOperators::with_mass(mesh, mass)?;
    let e = match which {
        Which::Stretch => energies::optimal_stretch_energy(mesh, &ops, deformed),
        Which::Spoke => energies::optimal_arap_energy(mesh, &ops, deformed, ArapMode::Spoke),
        Which::SpokeRim => energies::optimal_arap_energy(mesh, &ops, deformed, ArapMode::SpokeRim),
        Which::Bending => energies::optimal_bending_energy(mesh, &ops, deformed),
        Which::Hybrid => energies::optimal_hybrid_energy(mesh, &ops, deformed, lambda).map(|b| b.total),
        Which::SingularValue => energies::singular_value_stretch(mesh, deformed),
    };
    e.map_err(|e| CliError::Usage(e.to_string()))
}

pub fn energy(args: &EnergyArgs) -> Result<(), CliError> {
    let mesh = read_mesh(&args.mesh)?;
    let deformed = load_obj_state(&mesh, &read(&args.deformed)?)
        .map_err(|source| CliError::Mesh { path: args.deformed.clone(), source })?;
    let value = evaluate(&mesh, &deformed, args.which, args.lambda, args.mass.into())?;
    println!("{}", bench::sig6(value));
    Ok(())
}

pub fn run_bench(args: &BenchArgs) -> Result<(), CliError> {
    let case = match args.case {
        CaseArg::Fold => BenchCase::Fold,
        CaseArg::Cylinder => BenchCase::Cylinder,
    };
    let levels: Vec<usize> = match (&args.levels, args.full) {
        (Some(levels), _) => levels.clone(),
        (None, true) => bench::FULL_LEVELS.to_vec(),
        (None, false) => bench::DEFAULT_LEVELS.to_vec(),
    };
    let rows = bench::run_table(case, &levels, args.force).map_err(|e| match e {
        bench::BenchError::LevelTooLarge(_) | bench::BenchError::NoLevels | bench::BenchError::Mesh(_) => {
            CliError::Usage(e.to_string())
        }
        other => CliError::Numerical(other.to_string()),
    })?;
    let text = if args.markdown { bench::to_markdown(case, &rows) } else { bench::to_csv(&rows) };
    match &args.out {
        Some(path) => write(path, text.as_bytes())?,
        None => print!("{text}"),
    }
    let checks = bench::scaling_checks(case, &rows);
    for c in &checks {
        eprintln!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(CliError::Numerical(format!("{failed} scaling check(s) failed")));
    }
    Ok(())
}

pub fn serve(args: &ServeArgs) -> Result<(), CliError> {
    let addr = SocketAddr::new(args.host, args.port);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    eprintln!("serving on http://{addr}");
    runtime
        .block_on(deformlab_service::serve(addr))
        .map_err(|e| CliError::Usage(format!("cannot serve on {addr}: {e}")))
}
