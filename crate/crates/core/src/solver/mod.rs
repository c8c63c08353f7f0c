//! Local/global minimisation of the hybrid energy and the ARAP baselines.
//!
//! Each iteration runs one global solve for positions followed by a local
//! refit of rotations (and unit vectors), so every iteration can only lower
//! the energy of the hybrid model.

pub mod global;
pub mod local;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energies::{
    self, ArapMode, EnergyBreakdown, EnergyError, TriangleRotationField, UnitVectorField, VertexRotationField,
};
use crate::mesh::{ConstraintSet, DeformState, MeshError, TriMesh, Vec3};
use crate::operators::{DiscreteOperators, OperatorError};
use crate::sparse::FactorError;

pub use global::{assemble_system, global_step, FactoredSystem, SystemKind};
pub use local::{fit_rotation, fit_vertex_rotation, update_unit_vectors, RotationFit};

/// Absolute slack allowed on the energy sequence before a warning is raised.
pub const MONOTONE_SLACK: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("system singular: translational null space (no constraints)")]
    NoConstraints,
    #[error("constraint vertex {vertex} out of range (mesh has {count} vertices)")]
    ConstraintOutOfRange { vertex: usize, count: usize },
    #[error("system singular: {0}")]
    Factor(#[from] FactorError),
    #[error("factorization was built for a different constraint set or model")]
    StaleFactorization,
    #[error("global solve produced a non-finite position at vertex {vertex}")]
    NonFinite { vertex: usize },
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub lambda: f64,
    pub max_iterations: usize,
    pub rel_energy_tol: f64,
    /// Solve on a copy of the mesh scaled to unit diameter.
    pub scale_normalize: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: 0.5,
            max_iterations: 100,
            rel_energy_tol: 1e-6,
            scale_normalize: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        energies::check_lambda(self.lambda)?;
        if self.max_iterations == 0 {
            return Err(SolveError::InvalidConfig("max_iterations must be positive".into()));
        }
        if !(self.rel_energy_tol > 0.0 && self.rel_energy_tol.is_finite()) {
            return Err(SolveError::InvalidConfig(format!(
                "rel_energy_tol must be positive, got {}",
                self.rel_energy_tol
            )));
        }
        Ok(())
    }
}

/// Energy model being minimised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Hybrid,
    Arap(ArapMode),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    /// Energy at the start and after every iteration.
    pub energies: Vec<EnergyBreakdown>,
    pub converged: bool,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
}

impl IterationReport {
    /// Appends an energy, warning if it rose above the previous one.
    pub fn record(&mut self, energy: EnergyBreakdown) {
        if let Some(prev) = self.energies.last() {
            let rise = energy.total - prev.total;
            if rise > MONOTONE_SLACK + 1e-12 * prev.total.abs() {
                let msg = format!(
                    "energy increased by {rise:.3e} at iteration {} ({:.6e} -> {:.6e})",
                    self.energies.len(),
                    prev.total,
                    energy.total
                );
                log::warn!("{msg}");
                self.warnings.push(msg);
            }
        }
        self.energies.push(energy);
    }

    pub fn totals(&self) -> Vec<f64> {
        self.energies.iter().map(|e| e.total).collect()
    }

    pub fn final_energy(&self) -> Option<EnergyBreakdown> {
        self.energies.last().copied()
    }
}

#[derive(Debug, Clone)]
enum Locals {
    Hybrid { rotations: TriangleRotationField, units: UnitVectorField },
    Arap { rotations: VertexRotationField },
}

/// Local variables fitted to the current positions, with their energy.
#[derive(Debug, Clone)]
struct Fitted {
    locals: Locals,
    energy: EnergyBreakdown,
}

/// Outcome of [`Deformer::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Energy after each completed iteration.
    pub energies: Vec<EnergyBreakdown>,
    /// The system matrix had to be factored for this call.
    pub refactored: bool,
}

/// A warm-started solver bound to one mesh.
///
/// Caches the factorization while the constraint index set and model are
/// unchanged, and the local fit of the current positions between calls, so
/// stepping is independent of how iterations are batched.
#[derive(Debug, Clone)]
pub struct Deformer {
    mesh: Arc<TriMesh>,
    ops: Arc<DiscreteOperators>,
    model: Model,
    config: SolverConfig,
    constraints: ConstraintSet,
    system: Option<FactoredSystem>,
    positions: Vec<Vec3>,
    fitted: Option<Fitted>,
    /// Last unit vectors, used where the current Laplacian vanishes.
    units: UnitVectorField,
    iteration: usize,
}

impl Deformer {
    pub fn new(mesh: Arc<TriMesh>, ops: Arc<DiscreteOperators>, model: Model, config: SolverConfig) -> Result<Self, SolveError> {
        config.validate()?;
        if ops.vertex_count() != mesh.vertex_count() {
            return Err(MeshError::LengthMismatch { expected: mesh.vertex_count(), found: ops.vertex_count() }.into());
        }
        Ok(Deformer {
            positions: mesh.positions().to_vec(),
            units: local::initial_unit_vectors(&ops),
            mesh,
            ops,
            model,
            config,
            constraints: ConstraintSet::new(),
            system: None,
            fitted: None,
            iteration: 0,
        })
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn operators(&self) -> &DiscreteOperators {
        &self.ops
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn state(&self) -> DeformState {
        DeformState { positions: self.positions.clone() }
    }

    /// Total iterations run since construction.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn has_factorization(&self) -> bool {
        self.system.is_some()
    }

    /// Replaces the current positions (warm start).
    pub fn set_state(&mut self, state: DeformState) -> Result<(), SolveError> {
        if state.len() != self.mesh.vertex_count() {
            return Err(MeshError::LengthMismatch { expected: self.mesh.vertex_count(), found: state.len() }.into());
        }
        if let Some(v) = state.positions.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(MeshError::NonFinite { vertex: v }.into());
        }
        self.positions = self.constraints.impose(&state).positions;
        self.fitted = None;
        Ok(())
    }

    /// Installs a new constraint set and moves the pinned vertices to their
    /// targets. Returns whether the cached factorization was dropped, which
    /// happens exactly when the index set changed.
    pub fn set_constraints(&mut self, constraints: ConstraintSet) -> Result<bool, SolveError> {
        if let Some((v, _)) = constraints.iter().find(|(v, _)| *v >= self.mesh.vertex_count()) {
            return Err(SolveError::ConstraintOutOfRange { vertex: v, count: self.mesh.vertex_count() });
        }
        let invalidated = !constraints.same_indices(&self.constraints);
        if invalidated {
            self.system = None;
        }
        self.constraints = constraints;
        for (v, p) in self.constraints.iter() {
            self.positions[v] = *p;
        }
        self.fitted = None;
        Ok(invalidated)
    }

    /// Moves one existing handle. Never invalidates the factorization.
    pub fn move_handle(&mut self, vertex: usize, target: Vec3) -> Result<(), SolveError> {
        if !self.constraints.contains(vertex) {
            return Err(SolveError::InvalidConfig(format!("vertex {vertex} is not constrained")));
        }
        if !target.iter().all(|c| c.is_finite()) {
            return Err(MeshError::NonFinite { vertex }.into());
        }
        self.constraints.insert(vertex, target);
        self.positions[vertex] = target;
        self.fitted = None;
        Ok(())
    }

    /// Returns whether the factorization was dropped (λ changed).
    pub fn set_config(&mut self, config: SolverConfig) -> Result<bool, SolveError> {
        config.validate()?;
        let invalidated = config.lambda != self.config.lambda && self.model == Model::Hybrid;
        if invalidated {
            self.system = None;
        }
        if config.lambda != self.config.lambda {
            self.fitted = None;
        }
        self.config = config;
        Ok(invalidated)
    }

    pub fn set_lambda(&mut self, lambda: f64) -> Result<bool, SolveError> {
        self.set_config(SolverConfig { lambda, ..self.config })
    }

    fn kind(&self) -> SystemKind {
        match self.model {
            Model::Hybrid => SystemKind::Hybrid { lambda: self.config.lambda },
            Model::Arap(mode) => SystemKind::Arap(mode),
        }
    }

    /// Factors the system if needed; returns whether it did.
    pub fn ensure_system(&mut self) -> Result<bool, SolveError> {
        let kind = self.kind();
        if let Some(sys) = &self.system {
            if sys.matches(kind, &self.constraints) {
                return Ok(false);
            }
        }
        self.system = None;
        self.system = Some(assemble_system(&self.mesh, &self.ops, kind, &self.constraints)?);
        Ok(true)
    }

    fn fit(&mut self) -> Result<(), SolveError> {
        let state = DeformState { positions: std::mem::take(&mut self.positions) };
        let result = self.fit_state(&state);
        self.positions = state.positions;
        self.fitted = Some(result?);
        Ok(())
    }

    fn fit_state(&mut self, state: &DeformState) -> Result<Fitted, SolveError> {
        let (mesh, ops) = (&*self.mesh, &*self.ops);
        Ok(match self.model {
            Model::Hybrid => {
                let rotations = local::fit_triangle_rotations(mesh, ops, state);
                let units = local::update_unit_vectors(ops, state, &self.units);
                self.units = units.clone();
                let energy = energies::hybrid_energy(mesh, ops, state, &rotations, &units, self.config.lambda)?;
                Fitted { locals: Locals::Hybrid { rotations, units }, energy }
            }
            Model::Arap(mode) => {
                let rotations = local::fit_vertex_rotations(mesh, ops, state, mode);
                let energy = EnergyBreakdown::stretch_only(energies::arap_energy(mesh, ops, state, &rotations, mode)?);
                Fitted { locals: Locals::Arap { rotations }, energy }
            }
        })
    }

    /// Energy of the current positions with fitted local variables.
    pub fn energy(&mut self) -> Result<EnergyBreakdown, SolveError> {
        if self.fitted.is_none() {
            self.fit()?;
        }
        Ok(self.fitted.as_ref().map(|f| f.energy).expect("fitted above"))
    }

    fn iterate_once(&mut self) -> Result<EnergyBreakdown, SolveError> {
        self.energy()?;
        let sys = self.system.as_ref().ok_or(SolveError::StaleFactorization)?;
        let fitted = self.fitted.as_ref().expect("fitted by energy()");
        let next = match (&fitted.locals, self.model) {
            (Locals::Hybrid { rotations, units }, Model::Hybrid) => {
                global::global_step(sys, &self.mesh, &self.ops, rotations, units, self.config.lambda, &self.constraints)?
            }
            (Locals::Arap { rotations }, Model::Arap(mode)) => {
                global::arap_global_step(sys, &self.mesh, &self.ops, rotations, mode, &self.constraints)?
            }
            _ => unreachable!("local fields always match the model"),
        };
        self.positions = next;
        self.fitted = None;
        self.iteration += 1;
        self.energy()
    }

    /// Runs exactly `steps` iterations.
    pub fn step(&mut self, steps: usize) -> Result<StepOutcome, SolveError> {
        if self.constraints.is_empty() {
            return Err(SolveError::NoConstraints);
        }
        let refactored = self.ensure_system()?;
        let mut energies = Vec::with_capacity(steps);
        for _ in 0..steps {
            energies.push(self.iterate_once()?);
        }
        Ok(StepOutcome { energies, refactored })
    }

    /// Iterates until the relative energy decrease falls below the
    /// configured tolerance or the iteration budget is spent.
    pub fn run(&mut self) -> Result<IterationReport, SolveError> {
        if self.constraints.is_empty() {
            return Err(SolveError::NoConstraints);
        }
        self.ensure_system()?;
        let floor = 1e-24 * (1.0 + self.ops.diameter.powi(2));
        let mut report = IterationReport::default();
        report.record(self.energy()?);
        if report.energies[0].total <= floor {
            report.converged = true;
            return Ok(report);
        }
        for _ in 0..self.config.max_iterations {
            let prev = report.energies.last().expect("initial energy recorded").total;
            let e = self.iterate_once()?;
            report.record(e);
            report.iterations += 1;
            if prev - e.total <= self.config.rel_energy_tol * prev || e.total <= floor {
                report.converged = true;
                break;
            }
        }
        Ok(report)
    }
}

fn run_model(
    mesh: &TriMesh,
    ops: &DiscreteOperators,
    constraints: &ConstraintSet,
    config: &SolverConfig,
    warm_start: Option<&DeformState>,
    model: Model,
) -> Result<(DeformState, IterationReport), SolveError> {
    config.validate()?;
    if constraints.is_empty() {
        return Err(SolveError::NoConstraints);
    }
    if config.scale_normalize {
        let d = mesh.diameter();
        let scaled = mesh.scaled(1.0 / d);
        let scaled_ops = DiscreteOperators::with_mass(&scaled, ops.mass_kind)?;
        let warm = warm_start.map(|s| DeformState { positions: s.positions.iter().map(|p| p / d).collect() });
        let (state, report) = run_model(
            &scaled,
            &scaled_ops,
            &constraints.map_targets(|p| p / d),
            &SolverConfig { scale_normalize: false, ..*config },
            warm.as_ref(),
            model,
        )?;
        let positions = state.positions.iter().map(|p| p * d).collect();
        return Ok((DeformState { positions }, report));
    }
    let mut deformer = Deformer::new(Arc::new(mesh.clone()), Arc::new(ops.clone()), model, *config)?;
    deformer.set_constraints(constraints.clone())?;
    if let Some(s) = warm_start {
        deformer.set_state(s.clone())?;
    }
    let report = deformer.run()?;
    Ok((deformer.state(), report))
}

/// Rest mesh moved by the rigid motion that best fits the constrained rest
/// positions to their targets, with the targets imposed.
///
/// A start for large handle motions, where the rest state can lead the
/// alternation into a local minimum. One constraint gives a translation only.
pub fn rigid_fit_start(mesh: &TriMesh, constraints: &ConstraintSet) -> DeformState {
    let rest = mesh.positions();
    let n = constraints.len().max(1) as f64;
    let c_rest = constraints.iter().map(|(v, _)| rest[v]).sum::<Vec3>() / n;
    let c_target = constraints.iter().map(|(_, p)| *p).sum::<Vec3>() / n;
    let mut cov = crate::energies::Mat3::zeros();
    for (v, p) in constraints.iter() {
        cov += (p - c_target) * (rest[v] - c_rest).transpose();
    }
    let r = local::rotation_from_covariance(&cov).rotation;
    let moved = DeformState { positions: rest.iter().map(|x| c_target + r * (x - c_rest)).collect() };
    constraints.impose(&moved)
}

/// Minimises the hybrid energy from `warm_start` (default: rest positions
/// with the constraint targets imposed).
pub fn solve(
    mesh: &TriMesh,
    ops: &DiscreteOperators,
    constraints: &ConstraintSet,
    config: &SolverConfig,
    warm_start: Option<&DeformState>,
) -> Result<(DeformState, IterationReport), SolveError> {
    run_model(mesh, ops, constraints, config, warm_start, Model::Hybrid)
}

/// ARAP baseline with per-vertex rotations.
pub fn solve_arap(
    mesh: &TriMesh,
    ops: &DiscreteOperators,
    constraints: &ConstraintSet,
    config: &SolverConfig,
    mode: ArapMode,
) -> Result<(DeformState, IterationReport), SolveError> {
    run_model(mesh, ops, constraints, config, None, Model::Arap(mode))
}
