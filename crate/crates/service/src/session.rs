//! Per-session solver state.

use std::sync::Arc;

use deformlab::mesh::{
    generate_bar, generate_grid, generate_icosphere, load_obj, ConstraintFile, DeformState, MeshError, TriMesh, Vec3,
};
use deformlab::operators::{DiscreteOperators, MassKind};
use deformlab::solver::{Deformer, Model, SolveError, SolverConfig};
use deformlab::energies::EnergyBreakdown;
use serde::{Deserialize, Serialize};

/// Procedural mesh accepted by `POST /sessions` in place of OBJ bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeshSpec {
    Grid {
        n: usize,
        #[serde(default = "unit")]
        width: f64,
    },
    Icosphere {
        subdivisions: u32,
        #[serde(default = "unit")]
        radius: f64,
    },
    Bar {
        segments: [usize; 3],
    },
}

fn unit() -> f64 {
    1.0
}

impl MeshSpec {
    pub fn build(&self) -> Result<TriMesh, MeshError> {
        match *self {
            MeshSpec::Grid { n, width } => generate_grid(n, width),
            MeshSpec::Icosphere { subdivisions, radius } => generate_icosphere(subdivisions, radius),
            MeshSpec::Bar { segments: [x, y, z] } => generate_bar(x, y, z),
        }
    }
}

/// Reads a request body as a JSON generator spec if it looks like JSON,
/// otherwise as OBJ text.
pub fn mesh_from_body(body: &[u8]) -> Result<TriMesh, String> {
    let first = body.iter().find(|b| !b.is_ascii_whitespace());
    if first == Some(&b'{') {
        let spec: MeshSpec = serde_json::from_slice(body).map_err(|e| format!("bad generator spec: {e}"))?;
        spec.build().map_err(|e| e.to_string())
    } else {
        load_obj(body).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "camelCase")]
pub struct SessionSummary {
    pub id: String,
    pub vertex_count: usize,
    pub face_count: usize,
    pub surface_area: f64,
    pub diameter: f64,
    pub boundary_vertex_count: usize,
    pub revision: u64,
}

/// Snapshot of the deformed positions with the revision they belong to.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "camelCase")]
pub struct StateSnapshot {
    pub revision: u64,
    pub iteration: usize,
    pub positions: Vec<[f64; 3]>,
}

pub fn to_arrays(positions: &[Vec3]) -> Vec<[f64; 3]> {
    positions.iter().map(|p| [p.x, p.y, p.z]).collect()
}

/// Partial solver configuration update; omitted fields keep their value.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ConfigUpdate {
    pub lambda: Option<f64>,
    pub tol: Option<f64>,
    pub max_iterations: Option<usize>,
}

/// Result of advancing the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct Advance {
    pub energy: EnergyBreakdown,
    pub refactored: bool,
    /// Largest vertex displacement over the last iteration.
    pub last_delta: f64,
}

/// One mesh, its operators, and the warm-started solver editing it.
pub struct Session {
    id: String,
    mesh: Arc<TriMesh>,
    deformer: Deformer,
    constraints: ConstraintFile,
    revision: u64,
}

impl Session {
    pub fn new(id: String, mesh: TriMesh) -> Result<Self, String> {
        let ops = DiscreteOperators::with_mass(&mesh, MassKind::default()).map_err(|e| e.to_string())?;
        let mesh = Arc::new(mesh);
        let deformer = Deformer::new(mesh.clone(), Arc::new(ops), Model::Hybrid, SolverConfig::default())
            .map_err(|e| e.to_string())?;
        Ok(Session { id, mesh, deformer, constraints: ConstraintFile::default(), revision: 0 })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn iteration(&self) -> usize {
        self.deformer.iteration()
    }

    pub fn config(&self) -> &SolverConfig {
        self.deformer.config()
    }

    pub fn constraints(&self) -> &ConstraintFile {
        &self.constraints
    }

    pub fn has_factorization(&self) -> bool {
        self.deformer.has_factorization()
    }

    pub fn positions(&self) -> &[Vec3] {
        self.deformer.positions()
    }

    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            id: self.id.clone(),
            vertex_count: self.mesh.vertex_count(),
            face_count: self.mesh.face_count(),
            surface_area: self.mesh.surface_area(),
            diameter: self.mesh.diameter(),
            boundary_vertex_count: self.mesh.boundary_mask().iter().filter(|&&b| b).count(),
            revision: self.revision,
        }
    }

    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot { revision: self.revision, iteration: self.iteration(), positions: to_arrays(self.positions()) }
    }

    /// Installs a constraint document. Returns whether the factorization
    /// was invalidated (the index set changed).
    pub fn set_constraints(&mut self, file: ConstraintFile) -> Result<bool, String> {
        let set = file.to_constraint_set(self.mesh.vertex_count()).map_err(|e| e.to_string())?;
        let invalidated = self.deformer.set_constraints(set).map_err(|e| e.to_string())?;
        self.constraints = file;
        self.revision += 1;
        Ok(invalidated)
    }

    /// Returns whether the factorization was invalidated (λ changed).
    pub fn update_config(&mut self, update: ConfigUpdate) -> Result<bool, SolveError> {
        let current = *self.deformer.config();
        let config = SolverConfig {
            lambda: update.lambda.unwrap_or(current.lambda),
            rel_energy_tol: update.tol.unwrap_or(current.rel_energy_tol),
            max_iterations: update.max_iterations.unwrap_or(current.max_iterations),
            ..current
        };
        let invalidated = self.deformer.set_config(config)?;
        self.revision += 1;
        Ok(invalidated)
    }

    /// Moves an existing constraint; the document entry follows it.
    pub fn drag(&mut self, vertex: usize, target: Vec3) -> Result<(), SolveError> {
        self.deformer.move_handle(vertex, target)?;
        let position = [target.x, target.y, target.z];
        for e in self.constraints.fixed.iter_mut().chain(self.constraints.handles.iter_mut()) {
            if e.vertex == vertex {
                e.position = position;
            }
        }
        self.revision += 1;
        Ok(())
    }

    pub fn energy(&mut self) -> Result<EnergyBreakdown, SolveError> {
        self.deformer.energy()
    }

    /// Runs `steps` iterations. With zero steps only the energy of the
    /// current state is evaluated and the revision is unchanged.
    pub fn advance(&mut self, steps: usize) -> Result<Advance, SolveError> {
        if self.constraints.fixed.is_empty() && self.constraints.handles.is_empty() {
            return Err(SolveError::NoConstraints);
        }
        if steps == 0 {
            return Ok(Advance { energy: self.deformer.energy()?, refactored: false, last_delta: 0.0 });
        }
        let mut refactored = false;
        if steps > 1 {
            refactored = self.deformer.step(steps - 1)?.refactored;
        }
        let before = DeformState { positions: self.deformer.positions().to_vec() };
        let outcome = self.deformer.step(1)?;
        let last_delta = before.max_distance(&self.deformer.state());
        self.revision += 1;
        Ok(Advance {
            energy: *outcome.energies.last().expect("one step ran"),
            refactored: refactored || outcome.refactored,
            last_delta,
        })
    }
}
