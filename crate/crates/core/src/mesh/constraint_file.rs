use serde::{Deserialize, Serialize};

use super::{ConstraintSet, MeshError, Vec3};

/// One pinned vertex in a constraint document.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintEntry {
    pub vertex: usize,
    pub position: [f64; 3],
}

/// On-disk and on-wire constraint document. `fixed` and `handles` are
/// eliminated the same way; the split only tells an editor which vertices
/// the user intends to drag.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintFile {
    #[serde(default)]
    pub fixed: Vec<ConstraintEntry>,
    #[serde(default)]
    pub handles: Vec<ConstraintEntry>,
}

impl ConstraintFile {
    /// Validates indices against `vertex_count` and rejects any vertex that
    /// appears twice across both lists.
    pub fn to_constraint_set(&self, vertex_count: usize) -> Result<ConstraintSet, MeshError> {
        ConstraintSet::from_entries(
            vertex_count,
            self.fixed
                .iter()
                .chain(&self.handles)
                .map(|e| (e.vertex, Vec3::from(e.position))),
        )
    }

    /// Every constraint of `set` listed as fixed.
    pub fn from_constraint_set(set: &ConstraintSet) -> Self {
        ConstraintFile {
            fixed: set
                .iter()
                .map(|(vertex, p)| ConstraintEntry { vertex, position: [p.x, p.y, p.z] })
                .collect(),
            handles: Vec::new(),
        }
    }

    pub fn handle_indices(&self) -> Vec<usize> {
        self.handles.iter().map(|e| e.vertex).collect()
    }
}
