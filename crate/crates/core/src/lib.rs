//! Surface deformation with a hybrid stretching and bending energy.
//!
//! The rest surface is frozen into [`operators::DiscreteOperators`]; the
//! [`solver`] alternates closed-form local fits with a single prefactored
//! sparse solve per iteration. [`bench`] evaluates the refinement tables for
//! the fold and cylinder deformations of a flat sheet.

pub mod mesh;
pub mod operators;
pub mod sparse;
pub mod bench;
pub mod energies;
pub mod solver;
