//! Bilevel search for symbolic constitutive laws.
//!
//! An outer evolutionary loop (LLM-backed or scripted) proposes law programs
//! in a small tensor-expression language; an inner loop fits each law's
//! continuous parameters by Adam over a differentiable MLS-MPM simulator
//! against a target particle trajectory.

pub mod dsl;
pub mod gradcheck;
pub mod mpm;
pub mod config;
pub mod opt;
pub mod proposer;
pub mod runlog;
pub mod search;
pub mod sgtr;
pub mod tasks;
pub mod linalg;

pub use dsl::{parse_law, pretty_print, LawKind, LawProgram};
pub use mpm::Validity;
