//! Minimal positive solutions of Schrödinger-type problems `-Δu = qu + f`
//! on the unit disk, the unit ball and all of three-space, built from
//! iterated Green kernels.

pub mod assembly;
pub mod cache;
pub mod conditions;
pub mod config;
pub mod domain;
pub mod error;
pub mod estimates;
pub mod mesh;
pub mod operators;
mod real;
pub mod report;
pub mod riccati;
pub mod run;
pub mod solver;

pub use error::{Error, Result};
