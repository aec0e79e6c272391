//! Two-scale finite element solver for nonlinear and hysteretic
//! magnetoquasistatic problems in soft magnetic composites.

pub mod error;
pub mod cell;
pub mod config;
pub mod fem;
pub mod materials;
pub mod mesh;
pub mod macro_solver;
pub mod metrics;
pub mod reference;
pub mod run;

pub use error::{Error, Result};
