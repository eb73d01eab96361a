//! Phase-field morphology solver for ternary Cahn-Hilliard mixtures.

pub mod amg;
pub mod config;
pub mod error;
pub mod fem;
pub mod io;
pub mod krylov;
pub mod mesh;
pub mod physics;
pub mod precond;
pub mod simulation;
pub mod sparse;
pub mod studies;

pub use error::{Error, Result};
pub use config::{load_config, parse_config, MeshSpec, RunConfig};
pub use mesh::MeshGrid;
pub use physics::{ModelParams, Species};
pub use simulation::{PhaseState, Simulation, SolverOptions, StepReport};
