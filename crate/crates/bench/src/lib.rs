//! Shared fixtures for the solver benchmarks in `benches/`.

use chmorph::config::MeshSpec;
use chmorph::fem::FemMatrices;
use chmorph::{ModelParams, PhaseState, Simulation, SolverOptions};

/// Default 2D domain at `nx` by `nx / 2` grid points.
pub fn mesh_spec(nx: usize) -> MeshSpec {
    MeshSpec::default().with_counts(&[nx, nx / 2])
}

pub fn matrices(nx: usize) -> FemMatrices {
    FemMatrices::assemble(&mesh_spec(nx).build().expect("valid mesh"))
}

/// Default model and solver with a state advanced by `warm` steps.
pub fn simulation(nx: usize, warm: usize) -> (Simulation, PhaseState) {
    let mesh = mesh_spec(nx).build().expect("valid mesh");
    let sim = Simulation::new(mesh, ModelParams::default(), SolverOptions::default()).expect("valid setup");
    let (state, _) = sim.advance(sim.initial_state(), warm).expect("stable warm-up");
    (sim, state)
}
