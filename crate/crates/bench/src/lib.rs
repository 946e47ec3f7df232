//! Shared fixtures for the kernel benchmarks.

use raftfem::benchmarks::InitialData;
use raftfem::stepper::SimState;
use raftfem::{build_refined_sphere, FemSpace, ModelParams};

pub fn sphere(level: u32) -> FemSpace {
    FemSpace::new(build_refined_sphere(level).expect("sphere mesh"))
}

/// Baseline reaction-law state with the default random perturbation.
pub fn baseline_state(space: &FemSpace) -> (SimState, ModelParams) {
    let params = ModelParams::default();
    (InitialData::default().state(space, &params), params)
}
