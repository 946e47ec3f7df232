//! Surface finite elements for a reduced nonlocal lipid-raft model on
//! closed triangulated surfaces.
//!
//! The crate provides triangle meshes of spheres and perturbed spheres, P1
//! mass and stiffness assembly, sparse solvers, the semi-implicit time
//! stepper with adaptive step sizes, and the validation problems used by the
//! test suite.

pub mod benchmarks;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod model;
pub mod stepper;
pub mod topology;

pub use fem::{FemError, FemSpace, NodalField};
pub use linalg::{LinalgError, Preconditioner, SolverConfig, SparseMatrix};
pub use mesh::{
    build_bumpy_sphere, build_refined_sphere, load_mesh, MeshError, MeshStats, SurfaceMesh,
};
pub use model::{ExchangeLaw, FreeEnergy, ModelParams, ParamError};
pub use stepper::{
    run, DiagnosticsRecord, Quadrature, RunControl, RunOutput, SimState, StepError, StepperConfig,
    StopReason, Variant,
};
pub use topology::{connected_components, Component};

/// Any error raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Benchmark(#[from] benchmarks::BenchmarkError),
}
