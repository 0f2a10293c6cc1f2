//! Semidefinite programming: a small dense interior-point solver and the
//! weighted trace-norm program built on it.

pub mod delta;
pub mod solver;

pub use delta::{
    build_chsh_decomposition, solve_weighted_delta_sdp, ChshConstraint, ChshDecomposition,
    DualCertificate, SdpSolution, WeightedDeltaProblem,
};
pub use solver::{BlockSdp, SdpOutcome, SolveStatus, SolverOptions};
