//! Device-independent entropy bounds for two-basis CHSH-based QKD.
//!
//! From a CHSH value `S` the crate certifies a lower bound `C*(S)` on
//! `λH(A₀|E) + (1−λ)H(A₁|E)`, turns it into asymptotic key rates,
//! thresholds and feasibility maps, and simulates the protocol with honest
//! devices.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the `*F64`
//! aliases below fix the scalar for certified runs.

pub mod bound;
pub mod entropy;
pub mod error;
pub mod io;
pub mod keyrate;
pub mod protocol;
pub mod quantum;
pub mod scalar;
pub mod sdp;

pub use error::{Error, Result};
pub use scalar::Real;

pub type HermitianOp4F64 = quantum::HermitianOp4<f64>;
pub type DensityMatrixF64 = quantum::DensityMatrix<f64>;
pub type MeasurementFrameF64 = quantum::MeasurementFrame<f64>;
pub type ChannelPointF64 = quantum::ChannelPoint<f64>;
pub type PinchingSpecF64 = entropy::PinchingSpec<f64>;
pub type ChshDecompositionF64 = sdp::ChshDecomposition<f64>;
pub type SdpSolutionF64 = sdp::SdpSolution<f64>;
pub type EntropyBoundPointF64 = bound::EntropyBoundPoint<f64>;
pub type BoundCurveF64 = bound::BoundCurve<f64>;
pub type CurveBankF64 = bound::CurveBank<f64>;
pub type UncertaintyRegionF64 = bound::UncertaintyRegion<f64>;
pub type KeyRateInputsF64 = keyrate::KeyRateInputs<f64>;
pub type ExperimentRecordF64 = keyrate::ExperimentRecord<f64>;
pub type FeasibilityGridF64 = keyrate::FeasibilityGrid<f64>;
pub type ProtocolConfigF64 = protocol::ProtocolConfig<f64>;
