//! Certified lower bound `C*(S)` on `λH(A₀|E) + (1−λ)H(A₁|E)`.

pub mod hull;
pub mod net;
pub mod pipeline;
pub mod region;

pub use hull::{compute_curve, convexify_curve, BoundCurve, CurveBank, HullMode};
pub use net::{LipschitzConstants, LipschitzMode, NetConfig};
pub use pipeline::{min_over_b, qubit_bound_at, CellCertificate, EntropyBoundPoint, MinOverB};
pub use region::{uncertainty_region, HalfPlane, UncertaintyRegion};
