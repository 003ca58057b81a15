//! Monte Carlo laboratory for jump-diffusion processes.
//!
//! The generator under study is
//!
//! ```text
//! L f(x) = ½ Σ a_ij(x) ∂_ij f(x) + Σ b_i(x) ∂_i f(x)
//!        + ∫ [f(x+h) − f(x) − 1(|h|≤1) h·∇f(x)] n(x,h) dh
//! ```
//!
//! The crate is organised bottom-up:
//!
//! * [`operator`]: diffusion and drift fields plus their validators.
//! * [`kernel`]: jump kernels with sampling envelopes, quadrature and the
//!   comparability-ratio estimator.
//! * [`sim`]: Euler stepping with envelope thinning and Meyer's overlay.
//! * [`geometry`]: balls, cubes, exit and hitting detection.
//! * [`estimators`]: Monte Carlo estimators with confidence intervals.
//! * [`scenario`]: declarative scenario files and deterministic reports.

pub mod error;
pub mod estimators;
pub mod geometry;
pub mod kernel;
pub mod linalg;
pub mod operator;
pub mod params;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use geometry::{Domain, StopKind, StopResult};
pub use kernel::{make_kernel, JumpKernel};
pub use operator::{DiffusionField, DriftField, OperatorSpec};
pub use rng::{RngStream, SimRng};
pub use sim::{PathSkeleton, SimParams, Simulator};
pub use stats::{Estimate, ScalingFit};
