//! Two-phase salt-and-pepper noise removal.
//!
//! Phase one flags impulse pixels with an adaptive median filter
//! ([`amf::adaptive_median`]). Phase two restores only the flagged pixels by
//! minimizing an edge-preserving functional ([`functional`]) with relaxed
//! coordinate-wise Newton sweeps, Newton steps solved by MINRES, or nonlinear
//! conjugate gradients, all under a continuation schedule on the smoothing
//! parameter ([`restoration`]).

pub mod amf;
pub mod bench;
pub mod error;
pub mod functional;
pub mod image;
pub mod metrics;
pub mod minres;
pub mod noise;
pub mod restoration;

pub use amf::{adaptive_median, AmfConfig, NoiseMask};
pub use error::{Error, Result};
pub use functional::{PotentialParams, RestorationState, SparseSymSystem};
pub use image::{GrayImage, PixelCoord};
pub use minres::{minres_solve, MinresConfig};
pub use noise::{corrupt, NoiseSpec};
pub use restoration::{restore, ContinuationSchedule, Method, SolverReport, StopCriteria};
