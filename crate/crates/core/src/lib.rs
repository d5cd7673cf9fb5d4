//! Functional-link adaptive filters (FLAFs) in the time and frequency
//! domains, a simulated nonlinear echo path and ERLE-based evaluation.
//!
//! The nonlinear branch of every filter is a functional-link expansion
//! ([`expansions`]) feeding a linear combiner. [`split_time`] adapts it with
//! NLMS sample by sample, [`fd_flaf`] with an overlap-save frequency-domain
//! update, and [`pbfd`] with a partitioned-block update whose latency is one
//! block. [`scenario`] produces far-end/microphone pairs and [`metrics`]
//! scores the residual echo.

pub mod engine;
pub mod error;
pub mod expansions;
pub mod experiment;
pub mod fd_flaf;
pub mod metrics;
pub mod ops;
pub mod pbfd;
pub mod scenario;
pub mod spectral;
pub mod split_time;

pub use engine::{FilterParams, NonlinearBranch};
pub use error::{FlafError, Result};
pub use expansions::{predicted_mul_count, ExpandedFrame, ExpansionConfig, ExpansionKind, Expander};
pub use fd_flaf::FdFlaf;
pub use ops::OpCounter;
pub use pbfd::PbfdFlaf;
pub use spectral::{gradient_constrain, os_convolve, OverlapSaveBuffer, Spectrum, Transform};
pub use split_time::{FlafTd, SplitFlafState};
