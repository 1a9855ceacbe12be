//! Batch RTK post-processing over one double-difference measurement model.
//!
//! Two estimators share the same observation model:
//!
//! * [`kf_baseline`]: forward, backward and covariance-weighted combined
//!   Kalman filtering, where every state (including ambiguities) is a time
//!   series sampled at the epoch rate.
//! * [`gssm`]: the graphical state space model, where each double-difference
//!   ambiguity arc is a single constant shared by all epochs it spans. The
//!   whole session becomes one sparse weighted least-squares problem, solved
//!   by Gauss-Newton about the forward-filter trajectory.
//!
//! [`sim`] generates synthetic sessions and holds the dense and smoother
//! oracles used by the test suites; [`pipeline`] wires the stages together
//! for the `rtkgssm` binary.

pub mod ambiguity;
pub mod dd_engine;
pub mod error;
pub mod frames;
pub mod gssm;
pub mod kf_baseline;
pub mod metrics;
pub mod obs_model;
pub mod pipeline;
pub mod sim;
pub mod sparse;

pub use error::{Error, Result};
