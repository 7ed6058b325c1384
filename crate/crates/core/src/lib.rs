//! Robust control barrier / Lyapunov function controllers for control-affine
//! systems whose drift and input gains depend affinely on a vector of
//! unknown parameters confined to a box.
//!
//! The inner worst case over the parameter box is replaced by its LP dual, so
//! the robust safety and stability conditions stay linear in the decision
//! variables and the controller remains a QP. An integral set-membership
//! identifier shrinks the box online from windowed integrals of the state and
//! input, without ever differentiating the state.
//!
//! Module map:
//!
//! - [`uncertainty`]: parameter boxes, halfspace form, closed-form worst case.
//! - [`model`]: parameter-affine dynamics and the two reference scenarios.
//! - [`certificates`]: barrier / Lyapunov candidates and robust affine constraints.
//! - [`opt`]: dense LP (bounded-variable simplex) and QP (primal active set).
//! - [`controller`]: robust CBF filter, robust CLF policy and their pipeline.
//! - [`smid`]: integral set-membership identification.
//! - [`sim`]: fixed-step closed-loop simulation, logs and metrics.
//! - [`io`]: CSV / JSON run output.

pub mod certificates;
pub mod controller;
pub mod io;
pub mod model;
pub mod opt;
pub mod scenarios;
pub mod sim;
pub mod smid;
pub mod uncertainty;

mod error;

pub use error::{Error, Result};
