//! Digital twin of multi-trap optical manipulation for complex-shaped
//! microrobots.
//!
//! The crate is organized bottom-up:
//!
//! - [`force_model`]: the piecewise trap-force surrogate, its least-squares
//!   fit, and force/torque aggregation over a multi-sphere robot.
//! - [`dynamics`]: overdamped stochastic rigid-body integration with drag,
//!   Brownian kicks and penalty contact.
//! - [`teleop`]: the bilateral hand/trap signal path (filtering, incremental
//!   trap motion, rendered force, trap-loss latching).
//! - [`session`]: scenarios, live sessions, trial logs, replay and the
//!   newline-delimited JSON wire protocol.
//! - [`experiments`]: batch studies (rotation, rendering consistency,
//!   scripted delivery trials).
//!
//! Units throughout: µm, s, pN, pN·µm.

// Negated comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod force_model;
pub mod geometry;
pub mod rng;
pub mod session;
pub mod stats;
pub mod teleop;

pub use error::{Error, Result};
pub use geometry::{Aabb, Pose, Quat, Vec3};
