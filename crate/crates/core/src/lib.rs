//! Contact-aware trajectory tracking for stiffness-controlled planar arms.
//!
//! The crate is organized bottom-up:
//!
//! - [`kinematics`]: planar arm forward kinematics and point Jacobians.
//! - [`geometry`]: signed distances to static obstacles and contact detection.
//! - [`qp`]: dense active-set QP solver with KKT certification.
//! - [`quasistatic`]: equilibrium prediction for stiffness-controlled arms,
//!   weighted projections, and the ground-truth simulator.
//! - [`sensing`]: synthetic contact estimates and the adaptive damping weight.
//! - [`controllers`]: greedy, null-space projection, and the two QP controllers.
//! - [`harness`]: scenario files, the closed loop, metrics, and artifacts.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controllers;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod kinematics;
pub mod qp;
pub mod quasistatic;
pub mod sensing;

pub use error::{Error, Result};
