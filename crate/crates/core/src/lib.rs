//! Visual shape servoing of a planar elastic rod.
//!
//! The pieces compose into a closed loop: [`world`] renders a centerline for a
//! gripper pose, [`feature`] reduces it to a short feature vector, [`akf`]
//! estimates the feature Jacobian online, and [`mfac`] picks the next pose
//! increment in closed form. [`servo`] wires them together and logs the run.

// Negated comparisons reject NaN in parameter checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod akf;
mod curve;
pub mod error;
pub mod feature;
pub mod mfac;
pub mod servo;
pub mod world;

pub use error::{Error, Result};
