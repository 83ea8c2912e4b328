//! Toolkit for car-following research: turns vehicle trajectories into
//! car-following events, fits classic and learned following models, and
//! benchmarks them by closed-loop rollout.

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod calib;
pub mod cli;
pub mod ddpg;
pub mod error;
pub mod events;
pub mod models;
pub mod neural;
pub mod policy;
pub mod sim;
pub mod synth;
pub mod traj;

pub use error::{Error, Result};
