//! Coordinated multicast beamforming for multi-cell multigroup networks.
//!
//! Sum transmit power is minimized subject to per-user SINR targets. The
//! non-convex problem is relaxed to an SDP and solved either centrally or
//! by primal decomposition over a simulated backhaul; higher-rank relaxed
//! solutions are turned into feasible beamformers by Gaussian randomization.

pub mod backhaul;
pub mod baselines;
pub mod centralized;
pub mod distributed;
pub mod error;
pub mod experiment;
pub mod model;
pub mod randomization;

pub use conic::C64;
pub use error::{BeamError, Result};
