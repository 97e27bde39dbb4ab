//! Dual-level model predictive control for two-timescale linear systems.
//!
//! A slow-rate controller plans on the `N`-step resampled model and a fast-rate
//! shrinking-horizon controller corrects the plan every basic step. The
//! incremental variant plans in velocity form with an interpolation weight on
//! the fast outputs. [`sim`] runs either scheme, or a PID baseline, in closed
//! loop on the linear plant.

mod error;
pub mod model;
pub mod mpc_high;
pub mod mpc_low;
pub mod numerics;
mod prediction;
pub mod qp;
pub mod scenario;
pub mod sim;
pub mod terminal;
pub mod trace;

pub use error::Error;
