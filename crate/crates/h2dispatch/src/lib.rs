//! Hydrogen plant management under PV and demand uncertainty by Lagrangian
//! price decomposition.
//!
//! The hourly electricity balance between the plant (electrolyser and
//! compressor) and its supply (PV, PPA contract, grid) is dualized with a
//! deterministic price vector `lambda`. The operational side is solved by
//! tabular stochastic dynamic programming ([`sdp`]), the electricity side by
//! SDDP over a convexified allocation problem ([`sddp`]). [`dual`] ascends the
//! dual function, [`policy`] simulates an admissible policy built from both
//! value families, and [`oracle`] holds brute-force solvers for tiny
//! instances.

pub mod cli;
pub mod config;
pub mod dual;
pub mod error;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod policy;
pub mod scenario;
pub mod sddp;
pub mod sdp;

pub use error::{Error, Result};
