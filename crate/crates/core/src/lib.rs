//! Density-matrix simulation of DEJMPS entanglement purification under
//! combined amplitude-damping and dephasing noise.
//!
//! The crate pairs an analytic Bell-coefficient recurrence ([`dejmps`]) with a
//! circuit-level simulation of the same round on a four-qubit register, and a
//! Monte Carlo engine ([`mcengine`]) that sweeps the `(γ, p)` noise plane.
//! [`report`] turns sweeps into CSV/JSON tables, contours and plot files.

pub mod bell;
pub mod channels;
pub mod dejmps;
pub mod error;
pub mod mcengine;
pub mod qmat;
pub mod report;

pub use error::{Error, Result};
