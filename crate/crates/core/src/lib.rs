//! Spatial traffic modelling for heterogeneous cellular networks.
//!
//! UE locations are generated with two tunable statistics: the normalized
//! coefficient of variation `C` of a tessellation measure (heterogeneity)
//! and the correlation coefficient `rho` between UEs and base stations
//! (mean of a cell potential field). The crate measures both statistics on
//! arbitrary patterns, calibrates and inverts the generator map, and runs
//! downlink SINR/rate Monte Carlo on the generated traffic.

pub mod association;
pub mod calibration;
pub mod error;
pub mod geom;
pub mod io;
pub mod measures;
pub mod netsim;
pub mod pointgen;
pub mod rng;
pub mod traffic;

pub use error::{Error, Result};
