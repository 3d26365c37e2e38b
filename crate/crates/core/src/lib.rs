//! Gauge-covariant calculus on the half-space: connection forms, parallel
//! transport, curvature and holonomy, covariant fractional seminorms, and the
//! trace and extension operators between the half-space and its boundary.

pub mod cli;
pub mod config;
pub mod connection;
pub mod error;
pub mod grid;
pub mod io;
pub mod lie;
pub mod numerics;
pub mod registry;
pub mod report;
pub mod sobolev;
pub mod trace_ext;
pub mod transport;

pub use error::{Error, Result};
