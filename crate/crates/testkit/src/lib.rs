//! Slow, obviously-correct reference implementations used to check the
//! optimized code paths, plus seeded random fixtures.
//!
//! Nothing here calls the algorithm it is meant to check; only the data
//! types are shared.

pub mod cluster;
pub mod fixtures;
pub mod geometry;
pub mod metrics;
pub mod nn;
pub mod projection;
pub mod tables;
