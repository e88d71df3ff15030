//! Simulation and verification toolkit for weakly interacting
//! diffusions on time-varying inhomogeneous random graphs: particle
//! integrators coupled to their mean-field limit, fluctuation and
//! change-of-measure estimators, and exact combinatorial oracles used
//! to pin the estimators down in tests.

pub mod config;
pub mod error;
pub mod estimators;
pub mod graph;
pub mod oracles;
pub mod particles;
pub mod rng;
pub mod runner;

pub use error::{Error, Result};
