//! Robust microservice deployment on LEO satellite constellations.
//!
//! The crate models a Walker-Star constellation as a compute platform,
//! evaluates latency and cost of deployment schemes, routes per-slot tasks,
//! and trains deployment policies with proximal policy optimization, either
//! alone or against a request-perturbing adversary.

pub mod constellation;
pub mod env;
pub mod error;
pub mod experiment;
pub mod game;
pub mod io;
pub mod learn;
pub mod perf;
pub mod routing;
pub mod workload;

pub use error::{Error, Result};
