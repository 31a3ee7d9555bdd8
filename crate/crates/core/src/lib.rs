//! Simulation and predictive dispatch scheduling for robot-aided manual
//! harvesting.
//!
//! The crate models a crew of pickers working a furrowed field block with the
//! help of a shared team of crop-transport robots. It provides:
//!
//! - [`field`]: field geometry and Manhattan path lengths along headland and
//!   furrow segments,
//! - [`sim`]: a discrete-time hybrid simulator of coupled picker and robot
//!   finite state machines,
//! - [`request`]: transport-request generation, both exact and with injected
//!   prediction uncertainty, plus the closed-form fill-ratio threshold,
//! - [`det`]: deterministic dispatch scheduling of the robot team as
//!   identical parallel machines with release dates (exact branch-and-bound,
//!   SRPT-CONVERT approximation, brute-force oracle),
//! - [`msa`]: online stochastic scheduling by the multiple scenario approach
//!   with request rejection and consensus scoring,
//! - [`metrics`]: per-tray and pooled performance metrics, Monte-Carlo
//!   aggregation, and cart-log tray extraction,
//! - [`config`]: run configuration loading and validation.

pub mod config;
pub mod det;
pub mod dist;
pub mod error;
pub mod field;
pub mod instance;
pub mod metrics;
pub mod msa;
pub mod request;
pub mod sim;

pub use config::RunConfig;
pub use error::Error;
