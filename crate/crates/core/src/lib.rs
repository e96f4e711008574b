//! Utility-driven TTL caching toolkit.
//!
//! A TTL cache keeps every file behind its own timer, which makes per-file
//! hit probabilities directly controllable. This crate turns that control
//! into an optimization workflow:
//!
//! * [`utility`]: utility families over hit probabilities (isoelastic,
//!   FIFO-equivalent, LRU-equivalent) and convex storage costs;
//! * [`solver`]: offline solves for the optimal timers under a hard
//!   expected-occupancy budget or a soft storage penalty, characteristic
//!   times, market-equilibrium prices and buffer sizing;
//! * [`cache`]: an exact discrete-event TTL cache with Poisson/Zipf
//!   workload generation and steady-state metrics;
//! * [`control`]: online controllers (dual, primal, primal-dual, hit/miss
//!   increment rules) plus rate and hit-probability estimators;
//! * [`fluid`]: deterministic fluid limits of the controllers with
//!   Lyapunov-value tracking.
//!
//! All numerics are generic over the scalar type through [`scalar::Real`]
//! (`f32` or `f64`); the `f64` instantiations are aliased at the crate
//! root.

pub mod cache;
pub mod catalog;
pub mod control;
pub mod error;
pub mod fluid;
pub mod scalar;
pub mod solver;
pub mod utility;

pub use error::{Error, Result};
pub use scalar::Real;

/// `f64` instantiations of the core types.
pub type Utility = utility::UtilityFunction<f64>;
pub type Cost = utility::CostFunction<f64>;
pub type Files = catalog::Catalog<f64>;
pub type Alloc = solver::Allocation<f64>;
pub type Cache = cache::TtlCache<f64>;
pub type Stream = cache::RequestStream<f64>;
pub type Ctrl = control::Controller<f64>;
