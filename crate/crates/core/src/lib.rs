//! Dynamic bi-objective single-vehicle routing.
//!
//! A vehicle drives an open path from depot `1` to depot `N`, visiting all
//! mandatory customers and any subset of dynamic customers, which request
//! service over time. Time is split into eras; at every era boundary an
//! evolutionary multi-objective optimizer proposes trade-offs between tour
//! length and unserved requests, a decision maker picks one, and the part of
//! the tour driven until the next boundary becomes irreversible.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix it to `f64`, which the harness and service use.

pub mod decisions;
pub mod dynamics;
pub mod emoa;
pub mod error;
pub mod harness;
pub mod instance;
pub mod localsearch;
pub mod metrics;
pub mod model;
pub mod rng;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Instance = instance::Instance<f64>;
pub type Customer = instance::Customer<f64>;
pub type Individual = model::Individual<f64>;
pub type ObjectiveVector = model::ObjectiveVector<f64>;
pub type CommittedState = model::CommittedState<f64>;
pub type ApproximationSet = model::ApproximationSet<f64>;
pub type EmoaConfig = emoa::EmoaConfig<f64>;
pub type DecisionPath = decisions::DecisionPath<f64>;
pub type EraTrace = dynamics::EraTrace<f64>;
