//! Multi-scale limit order book models.
//!
//! * [`micro`]: Poisson queueing model with unit orders, simulated exactly.
//! * [`meso`]: reflected SDE system obtained in the heavy-traffic limit.
//! * [`spde`]: forward scheme for the pair of reflected stochastic heat
//!   equations obtained as the tick size vanishes.
//!
//! All three share the price mechanism in [`model`]: upward and downward
//! price changes arrive with intensities driven by the bid/ask imbalance
//! near the mid, after which the profiles are regenerated.
//! [`calibration`] fits the macroscopic model to LOBSTER data and
//! [`validation`] checks the scales against each other statistically.

pub mod calibration;
pub mod ensemble;
pub mod error;
pub mod meso;
pub mod micro;
pub mod model;
pub mod output;
pub mod rng;
pub mod spde;
pub mod validation;

pub use error::{Error, ErrorCategory, Result};
