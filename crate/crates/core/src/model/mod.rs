//! Shared domain types: the price grid, coefficient tables, books,
//! price-change intensities and regeneration rules.

mod book;
mod coeffs;
pub mod config;
mod dynamics;
mod grid;
mod price;
mod regen;

pub use book::{
    eval_rates_micro, DiscreteBook, LevelRates, MesoBook, MicroBook, ScaleIndex, Volume,
};
pub(crate) use book::level_rates;
pub use coeffs::{AffineTable, CoefficientSet, SideCoefficients};
pub use config::{ModelConfig, ResolvedModel};
pub use dynamics::PriceModel;
pub use grid::{Direction, GridSpec, Side};
pub use price::{theta_rates, PriceChangeSpec, PriceClock, PriceEvent};
pub use regen::{
    regenerate, shift, FromReal, RegenerationKind, RegenerationRule, RegenerationSampler,
};
