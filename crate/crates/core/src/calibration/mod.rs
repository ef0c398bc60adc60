//! LOBSTER ingestion, parameter estimation and synthetic data.

pub mod estimate;
pub mod lobster;
pub mod synthetic;

pub use estimate::{calibrate_files, fit_price_rates, Diagnostics, EstimateSet, Estimator, PriceFit};
pub use lobster::{
    attribute_events, attribute_group, parse_lobster, relative_level, Attribution, BookSnapshot,
    EventType, LobsterEvent, LobsterReader, LobsterSink, LobsterWriter, Role,
};
pub use synthetic::{SyntheticConfig, SyntheticLobster};
