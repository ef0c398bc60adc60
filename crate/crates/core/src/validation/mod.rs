//! Statistical checks across scales: KS and chi-square tests, generator
//! residuals of the microscopic model, ensemble summaries and the
//! micro/meso/macro ladders.

mod generator;
mod ladder;
mod stats;
mod summary;

pub use generator::{
    check_boundary, generator_residual, generator_value, Constant, Cosine, GeneratorResidual,
    Linear, Quadratic, TestFunction,
};
pub use ladder::{
    cross_scale_report, Budget, CellResult, CrossScaleReport, LadderKind, LadderSpec, SeedVerdict,
};
pub use stats::{
    kolmogorov_q, ks_two_sample, poisson_chi_square, reflected_bm_moment, ChiSquareResult,
    KsResult, Moments,
};
pub use summary::{CellSummary, EnsembleSummary};
