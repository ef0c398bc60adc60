//! Per-checkpoint, per-level statistics of an ensemble.

use serde::Serialize;

use super::stats::Moments;
use crate::error::{Error, Result};
use crate::model::Side;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub time: f64,
    pub side: &'static str,
    pub level: usize,
    pub mean: f64,
    pub variance: f64,
    /// Empirical CDF evaluated at `EnsembleSummary::grid`.
    pub cdf: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub samples: usize,
    pub seeds: Vec<u64>,
    pub grid: Vec<f64>,
    pub cells: Vec<CellSummary>,
}

impl EnsembleSummary {
    pub fn new(samples: usize, seeds: Vec<u64>, grid: Vec<f64>) -> Result<Self> {
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("CDF grid must be strictly increasing"));
        }
        Ok(EnsembleSummary {
            samples,
            seeds,
            grid,
            cells: Vec::new(),
        })
    }

    /// Adds one cell; `values` must hold one entry per sample.
    pub fn add(&mut self, time: f64, side: Side, level: usize, values: &[f64]) -> Result<()> {
        if values.len() != self.samples {
            return Err(Error::domain(format!(
                "expected {} samples, got {}",
                self.samples,
                values.len()
            )));
        }
        let m = Moments::of(values);
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let cdf = self
            .grid
            .iter()
            .map(|&x| sorted.partition_point(|&v| v <= x) as f64 / n)
            .collect();
        self.cells.push(CellSummary {
            time,
            side: side.as_str(),
            level,
            mean: m.mean,
            variance: m.variance,
            cdf,
        });
        Ok(())
    }

    /// Adds every level of both sides from per-sample books.
    pub fn add_books<'a, I>(&mut self, time: f64, books: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a crate::model::MesoBook>,
    {
        let books: Vec<&crate::model::MesoBook> = books.into_iter().collect();
        let levels = books.first().map_or(0, |b| b.levels());
        for side in Side::BOTH {
            for k in 0..levels {
                let values: Vec<f64> = books.iter().map(|b| b.side(side)[k]).collect();
                self.add(time, side, k + 1, &values)?;
            }
        }
        Ok(())
    }

    pub fn cell(&self, time: f64, side: Side, level: usize) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.time == time && c.side == side.as_str() && c.level == level)
    }
}
