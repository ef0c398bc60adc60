use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which side of the book a quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Bid,
    Ask,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Bid, Side::Ask];

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Bid => "bid",
            Side::Ask => "ask",
        }
    }
}

/// Direction of a price change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "u")]
    Up,
    #[serde(rename = "d")]
    Down,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Up => 1.0,
            Direction::Down => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "u",
            Direction::Down => "d",
        }
    }
}

/// Relative price grid `{0, 1, ..., N}` measured in ticks from the mid.
///
/// Levels `1..N-1` carry volume; levels `0` and `N` are pinned to zero.
/// The same grid maps onto `[0, 1]` through `x_i = i / N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub num_ticks: usize,
    /// Currency per tick.
    pub tick_size: f64,
    /// Size of one price change, in currency.
    pub jump_size: f64,
}

impl GridSpec {
    pub fn new(num_ticks: usize, tick_size: f64, jump_size: f64) -> Result<Self> {
        let grid = GridSpec {
            num_ticks,
            tick_size,
            jump_size,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Grid whose price jump is exactly one tick.
    pub fn unit_jump(num_ticks: usize, tick_size: f64) -> Result<Self> {
        Self::new(num_ticks, tick_size, tick_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_ticks < 2 {
            return Err(Error::config(format!(
                "grid needs at least 2 ticks, got {}",
                self.num_ticks
            )));
        }
        if !(self.tick_size > 0.0 && self.tick_size.is_finite()) {
            return Err(Error::config("tick size must be positive"));
        }
        if !(self.jump_size > 0.0 && self.jump_size.is_finite()) {
            return Err(Error::config("price jump size must be positive"));
        }
        let ratio = self.jump_size / self.tick_size;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
            return Err(Error::config(format!(
                "jump size {} is not a positive integer multiple of tick size {}",
                self.jump_size, self.tick_size
            )));
        }
        if ratio.round() as usize >= self.num_ticks {
            return Err(Error::config("price jump spans the whole grid"));
        }
        Ok(())
    }

    /// Number of interior levels, `N - 1`.
    pub fn levels(&self) -> usize {
        self.num_ticks - 1
    }

    /// Price jump expressed in grid bins.
    pub fn jump_bins(&self) -> usize {
        (self.jump_size / self.tick_size).round() as usize
    }

    /// Position of level `i` (1-based) on `[0, 1]`.
    pub fn position(&self, level: usize) -> f64 {
        level as f64 / self.num_ticks as f64
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.num_ticks as f64
    }
}
