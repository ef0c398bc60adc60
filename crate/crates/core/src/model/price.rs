use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::book::{DiscreteBook, Volume};
use super::grid::Direction;
use crate::error::{Error, Result};

/// Parameters of the imbalance-driven price-change intensities
///
/// ```text
/// theta_u = gamma * max(int_0^w (u_b - u_a) dx, 0) + delta
/// theta_d = gamma * max(int_0^w (u_a - u_b) dx, 0) + delta
/// ```
///
/// where profiles are linearly interpolated between grid points `i / N`
/// and pinned to zero at `x = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceChangeSpec {
    /// Rate per unit of imbalance mass.
    pub gamma: f64,
    /// Exogenous rate in each direction.
    pub delta: f64,
    /// Width of the imbalance window on `[0, 1]`.
    pub window: f64,
}

impl PriceChangeSpec {
    pub fn new(gamma: f64, delta: f64, window: f64) -> Result<Self> {
        let spec = PriceChangeSpec {
            gamma,
            delta,
            window,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::config(format!("delta must be >= 0, got {}", self.delta)));
        }
        if self.delta == 0.0 {
            log::warn!("delta = 0: price-change rates have no positive lower bound");
        }
        if !(self.window > 0.0 && self.window <= 1.0) {
            return Err(Error::config(format!(
                "imbalance window {} must lie in (0, 1]",
                self.window
            )));
        }
        Ok(())
    }

    /// Signed imbalance mass `int_0^w (u_b - u_a) dx` of a discrete book
    /// whose volumes are multiplied by `scale` before integrating.
    pub fn imbalance_mass<V: Volume>(&self, bid: &[V], ask: &[V], scale: f64) -> Result<f64> {
        if bid.len() != ask.len() || bid.is_empty() {
            return Err(Error::domain("bid and ask profiles must have equal, nonzero length"));
        }
        if !(self.window > 0.0 && self.window <= 1.0) {
            return Err(Error::config(format!(
                "imbalance window {} is not inside [0, 1]",
                self.window
            )));
        }
        Ok(window_integral(bid.len() + 1, self.window, |i| {
            scale * (bid[i - 1].to_f64() - ask[i - 1].to_f64())
        }))
    }

    /// `(theta_u, theta_d)` for profiles scaled by `scale`.
    pub fn rates_scaled<V: Volume>(&self, bid: &[V], ask: &[V], scale: f64) -> Result<(f64, f64)> {
        let mass = self.imbalance_mass(bid, ask, scale)?;
        Ok(self.rates_from_mass(mass))
    }

    #[inline]
    pub fn rates_from_mass(&self, mass: f64) -> (f64, f64) {
        (
            self.gamma * mass.max(0.0) + self.delta,
            self.gamma * (-mass).max(0.0) + self.delta,
        )
    }
}

/// `(theta_u, theta_d)` for a book whose volumes are already in model units.
pub fn theta_rates<V: Volume>(book: &DiscreteBook<V>, spec: &PriceChangeSpec) -> Result<(f64, f64)> {
    spec.rates_scaled(&book.bid, &book.ask, 1.0)
}

/// Integral over `[0, width]` of the piecewise linear interpolant through
/// `(i / N, value(i))` for `i = 1..N-1`, with zero at both ends.
pub(crate) fn window_integral(num_ticks: usize, width: f64, value: impl Fn(usize) -> f64) -> f64 {
    let h = 1.0 / num_ticks as f64;
    let at = |i: usize| {
        if i == 0 || i >= num_ticks {
            0.0
        } else {
            value(i)
        }
    };
    let cells = width * num_ticks as f64;
    let snapped = cells.round();
    let (whole, frac) = if (cells - snapped).abs() < 1e-9 {
        (snapped as usize, 0.0)
    } else {
        (cells.floor() as usize, cells - cells.floor())
    };
    let whole = whole.min(num_ticks);
    let mut total = 0.0;
    for j in 0..whole {
        total += 0.5 * h * (at(j) + at(j + 1));
    }
    if frac > 0.0 && whole < num_ticks {
        let left = at(whole);
        let right = left + frac * (at(whole + 1) - left);
        total += 0.5 * h * frac * (left + right);
    }
    total
}

/// A realised price change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceEvent<V> {
    pub time: f64,
    pub direction: Direction,
    pub new_mid: f64,
    /// Book immediately before the change.
    pub pre: DiscreteBook<V>,
}

/// Integrated intensities racing against unit-exponential thresholds.
///
/// A change fires in direction `k` when `A_k >= Y_k`; both accumulators
/// then reset and fresh thresholds are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceClock {
    pub accumulated_up: f64,
    pub accumulated_down: f64,
    pub threshold_up: f64,
    pub threshold_down: f64,
}

impl PriceClock {
    pub fn fresh<R: Rng + ?Sized>(rng: &mut R) -> Self {
        PriceClock {
            accumulated_up: 0.0,
            accumulated_down: 0.0,
            threshold_up: rng.sample(Exp1),
            threshold_down: rng.sample(Exp1),
        }
    }

    pub fn with_thresholds(threshold_up: f64, threshold_down: f64) -> Self {
        PriceClock {
            accumulated_up: 0.0,
            accumulated_down: 0.0,
            threshold_up,
            threshold_down,
        }
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        *self = Self::fresh(rng);
    }

    /// Adds `theta * dt` to both accumulators and reports which threshold,
    /// if any, was crossed first. When both cross within the same step the
    /// one crossed at the earlier fraction of the step wins; exact ties go
    /// up.
    pub fn advance(&mut self, theta_up: f64, theta_down: f64, dt: f64) -> Option<Direction> {
        let up_before = self.accumulated_up;
        let down_before = self.accumulated_down;
        self.accumulated_up += theta_up * dt;
        self.accumulated_down += theta_down * dt;
        let up = self.accumulated_up >= self.threshold_up;
        let down = self.accumulated_down >= self.threshold_down;
        match (up, down) {
            (false, false) => None,
            (true, false) => Some(Direction::Up),
            (false, true) => Some(Direction::Down),
            (true, true) => {
                let frac = |before: f64, after: f64, y: f64| {
                    if after > before {
                        ((y - before) / (after - before)).max(0.0)
                    } else {
                        0.0
                    }
                };
                let fu = frac(up_before, self.accumulated_up, self.threshold_up);
                let fd = frac(down_before, self.accumulated_down, self.threshold_down);
                if fu <= fd {
                    Some(Direction::Up)
                } else {
                    Some(Direction::Down)
                }
            }
        }
    }
}
