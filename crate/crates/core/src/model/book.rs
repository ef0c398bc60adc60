use serde::{Deserialize, Serialize};

use super::coeffs::CoefficientSet;
use super::grid::Side;
use crate::error::{Error, Result};

/// A queue size: whole orders at the microscopic scale, nonnegative reals
/// at the mesoscopic scale.
pub trait Volume: Copy + Default + PartialEq + std::fmt::Debug + Send + Sync + 'static {
    fn to_f64(self) -> f64;
}

impl Volume for u64 {
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Volume for f64 {
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

/// Bid and ask volume profiles on levels `1..N-1` plus the mid.
///
/// `bid[i - 1]` is the volume `i` ticks below the mid and `ask[i - 1]` the
/// volume `i` ticks above it. Levels `0` and `N` are implicitly empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteBook<V> {
    pub bid: Vec<V>,
    pub ask: Vec<V>,
    pub mid: f64,
}

pub type MicroBook = DiscreteBook<u64>;
pub type MesoBook = DiscreteBook<f64>;

impl<V: Volume> DiscreteBook<V> {
    pub fn new(bid: Vec<V>, ask: Vec<V>, mid: f64) -> Result<Self> {
        if bid.len() != ask.len() {
            return Err(Error::domain(format!(
                "bid has {} levels but ask has {}",
                bid.len(),
                ask.len()
            )));
        }
        if bid.is_empty() {
            return Err(Error::domain("book needs at least one level"));
        }
        let book = DiscreteBook { bid, ask, mid };
        if book
            .bid
            .iter()
            .chain(&book.ask)
            .any(|v| !(v.to_f64() >= 0.0 && v.to_f64().is_finite()))
        {
            return Err(Error::domain("volumes must be finite and nonnegative"));
        }
        Ok(book)
    }

    pub fn empty(levels: usize, mid: f64) -> Self {
        DiscreteBook {
            bid: vec![V::default(); levels],
            ask: vec![V::default(); levels],
            mid,
        }
    }

    pub fn levels(&self) -> usize {
        self.bid.len()
    }

    pub fn side(&self, side: Side) -> &[V] {
        match side {
            Side::Bid => &self.bid,
            Side::Ask => &self.ask,
        }
    }

    pub fn side_mut(&mut self, side: Side) -> &mut Vec<V> {
        match side {
            Side::Bid => &mut self.bid,
            Side::Ask => &mut self.ask,
        }
    }

    pub fn total_volume(&self) -> f64 {
        self.bid.iter().chain(&self.ask).map(|v| v.to_f64()).sum()
    }

    /// Real-valued copy with every volume multiplied by `scale`.
    pub fn to_real(&self, scale: f64) -> MesoBook {
        DiscreteBook {
            bid: self.bid.iter().map(|v| v.to_f64() * scale).collect(),
            ask: self.ask.iter().map(|v| v.to_f64() * scale).collect(),
            mid: self.mid,
        }
    }
}

impl MesoBook {
    /// Integer book closest to `sqrt(n) * self`, the usual way to build
    /// microscopic initial data that converges to a mesoscopic one.
    pub fn to_micro(&self, n: ScaleIndex) -> MicroBook {
        let root = n.sqrt();
        let round = |v: &f64| (v * root).round().max(0.0) as u64;
        DiscreteBook {
            bid: self.bid.iter().map(round).collect(),
            ask: self.ask.iter().map(round).collect(),
            mid: self.mid,
        }
    }
}

/// Index `n` of the diffusively rescaled sequence of microscopic books.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleIndex(u64);

impl ScaleIndex {
    pub const ONE: ScaleIndex = ScaleIndex(1);

    pub fn new(n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("scale index must be at least 1"));
        }
        Ok(ScaleIndex(n))
    }

    pub fn get(self) -> u64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }

    pub fn sqrt(self) -> f64 {
        (self.0 as f64).sqrt()
    }
}

/// Rates of the four transitions available at one queue.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LevelRates {
    pub add: f64,
    pub remove: f64,
    pub left: f64,
    pub right: f64,
}

impl LevelRates {
    pub fn total(&self) -> f64 {
        self.add + self.remove + self.left + self.right
    }
}

/// Transition rates of the `n`-th microscopic model at one queue.
///
/// The coefficients are rescaled as `sigma(i, Z / sqrt n)`,
/// `f(i, Z / sqrt n) / sqrt n`, `g(i, Z / sqrt n) / sqrt n` and `alpha / n`.
pub fn eval_rates_micro(
    book: &MicroBook,
    coeffs: &CoefficientSet,
    side: Side,
    level: usize,
    n: ScaleIndex,
) -> Result<LevelRates> {
    if level == 0 || level > book.levels() {
        return Err(Error::domain(format!(
            "level {level} outside 1..={}",
            book.levels()
        )));
    }
    if coeffs.levels() != book.levels() {
        return Err(Error::domain("coefficient tables do not match the book"));
    }
    let z = book.side(side)[level - 1];
    Ok(level_rates(coeffs, side, level, z, n.sqrt(), n.as_f64()))
}

#[inline]
pub(crate) fn level_rates(
    coeffs: &CoefficientSet,
    side: Side,
    level: usize,
    z: u64,
    root_n: f64,
    n: f64,
) -> LevelRates {
    let c = coeffs.side(side);
    let u = z as f64 / root_n;
    let sigma = c.sigma.eval(level, u);
    let half_var = 0.5 * sigma * sigma;
    let limit = c.limit.eval(level, u) / root_n;
    let hop = c.alpha / n * z as f64;
    if z == 0 {
        LevelRates {
            add: 2.0 * half_var + limit,
            remove: 0.0,
            left: 0.0,
            right: 0.0,
        }
    } else {
        LevelRates {
            add: half_var + limit,
            remove: half_var + c.cancel.eval(level, u) / root_n,
            left: hop,
            right: hop,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::coeffs::{AffineTable, SideCoefficients};

    fn coeffs(sigma: f64, f: f64, g: f64, alpha: f64) -> CoefficientSet {
        CoefficientSet::uniform(3, sigma, f, g, alpha).unwrap()
    }

    #[test]
    fn empty_queue_rates() {
        let book = MicroBook::empty(3, 0.0);
        let r = eval_rates_micro(&book, &coeffs(1.0, 0.5, 0.3, 1.0), Side::Bid, 2, ScaleIndex::ONE)
            .unwrap();
        assert_eq!(r.add, 1.5);
        assert_eq!(r.remove, 0.0);
        assert_eq!(r.left, 0.0);
        assert_eq!(r.right, 0.0);
    }

    #[test]
    fn hop_rates_scale_with_queue() {
        let book = MicroBook::new(vec![0, 4, 0], vec![0; 3], 0.0).unwrap();
        let r = eval_rates_micro(&book, &coeffs(0.0, 0.0, 0.0, 0.25), Side::Bid, 2, ScaleIndex::ONE)
            .unwrap();
        assert_eq!(r.left, 1.0);
        assert_eq!(r.right, 1.0);
    }

    #[test]
    fn frozen_book_has_zero_rates() {
        let book = MicroBook::new(vec![3, 1, 7], vec![2, 0, 5], 0.0).unwrap();
        let c = coeffs(0.0, 0.0, 0.0, 0.0);
        for side in Side::BOTH {
            for level in 1..=3 {
                let r = eval_rates_micro(&book, &c, side, level, ScaleIndex::ONE).unwrap();
                assert_eq!(r.total(), 0.0);
            }
        }
    }

    #[test]
    fn level_out_of_range() {
        let book = MicroBook::empty(3, 0.0);
        let c = coeffs(1.0, 0.0, 0.0, 0.0);
        assert!(eval_rates_micro(&book, &c, Side::Ask, 0, ScaleIndex::ONE).is_err());
        assert!(eval_rates_micro(&book, &c, Side::Ask, 4, ScaleIndex::ONE).is_err());
    }

    #[test]
    fn diffusive_scaling() {
        let side = SideCoefficients {
            sigma: AffineTable::new(vec![1.0], vec![2.0]).unwrap(),
            limit: AffineTable::new(vec![3.0], vec![1.0]).unwrap(),
            cancel: AffineTable::new(vec![0.5], vec![0.0]).unwrap(),
            alpha: 2.0,
        };
        let c = CoefficientSet::symmetric(side).unwrap();
        let n = ScaleIndex::new(100).unwrap();
        let book = MicroBook::new(vec![20], vec![0], 0.0).unwrap();
        let r = eval_rates_micro(&book, &c, Side::Bid, 1, n).unwrap();
        // u = 20 / 10 = 2: sigma = 5, f = 5 / 10, g = 0.5 / 10, alpha_n Z = 0.02 * 20
        assert!((r.add - (12.5 + 0.5)).abs() < 1e-12);
        assert!((r.remove - (12.5 + 0.05)).abs() < 1e-12);
        assert!((r.left - 0.4).abs() < 1e-12);
    }

    #[test]
    fn rounding_to_micro() {
        let meso = MesoBook::new(vec![0.25, 1.0], vec![0.0, 0.049], 1.0).unwrap();
        let micro = meso.to_micro(ScaleIndex::new(100).unwrap());
        assert_eq!(micro.bid, vec![3, 10]);
        assert_eq!(micro.ask, vec![0, 0]);
    }
}
