use serde::{Deserialize, Serialize};

use super::grid::Side;
use crate::error::{Error, Result};

/// Per-level coefficient of the form `base(x_i) + slope(x_i) * u`.
///
/// Index `i - 1` holds level `i`. Both tables are nonnegative, so the
/// function is nonnegative and Lipschitz in `u` on `u >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineTable {
    pub base: Vec<f64>,
    pub slope: Vec<f64>,
}

impl AffineTable {
    pub fn new(base: Vec<f64>, slope: Vec<f64>) -> Result<Self> {
        let t = AffineTable { base, slope };
        t.validate("table")?;
        Ok(t)
    }

    pub fn constant(levels: usize, value: f64) -> Self {
        AffineTable {
            base: vec![value; levels],
            slope: vec![0.0; levels],
        }
    }

    pub fn zeros(levels: usize) -> Self {
        Self::constant(levels, 0.0)
    }

    /// Samples a volume-independent profile at `x_i = i / num_ticks`.
    pub fn from_profile(num_ticks: usize, profile: impl Fn(f64) -> f64) -> Self {
        let base = (1..num_ticks)
            .map(|i| profile(i as f64 / num_ticks as f64))
            .collect::<Vec<_>>();
        AffineTable {
            slope: vec![0.0; base.len()],
            base,
        }
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    /// Value at 1-based `level` and volume `u`.
    #[inline]
    pub fn eval(&self, level: usize, u: f64) -> f64 {
        self.base[level - 1] + self.slope[level - 1] * u
    }

    pub fn scaled(&self, base_factor: f64, slope_factor: f64) -> Self {
        AffineTable {
            base: self.base.iter().map(|b| b * base_factor).collect(),
            slope: self.slope.iter().map(|s| s * slope_factor).collect(),
        }
    }

    pub(crate) fn validate(&self, what: &str) -> Result<()> {
        if self.base.len() != self.slope.len() {
            return Err(Error::config(format!(
                "{what}: base has {} entries but slope has {}",
                self.base.len(),
                self.slope.len()
            )));
        }
        for (i, (&b, &s)) in self.base.iter().zip(&self.slope).enumerate() {
            if !(b.is_finite() && s.is_finite()) || b < 0.0 || s < 0.0 {
                return Err(Error::config(format!(
                    "{what}: level {} has base {b}, slope {s}; both must be finite and nonnegative",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// Coefficients for one side of the book.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideCoefficients {
    /// Volatility `sigma(x, u)`.
    pub sigma: AffineTable,
    /// Limit order rate `f(x, u)`.
    pub limit: AffineTable,
    /// Cancellation and market order rate `g(x, u)`.
    pub cancel: AffineTable,
    /// Rate at which individual orders hop to a neighbouring level.
    pub alpha: f64,
}

impl SideCoefficients {
    pub fn levels(&self) -> usize {
        self.sigma.len()
    }

    /// Net drift `h = f - g`.
    #[inline]
    pub fn drift(&self, level: usize, u: f64) -> f64 {
        self.limit.eval(level, u) - self.cancel.eval(level, u)
    }

    #[inline]
    pub fn sigma(&self, level: usize, u: f64) -> f64 {
        self.sigma.eval(level, u)
    }

    /// Largest `|dh/du|` over levels, used by the stability heuristics.
    pub fn max_drift_slope(&self) -> f64 {
        self.limit
            .slope
            .iter()
            .zip(&self.cancel.slope)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn validate(&self, side: Side) -> Result<()> {
        let name = side.as_str();
        self.sigma.validate(&format!("{name} sigma"))?;
        self.limit.validate(&format!("{name} limit rate"))?;
        self.cancel.validate(&format!("{name} cancel rate"))?;
        if self.limit.len() != self.sigma.len() || self.cancel.len() != self.sigma.len() {
            return Err(Error::config(format!(
                "{name} coefficient tables have different lengths"
            )));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::config(format!(
                "{name} alpha must be finite and nonnegative"
            )));
        }
        Ok(())
    }
}

/// Coefficients for both sides of the book.
///
/// Mid-price dependence is not represented: every simulator evaluates the
/// same tables regardless of where the mid sits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    pub bid: SideCoefficients,
    pub ask: SideCoefficients,
}

impl CoefficientSet {
    pub fn new(bid: SideCoefficients, ask: SideCoefficients) -> Result<Self> {
        let c = CoefficientSet { bid, ask };
        c.validate()?;
        Ok(c)
    }

    pub fn symmetric(side: SideCoefficients) -> Result<Self> {
        Self::new(side.clone(), side)
    }

    /// Constant coefficients on every level of both sides.
    pub fn uniform(levels: usize, sigma: f64, limit: f64, cancel: f64, alpha: f64) -> Result<Self> {
        Self::symmetric(SideCoefficients {
            sigma: AffineTable::constant(levels, sigma),
            limit: AffineTable::constant(levels, limit),
            cancel: AffineTable::constant(levels, cancel),
            alpha,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.bid.validate(Side::Bid)?;
        self.ask.validate(Side::Ask)?;
        if self.bid.levels() != self.ask.levels() {
            return Err(Error::config("bid and ask tables have different lengths"));
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.bid.levels()
    }

    pub fn side(&self, side: Side) -> &SideCoefficients {
        match side {
            Side::Bid => &self.bid,
            Side::Ask => &self.ask,
        }
    }

    pub fn max_alpha(&self) -> f64 {
        self.bid.alpha.max(self.ask.alpha)
    }

    /// Coefficients of the `N`-th mesoscopic system whose rescaling
    /// `x_i / sqrt(N)` at time `N^2 t` approximates the reflected SPDE with
    /// these coefficients tabulated at `x_i = i / N`:
    /// `h_N(i, u) = N^{-3/2} h(i/N, u / sqrt N)` and
    /// `sigma_N(i, u) = sigma(i/N, u / sqrt N)`.
    pub fn mesoscopic_for_grid(&self, num_ticks: usize) -> Self {
        let n = num_ticks as f64;
        let drift_base = n.powf(-1.5);
        let drift_slope = n.powi(-2);
        let sigma_slope = n.powf(-0.5);
        let scale = |s: &SideCoefficients| SideCoefficients {
            sigma: s.sigma.scaled(1.0, sigma_slope),
            limit: s.limit.scaled(drift_base, drift_slope),
            cancel: s.cancel.scaled(drift_base, drift_slope),
            alpha: s.alpha,
        };
        CoefficientSet {
            bid: scale(&self.bid),
            ask: scale(&self.ask),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_negative_entries() {
        assert!(AffineTable::new(vec![1.0, -0.1], vec![0.0, 0.0]).is_err());
        assert!(AffineTable::new(vec![1.0], vec![-1.0]).is_err());
        assert!(AffineTable::new(vec![1.0], vec![0.0, 1.0]).is_err());
        assert!(AffineTable::new(vec![f64::NAN], vec![0.0]).is_err());
    }

    #[test]
    fn mesoscopic_scaling_matches_definition() {
        let side = SideCoefficients {
            sigma: AffineTable::new(vec![2.0, 3.0], vec![0.5, 0.25]).unwrap(),
            limit: AffineTable::new(vec![4.0, 1.0], vec![1.0, 0.0]).unwrap(),
            cancel: AffineTable::zeros(2),
            alpha: 1.0,
        };
        let coeffs = CoefficientSet::symmetric(side).unwrap();
        let n = 3usize;
        let meso = coeffs.mesoscopic_for_grid(n);
        let nf = n as f64;
        for level in 1..=2 {
            for &u in &[0.0, 0.7, 5.0] {
                let h = coeffs.bid.drift(level, u / nf.sqrt()) * nf.powf(-1.5);
                let s = coeffs.bid.sigma(level, u / nf.sqrt());
                assert!((meso.bid.drift(level, u) - h).abs() < 1e-12);
                assert!((meso.bid.sigma(level, u) - s).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn affine_evaluation_is_exact(base in 0.0f64..100.0, slope in 0.0f64..10.0, u in 0.0f64..1e3) {
            let t = AffineTable::new(vec![base], vec![slope]).unwrap();
            let lhs = t.eval(1, u) - t.eval(1, 0.0);
            prop_assert!((lhs - slope * u).abs() <= 1e-12 * (base + slope * u).max(1.0));
        }
    }
}
