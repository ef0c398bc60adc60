//! Monte Carlo check that the rescaled static microscopic model has the
//! reflected diffusion generator
//!
//! `AF(x) = sum_k 1/2 sigma_k(x_k)^2 F_kk + [h_k(x_k) + alpha (x_{k+1} + x_{k-1} - 2 x_k)] F_k`
//!
//! on test functions whose normal derivative vanishes on each face
//! `x_k = 0`.

use serde::Serialize;

use super::stats::Moments;
use crate::ensemble::run_ensemble;
use crate::error::{Error, Result};
use crate::micro::{simulate_micro, MicroOptions};
use crate::model::{AffineTable, CoefficientSet, MicroBook, ScaleIndex, SideCoefficients};

/// A smooth function of one side of the book.
pub trait TestFunction: Sync {
    fn name(&self) -> String;
    fn value(&self, x: &[f64]) -> f64;
    /// `dF / dx_k`.
    fn first(&self, x: &[f64], k: usize) -> f64;
    /// `d^2 F / dx_k^2`.
    fn second(&self, x: &[f64], k: usize) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub struct Constant(pub f64);

/// `sum_k cos(x_k)`.
#[derive(Debug, Clone, Copy)]
pub struct Cosine;

/// `sum_k x_k^2`.
#[derive(Debug, Clone, Copy)]
pub struct Quadratic;

/// `sum_k x_k`; fails the boundary condition.
#[derive(Debug, Clone, Copy)]
pub struct Linear;

impl TestFunction for Constant {
    fn name(&self) -> String {
        format!("constant {}", self.0)
    }
    fn value(&self, _: &[f64]) -> f64 {
        self.0
    }
    fn first(&self, _: &[f64], _: usize) -> f64 {
        0.0
    }
    fn second(&self, _: &[f64], _: usize) -> f64 {
        0.0
    }
}

impl TestFunction for Cosine {
    fn name(&self) -> String {
        "cosine".into()
    }
    fn value(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| v.cos()).sum()
    }
    fn first(&self, x: &[f64], k: usize) -> f64 {
        -x[k].sin()
    }
    fn second(&self, x: &[f64], k: usize) -> f64 {
        -x[k].cos()
    }
}

impl TestFunction for Quadratic {
    fn name(&self) -> String {
        "quadratic".into()
    }
    fn value(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }
    fn first(&self, x: &[f64], k: usize) -> f64 {
        2.0 * x[k]
    }
    fn second(&self, _: &[f64], _: usize) -> f64 {
        2.0
    }
}

impl TestFunction for Linear {
    fn name(&self) -> String {
        "linear".into()
    }
    fn value(&self, x: &[f64]) -> f64 {
        x.iter().sum()
    }
    fn first(&self, _: &[f64], _: usize) -> f64 {
        1.0
    }
    fn second(&self, _: &[f64], _: usize) -> f64 {
        0.0
    }
}

/// Checks `dF/dx_k = 0` on the face `x_k = 0`, probing at `x` and at the
/// all-ones point.
pub fn check_boundary(f: &dyn TestFunction, x: &[f64]) -> Result<()> {
    let ones = vec![1.0; x.len()];
    for base in [x, &ones[..]] {
        for k in 0..x.len() {
            let mut y = base.to_vec();
            y[k] = 0.0;
            let d = f.first(&y, k);
            if d.abs() > 1e-9 {
                return Err(Error::domain(format!(
                    "test function {} has dF/dx_{} = {d} on the face x_{} = 0",
                    f.name(),
                    k + 1,
                    k + 1
                )));
            }
        }
    }
    Ok(())
}

/// `AF(x)` for one side.
pub fn generator_value(coeffs: &SideCoefficients, f: &dyn TestFunction, x: &[f64]) -> f64 {
    let levels = x.len();
    let mut total = 0.0;
    for k in 0..levels {
        let level = k + 1;
        let left = if k > 0 { x[k - 1] } else { 0.0 };
        let right = if k + 1 < levels { x[k + 1] } else { 0.0 };
        let sigma = coeffs.sigma(level, x[k]);
        let drift = coeffs.drift(level, x[k]) + coeffs.alpha * (left + right - 2.0 * x[k]);
        total += 0.5 * sigma * sigma * f.second(x, k) + drift * f.first(x, k);
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratorResidual {
    pub test_function: String,
    /// `AF(x)`.
    pub generator: f64,
    /// Monte Carlo mean of `(F(Z_t) - F(x)) / t`.
    pub estimate: f64,
    pub std_error: f64,
    /// `estimate - generator`.
    pub residual: f64,
    pub paths: usize,
}

impl GeneratorResidual {
    /// `|residual| <= k` standard errors.
    pub fn within(&self, k: f64) -> bool {
        self.residual.abs() <= k * self.std_error
    }
}

/// Runs `paths` copies of the static microscopic model at scale `n` from
/// `sqrt(n) x` on the bid side (the ask side is frozen empty) up to
/// rescaled time `t`, and compares `(E F(Z_t / sqrt n) - F(x)) / t` with
/// `AF(x)`. `x` must lie on the `1 / sqrt n` lattice.
pub fn generator_residual(
    coeffs: &SideCoefficients,
    f: &dyn TestFunction,
    x: &[f64],
    t: f64,
    n: ScaleIndex,
    paths: usize,
    seed: u64,
) -> Result<GeneratorResidual> {
    if x.len() != coeffs.levels() {
        return Err(Error::domain("state and coefficients have different lengths"));
    }
    if !(t > 0.0 && t.is_finite()) || paths < 2 {
        return Err(Error::domain("need t > 0 and at least two paths"));
    }
    check_boundary(f, x)?;
    let root_n = n.sqrt();
    let mut bid = Vec::with_capacity(x.len());
    for &v in x {
        let z = v * root_n;
        if v < 0.0 || (z - z.round()).abs() > 1e-9 {
            return Err(Error::domain(format!(
                "state {v} is not a nonnegative multiple of 1/sqrt({})",
                n.get()
            )));
        }
        bid.push(z.round() as u64);
    }
    let levels = x.len();
    let frozen = SideCoefficients {
        sigma: AffineTable::zeros(levels),
        limit: AffineTable::zeros(levels),
        cancel: AffineTable::zeros(levels),
        alpha: 0.0,
    };
    let set = CoefficientSet::new(coeffs.clone(), frozen)?;
    let init = MicroBook::new(bid, vec![0; levels], 0.0)?;
    let options = MicroOptions::terminal_only();
    let f0 = f.value(x);
    let samples = run_ensemble(seed, paths, |_, rng| {
        let path = simulate_micro(&init, &set, None, t, n, &options, rng)?;
        let y: Vec<f64> = path.terminal.bid.iter().map(|&z| z as f64 / root_n).collect();
        Ok((f.value(&y) - f0) / t)
    })?;
    let m = Moments::of(&samples);
    let generator = generator_value(coeffs, f, x);
    Ok(GeneratorResidual {
        test_function: f.name(),
        generator,
        estimate: m.mean,
        std_error: m.std_error,
        residual: m.mean - generator,
        paths,
    })
}
