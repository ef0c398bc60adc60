//! Forward time-stepping scheme for the pair of reflected stochastic heat
//! equations with imbalance-driven price jumps.
//!
//! With `dt = T/M` and grid `x_i = i/N`, each step first decides whether
//! the price moves, using
//!
//! ```text
//! pi+ = (max(gamma * int_0^w (u_b - u_a) dx, 0) + delta) * T/M
//! pi- = (max(gamma * int_0^w (u_a - u_b) dx, 0) + delta) * T/M
//! ```
//!
//! against one uniform draw `Y` (`Y < pi+` up, `pi+ <= Y < pi+ + pi-`
//! down), regenerating the profiles on a move. It then updates each side by
//!
//! ```text
//! u' = max(u + alpha T N^2/M (u_{i+1} + u_{i-1} - 2 u_i) + T/M h(x_i, u)
//!          + sqrt(T N / M) sigma(x_i, u) Z, 0)
//! ```
//!
//! with boundary values pinned to zero and independent standard normals per
//! point, side and step. For a one-bin window the imbalance integral is
//! `(u_b(x_1) - u_a(x_1)) / (2N)`.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    regenerate, CoefficientSet, Direction, MesoBook, PriceModel, Side, SideCoefficients,
};
use crate::rng::DynRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeParams {
    /// Horizon `T`.
    pub horizon: f64,
    /// Space steps `N`; the grid has `N - 1` interior points.
    pub space_steps: usize,
    /// Time steps `M`.
    pub time_steps: u64,
    /// Skip the `2 alpha T N^2 / M <= 1` check.
    pub allow_unstable: bool,
}

impl SchemeParams {
    pub fn new(horizon: f64, space_steps: usize, time_steps: u64) -> Result<Self> {
        let p = SchemeParams {
            horizon,
            space_steps,
            time_steps,
            allow_unstable: false,
        };
        p.validate_shape()?;
        Ok(p)
    }

    fn validate_shape(&self) -> Result<()> {
        if self.space_steps < 2 {
            return Err(Error::config("scheme needs N >= 2"));
        }
        if self.time_steps < 1 {
            return Err(Error::config("scheme needs M >= 1"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::config("scheme horizon must be positive"));
        }
        Ok(())
    }

    /// `T / M`.
    pub fn dt(&self) -> f64 {
        self.horizon / self.time_steps as f64
    }

    /// `1 / N`.
    pub fn dx(&self) -> f64 {
        1.0 / self.space_steps as f64
    }

    /// `alpha T N^2 / M`.
    pub fn diffusion_number(&self, alpha: f64) -> f64 {
        let n = self.space_steps as f64;
        alpha * self.horizon * n * n / self.time_steps as f64
    }

    /// `sqrt(T N / M)`.
    pub fn noise_scale(&self) -> f64 {
        (self.horizon * self.space_steps as f64 / self.time_steps as f64).sqrt()
    }

    /// `2 alpha T N^2 / M` for the larger of the two smoothing rates.
    pub fn stability_ratio(&self, coeffs: &CoefficientSet) -> f64 {
        2.0 * self.diffusion_number(coeffs.max_alpha())
    }

    /// Checks shape, grid agreement and stability.
    pub fn validate(&self, coeffs: &CoefficientSet) -> Result<()> {
        self.validate_shape()?;
        if coeffs.levels() != self.space_steps - 1 {
            return Err(Error::config(format!(
                "coefficients have {} levels but N - 1 = {}",
                coeffs.levels(),
                self.space_steps - 1
            )));
        }
        let ratio = self.stability_ratio(coeffs);
        if ratio > 1.0 {
            if self.allow_unstable {
                log::warn!("explicit scheme is unstable: 2 alpha T N^2 / M = {ratio:.3}");
            } else {
                return Err(Error::config(format!(
                    "2 alpha T N^2 / M = {ratio:.4} exceeds 1; increase M or set allow_unstable"
                )));
            }
        }
        Ok(())
    }
}

/// Bid/ask density profiles at the interior grid points plus the price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroField {
    /// `book.mid` holds the price.
    pub book: MesoBook,
    /// Completed time steps.
    pub step: u64,
}

impl MacroField {
    pub fn new(book: MesoBook) -> Self {
        MacroField { book, step: 0 }
    }

    pub fn price(&self) -> f64 {
        self.book.mid
    }

    pub fn side(&self, side: Side) -> &[f64] {
        self.book.side(side)
    }
}

/// Jump probabilities `(pi+, pi-)` for the current field.
pub fn jump_probabilities(
    field: &MacroField,
    price: &PriceModel,
    params: &SchemeParams,
) -> Result<(f64, f64)> {
    let (up, down) = price
        .spec
        .rates_scaled(&field.book.bid, &field.book.ask, 1.0)?;
    Ok((up * params.dt(), down * params.dt()))
}

/// Price update driven by a given uniform draw `y`.
pub fn price_update_with_draw(
    field: &mut MacroField,
    price: &PriceModel,
    params: &SchemeParams,
    y: f64,
    rng: &mut dyn RngCore,
) -> Result<Option<Direction>> {
    let (up, down) = jump_probabilities(field, price, params)?;
    if up + down > 1.0 {
        return Err(Error::TimeStepTooCoarse {
            step: field.step,
            total: up + down,
        });
    }
    let direction = if y < up {
        Direction::Up
    } else if y < up + down {
        Direction::Down
    } else {
        return Ok(None);
    };
    field.book.mid += direction.sign() * price.jump_size;
    regenerate(&mut field.book, direction, &price.rule, price.bins, 1.0, rng);
    Ok(Some(direction))
}

/// Price update with a fresh uniform draw.
pub fn price_update<R: RngCore>(
    field: &mut MacroField,
    price: &PriceModel,
    params: &SchemeParams,
    rng: &mut R,
) -> Result<Option<Direction>> {
    let y: f64 = rng.random();
    price_update_with_draw(field, price, params, y, rng)
}

/// Reusable per-run state of the field update.
#[derive(Debug, Clone)]
pub struct FieldStepper {
    dt: f64,
    noise: f64,
    diffusion: [f64; 2],
    /// Amount removed by the projection at each point in the last step.
    pub clip_bid: Vec<f64>,
    pub clip_ask: Vec<f64>,
}

impl FieldStepper {
    pub fn new(coeffs: &CoefficientSet, params: &SchemeParams) -> Result<Self> {
        params.validate(coeffs)?;
        let levels = coeffs.levels();
        Ok(FieldStepper {
            dt: params.dt(),
            noise: params.noise_scale(),
            diffusion: [
                params.diffusion_number(coeffs.bid.alpha),
                params.diffusion_number(coeffs.ask.alpha),
            ],
            clip_bid: vec![0.0; levels],
            clip_ask: vec![0.0; levels],
        })
    }

    pub fn clip(&self, side: Side) -> &[f64] {
        match side {
            Side::Bid => &self.clip_bid,
            Side::Ask => &self.clip_ask,
        }
    }

    /// Advances both profiles by one step and increments `field.step`.
    pub fn step<R: RngCore + ?Sized>(
        &mut self,
        field: &mut MacroField,
        coeffs: &CoefficientSet,
        rng: &mut R,
    ) -> Result<()> {
        let (dt, noise) = (self.dt, self.noise);
        step_profile(
            &mut field.book.bid,
            &mut self.clip_bid,
            &coeffs.bid,
            self.diffusion[0],
            dt,
            noise,
            rng,
        );
        step_profile(
            &mut field.book.ask,
            &mut self.clip_ask,
            &coeffs.ask,
            self.diffusion[1],
            dt,
            noise,
            rng,
        );
        field.step += 1;
        let bad = field
            .book
            .bid
            .iter()
            .chain(&field.book.ask)
            .any(|v| !v.is_finite());
        if bad {
            return Err(Error::Blowup {
                time: field.step as f64 * dt,
                detail: "profile is not finite".into(),
            });
        }
        Ok(())
    }
}

#[inline]
fn step_profile<R: RngCore + ?Sized>(
    u: &mut [f64],
    clip: &mut [f64],
    coeffs: &SideCoefficients,
    diffusion: f64,
    dt: f64,
    noise: f64,
    rng: &mut R,
) {
    let levels = u.len();
    let mut left = 0.0;
    for i in 0..levels {
        let right = if i + 1 < levels { u[i + 1] } else { 0.0 };
        let ui = u[i];
        let level = i + 1;
        let z: f64 = rng.sample(StandardNormal);
        let raw = ui
            + diffusion * (right + left - 2.0 * ui)
            + dt * coeffs.drift(level, ui)
            + noise * coeffs.sigma(level, ui) * z;
        left = ui;
        if raw < 0.0 {
            clip[i] = -raw;
            u[i] = 0.0;
        } else {
            clip[i] = 0.0;
            u[i] = raw;
        }
    }
}

/// One field step with a throwaway stepper.
pub fn field_step<R: RngCore>(
    field: &mut MacroField,
    coeffs: &CoefficientSet,
    params: &SchemeParams,
    rng: &mut R,
) -> Result<()> {
    FieldStepper::new(coeffs, params)?.step(field, coeffs, rng)
}

/// Hooks into the main loop, e.g. to turn the run into order flow.
pub trait MacroObserver {
    /// After the price update of step `step` (0-based), before the profiles
    /// move.
    fn after_price_update(&mut self, _step: u64, _field: &MacroField, _jump: Option<Direction>) {}

    /// After the profiles of step `step` have moved.
    fn after_field_step(&mut self, _step: u64, _field: &MacroField) {}
}

impl MacroObserver for () {}

#[derive(Debug, Clone, Default)]
pub struct MacroOptions {
    /// Snapshot every this many steps (and at step 0); `None` means `M / 5`.
    pub snapshot_every: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroRun {
    pub params: SchemeParams,
    /// `(time, field)` at the snapshot cadence.
    pub snapshots: Vec<(f64, MesoBook)>,
    /// `(time, price)`: the initial price and every change.
    pub price_path: Vec<(f64, f64)>,
    pub mean_bid: Vec<f64>,
    pub mean_ask: Vec<f64>,
    pub up_jumps: u64,
    pub down_jumps: u64,
    /// Sum of squared price changes, in currency squared.
    pub quadratic_variation: f64,
    pub terminal: MacroField,
}

impl MacroRun {
    pub fn jumps(&self) -> u64 {
        self.up_jumps + self.down_jumps
    }
}

/// Runs the scheme for `M` steps: price update, then field update.
/// `price = None` keeps the price fixed.
pub fn simulate_macro<R: RngCore, O: MacroObserver>(
    init: &MacroField,
    coeffs: &CoefficientSet,
    price: Option<&PriceModel>,
    params: &SchemeParams,
    options: &MacroOptions,
    observer: &mut O,
    rng: &mut R,
) -> Result<MacroRun> {
    let mut stepper = FieldStepper::new(coeffs, params)?;
    if init.book.levels() != coeffs.levels() {
        return Err(Error::domain("initial field does not match the grid"));
    }
    let m = params.time_steps;
    let every = options.snapshot_every.unwrap_or((m / 5).max(1)).max(1);
    let dt = params.dt();
    let levels = coeffs.levels();

    let mut field = init.clone();
    let mut run = MacroRun {
        params: *params,
        snapshots: vec![(0.0, field.book.clone())],
        price_path: vec![(0.0, field.price())],
        mean_bid: vec![0.0; levels],
        mean_ask: vec![0.0; levels],
        up_jumps: 0,
        down_jumps: 0,
        quadratic_variation: 0.0,
        terminal: field.clone(),
    };
    for j in 0..m {
        let jump = match price {
            Some(p) => {
                let y: f64 = rng.random();
                let before = field.price();
                let jump = price_update_with_draw(&mut field, p, params, y, &mut DynRng(rng))?;
                if let Some(d) = jump {
                    match d {
                        Direction::Up => run.up_jumps += 1,
                        Direction::Down => run.down_jumps += 1,
                    }
                    let change = field.price() - before;
                    run.quadratic_variation += change * change;
                    run.price_path.push(((j + 1) as f64 * dt, field.price()));
                }
                jump
            }
            None => None,
        };
        observer.after_price_update(j, &field, jump);
        stepper.step(&mut field, coeffs, rng)?;
        observer.after_field_step(j, &field);
        for (acc, v) in run.mean_bid.iter_mut().zip(&field.book.bid) {
            *acc += v;
        }
        for (acc, v) in run.mean_ask.iter_mut().zip(&field.book.ask) {
            *acc += v;
        }
        if (j + 1) % every == 0 {
            run.snapshots.push(((j + 1) as f64 * dt, field.book.clone()));
        }
    }
    let scale = 1.0 / m as f64;
    run.mean_bid.iter_mut().for_each(|v| *v *= scale);
    run.mean_ask.iter_mut().for_each(|v| *v *= scale);
    run.terminal = field;
    Ok(run)
}
