//! Mesoscopic model: one reflected SDE per queue,
//!
//! ```text
//! dX^i = alpha (X^{i+1} + X^{i-1} - 2 X^i) dt + h(i, X^i) dt + sigma(i, X^i) dW^i + d eta^i
//! ```
//!
//! with `X^0 = X^N = 0`, discretised by projected Euler-Maruyama. The
//! projection amount at each step is the increment of the reflection term
//! `eta` and is kept in a per-level ledger.

use std::sync::atomic::{AtomicBool, Ordering};

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{
    regenerate, CoefficientSet, Direction, MesoBook, PriceClock, PriceEvent, PriceModel, Side,
};

static STABILITY_WARNED: AtomicBool = AtomicBool::new(false);

#[derive(Debug, Clone, PartialEq)]
pub struct MesoState {
    pub book: MesoBook,
    /// Accumulated reflection per level.
    pub ledger_bid: Vec<f64>,
    pub ledger_ask: Vec<f64>,
    /// Reflection added by the most recent step.
    pub last_push_bid: Vec<f64>,
    pub last_push_ask: Vec<f64>,
    pub time: f64,
}

impl MesoState {
    pub fn new(book: MesoBook) -> Self {
        let levels = book.levels();
        MesoState {
            book,
            ledger_bid: vec![0.0; levels],
            ledger_ask: vec![0.0; levels],
            last_push_bid: vec![0.0; levels],
            last_push_ask: vec![0.0; levels],
            time: 0.0,
        }
    }

    pub fn ledger(&self, side: Side) -> &[f64] {
        match side {
            Side::Bid => &self.ledger_bid,
            Side::Ask => &self.ledger_ask,
        }
    }

    pub fn last_push(&self, side: Side) -> &[f64] {
        match side {
            Side::Bid => &self.last_push_bid,
            Side::Ask => &self.last_push_ask,
        }
    }
}

/// Largest `dt (2 alpha + |dh/du|)` over both sides; above 1 the explicit
/// step is liable to oscillate.
pub fn stability_ratio(coeffs: &CoefficientSet, dt: f64) -> f64 {
    Side::BOTH
        .iter()
        .map(|&s| {
            let c = coeffs.side(s);
            dt * (2.0 * c.alpha + c.max_drift_slope())
        })
        .fold(0.0, f64::max)
}

/// Projected Euler-Maruyama update of one side, in place.
pub(crate) fn step_side<R: RngCore + ?Sized>(
    x: &mut [f64],
    ledger: &mut [f64],
    push: &mut [f64],
    coeffs: &crate::model::SideCoefficients,
    dt: f64,
    rng: &mut R,
) {
    let levels = x.len();
    let root_dt = dt.sqrt();
    // old value of the level to the left, already overwritten in `x`
    let mut left = 0.0;
    for i in 0..levels {
        let right = if i + 1 < levels { x[i + 1] } else { 0.0 };
        let level = i + 1;
        let xi = x[i];
        let drift = coeffs.alpha * (left + right - 2.0 * xi) + coeffs.drift(level, xi);
        let z: f64 = rng.sample(StandardNormal);
        let raw = xi + drift * dt + coeffs.sigma(level, xi) * root_dt * z;
        left = xi;
        if raw < 0.0 {
            push[i] = -raw;
            ledger[i] += -raw;
            x[i] = 0.0;
        } else {
            push[i] = 0.0;
            x[i] = raw;
        }
    }
}

/// Advances both sides by `dt`. The mid is untouched.
pub fn step_meso<R: RngCore + ?Sized>(
    state: &mut MesoState,
    coeffs: &CoefficientSet,
    dt: f64,
    rng: &mut R,
) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::domain(format!("time step must be positive, got {dt}")));
    }
    if coeffs.levels() != state.book.levels() {
        return Err(Error::domain("coefficient tables do not match the book"));
    }
    if stability_ratio(coeffs, dt) >= 1.0 && !STABILITY_WARNED.swap(true, Ordering::Relaxed) {
        log::warn!(
            "meso step dt = {dt} gives stability ratio {:.3} >= 1",
            stability_ratio(coeffs, dt)
        );
    }
    step_side(
        &mut state.book.bid,
        &mut state.ledger_bid,
        &mut state.last_push_bid,
        &coeffs.bid,
        dt,
        rng,
    );
    step_side(
        &mut state.book.ask,
        &mut state.ledger_ask,
        &mut state.last_push_ask,
        &coeffs.ask,
        dt,
        rng,
    );
    state.time += dt;
    if state
        .book
        .bid
        .iter()
        .chain(&state.book.ask)
        .any(|v| !v.is_finite())
    {
        return Err(Error::Blowup {
            time: state.time,
            detail: "mesoscopic state is not finite".into(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct MesoOptions {
    /// Times at which to record the state; each is rounded to the nearest
    /// step.
    pub snapshot_times: Vec<f64>,
    /// Initial price clock; a fresh one is drawn when `None`.
    pub clock: Option<PriceClock>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MesoPath {
    pub dt: f64,
    pub steps: u64,
    pub snapshots: Vec<(f64, MesoBook)>,
    pub price_events: Vec<PriceEvent<f64>>,
    pub terminal: MesoState,
}

/// Number of steps and the step actually used to cover `horizon` with steps
/// no longer than `dt`.
pub fn step_grid(horizon: f64, dt: f64) -> (u64, f64) {
    let steps = ((horizon / dt) - 1e-9).ceil().max(0.0) as u64;
    if steps == 0 {
        (0, dt)
    } else {
        (steps, horizon / steps as f64)
    }
}

/// Default step: `horizon / 10^5`.
pub fn default_dt(horizon: f64) -> f64 {
    horizon / 1e5
}

/// Simulates the dynamic mesoscopic model (static when `price` is `None`).
///
/// Each step accumulates `theta * dt` at the pre-step state into the price
/// clock, advances the profiles, and then, if a threshold was crossed,
/// moves the mid by one jump and regenerates the profiles.
pub fn simulate_meso_dynamic<R: RngCore>(
    init: &MesoState,
    coeffs: &CoefficientSet,
    price: Option<&PriceModel>,
    horizon: f64,
    dt: f64,
    options: &MesoOptions,
    rng: &mut R,
) -> Result<MesoPath> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::domain(format!("horizon must be finite and >= 0, got {horizon}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::domain(format!("time step must be positive, got {dt}")));
    }
    let (steps, dt) = step_grid(horizon, dt);
    let mut snap_steps: Vec<(u64, f64)> = options
        .snapshot_times
        .iter()
        .map(|&t| (((t / dt).round().max(0.0) as u64).min(steps), t))
        .collect();
    snap_steps.sort_by_key(|s| s.0);
    let mut next_snap = 0;

    let mut state = init.clone();
    let mut clock = match (price, options.clock) {
        (_, Some(c)) => c,
        (Some(_), None) => PriceClock::fresh(rng),
        (None, None) => PriceClock::with_thresholds(f64::INFINITY, f64::INFINITY),
    };
    let mut path = MesoPath {
        dt,
        steps,
        snapshots: Vec::with_capacity(snap_steps.len()),
        price_events: Vec::new(),
        terminal: state.clone(),
    };
    for k in 0..=steps {
        while next_snap < snap_steps.len() && snap_steps[next_snap].0 == k {
            path.snapshots.push((snap_steps[next_snap].1, state.book.clone()));
            next_snap += 1;
        }
        if k == steps {
            break;
        }
        let fired = match price {
            Some(p) => {
                let (up, down) = p.spec.rates_scaled(&state.book.bid, &state.book.ask, 1.0)?;
                clock.advance(up, down, dt)
            }
            None => None,
        };
        step_meso(&mut state, coeffs, dt, rng)?;
        if let (Some(direction), Some(p)) = (fired, price) {
            let pre = state.book.clone();
            change_price(&mut state, p, direction, rng);
            path.price_events.push(PriceEvent {
                time: state.time,
                direction,
                new_mid: state.book.mid,
                pre,
            });
            clock.reset(rng);
        }
    }
    path.terminal = state;
    Ok(path)
}

fn change_price<R: RngCore + ?Sized>(
    state: &mut MesoState,
    price: &PriceModel,
    direction: Direction,
    rng: &mut R,
) {
    state.book.mid += direction.sign() * price.jump_size;
    regenerate(
        &mut state.book,
        direction,
        &price.rule,
        price.bins,
        1.0,
        &mut crate::rng::DynRng(rng),
    );
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GridSpec, PriceChangeSpec, RegenerationRule};
    use crate::rng::stream_rng;

    #[test]
    fn zero_coefficients_leave_state_unchanged() {
        let coeffs = CoefficientSet::uniform(3, 0.0, 0.0, 0.0, 0.0).unwrap();
        let book = MesoBook::new(vec![0.3, 0.0, 2.0], vec![1.0, 1.0, 0.5], 4.0).unwrap();
        let mut state = MesoState::new(book.clone());
        let mut rng = stream_rng(1, 0);
        step_meso(&mut state, &coeffs, 0.1, &mut rng).unwrap();
        assert_eq!(state.book, book);
        assert_eq!(state.ledger_bid, vec![0.0; 3]);
        assert_eq!(state.ledger_ask, vec![0.0; 3]);
    }

    #[test]
    fn discrete_laplacian_by_hand() {
        let coeffs = CoefficientSet::uniform(3, 0.0, 0.0, 0.0, 1.0).unwrap();
        let book = MesoBook::new(vec![0.0, 1.0, 0.0], vec![0.0; 3], 0.0).unwrap();
        let mut state = MesoState::new(book);
        let mut rng = stream_rng(1, 0);
        step_meso(&mut state, &coeffs, 0.1, &mut rng).unwrap();
        let expected = [0.1, 0.8, 0.1];
        for (got, want) in state.book.bid.iter().zip(expected) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn projection_feeds_the_ledger() {
        // h = f - g = -10
        let coeffs = CoefficientSet::uniform(1, 0.0, 0.0, 10.0, 0.0).unwrap();
        let book = MesoBook::new(vec![0.5], vec![0.5], 0.0).unwrap();
        let mut state = MesoState::new(book);
        let mut rng = stream_rng(1, 0);
        step_meso(&mut state, &coeffs, 0.1, &mut rng).unwrap();
        assert_eq!(state.book.bid[0], 0.0);
        assert!((state.ledger_bid[0] - 0.5).abs() < 1e-15);
        assert!((state.last_push_bid[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_step() {
        let coeffs = CoefficientSet::uniform(1, 0.0, 0.0, 0.0, 0.0).unwrap();
        let mut state = MesoState::new(MesoBook::empty(1, 0.0));
        let mut rng = stream_rng(1, 0);
        assert!(step_meso(&mut state, &coeffs, 0.0, &mut rng).is_err());
        assert!(step_meso(&mut state, &coeffs, f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn blowup_is_reported() {
        let coeffs = CoefficientSet::uniform(1, 0.0, 1e308, 0.0, 0.0).unwrap();
        let mut state = MesoState::new(MesoBook::new(vec![1e308], vec![0.0], 0.0).unwrap());
        let mut rng = stream_rng(1, 0);
        let err = step_meso(&mut state, &coeffs, 10.0, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Blowup { .. }));
    }

    #[test]
    fn forced_up_move() {
        let coeffs = CoefficientSet::uniform(3, 0.1, 0.0, 0.0, 0.5).unwrap();
        let grid = GridSpec::unit_jump(4, 0.01).unwrap();
        let price = PriceModel::new(
            PriceChangeSpec::new(0.0, 1.0, 0.25).unwrap(),
            RegenerationRule::Shift,
            &grid,
        )
        .unwrap();
        let init = MesoState::new(MesoBook::new(vec![1.0; 3], vec![1.0; 3], 100.0).unwrap());
        let mut rng = stream_rng(9, 0);
        let options = MesoOptions {
            clock: Some(PriceClock::with_thresholds(1e-12, f64::INFINITY)),
            ..Default::default()
        };
        let path =
            simulate_meso_dynamic(&init, &coeffs, Some(&price), 0.01, 0.01, &options, &mut rng)
                .unwrap();
        assert_eq!(path.price_events.len(), 1);
        let ev = &path.price_events[0];
        assert_eq!(ev.direction, Direction::Up);
        assert!((ev.new_mid - 100.01).abs() < 1e-12);
        assert_eq!(path.terminal.book.bid[0], 0.0);
    }

    #[test]
    fn step_grid_covers_horizon() {
        assert_eq!(step_grid(1.0, 0.1).0, 10);
        let (k, dt) = step_grid(1.0, 0.3);
        assert_eq!(k, 4);
        assert!((dt - 0.25).abs() < 1e-15);
        assert_eq!(step_grid(0.0, 0.1).0, 0);
    }
}
