//! Method-of-moments estimators for volatility, drift and the two price
//! change rates.
//!
//! Rows sharing a timestamp are processed together (see
//! [`attribute_group`]); every running sum is an integer in shares or
//! price units, so the estimates do not depend on the order of rows within
//! a timestamp, nor on floating-point summation order.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::lobster::{attribute_group, BookSnapshot, LobsterEvent, LobsterReader, LobsterSink, Role};
use crate::error::{Error, Result};
use crate::model::config::CalibrationSection;
use crate::model::Side;

/// `gamma` and `delta` fitted from the net move and the squared moves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceFit {
    /// `None` when the average imbalance is zero.
    pub gamma: Option<f64>,
    pub delta: f64,
    /// The unclamped `delta` was negative.
    pub delta_clamped: bool,
}

/// Solves `net_move = gamma * duration * imbalance` and
/// `2 * duration * delta = sum_sq - duration * gamma * abs_imbalance`,
/// with moves in ticks.
pub fn fit_price_rates(
    net_move: f64,
    sum_sq: f64,
    imbalance: f64,
    abs_imbalance: f64,
    duration: f64,
) -> PriceFit {
    let gamma = (imbalance != 0.0).then(|| net_move / (duration * imbalance));
    let imbalance_share = gamma.map_or(0.0, |g| duration * g * abs_imbalance);
    let raw = (sum_sq - imbalance_share) / (2.0 * duration);
    if raw < 0.0 {
        log::warn!("delta estimate {raw:.4} is negative; clamped to 0");
    }
    PriceFit {
        gamma,
        delta: raw.max(0.0),
        delta_clamped: raw < 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Message rows read.
    pub rows: u64,
    /// Distinct timestamps with a usable book.
    pub groups: u64,
    pub skipped_rows: u64,
    pub out_of_window: u64,
    pub excluded_unoccupied: u64,
    /// Orders used per level, both sides.
    pub level_events: Vec<u64>,
    /// Shares added by limit orders in occupied queues.
    pub limit_bid: Vec<u64>,
    pub limit_ask: Vec<u64>,
    /// Shares removed by cancellations and executions.
    pub cancel_bid: Vec<u64>,
    pub cancel_ask: Vec<u64>,
    /// Timestamps at which the mid moved.
    pub price_changes: u64,
    /// Moves of more than one tick.
    pub multi_tick_moves: u64,
    /// Last minus first mid, in ticks.
    pub net_move_ticks: f64,
    /// Sum of squared mid moves, in ticks squared.
    pub sum_sq_ticks: f64,
    /// The same in currency squared.
    pub quadratic_variation: f64,
    /// Levels without a single usable order.
    pub empty_levels: Vec<usize>,
    pub delta_clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSet {
    /// `i / space_scale` for level `i`.
    pub positions: Vec<f64>,
    pub sigma: Vec<f64>,
    pub drift: Vec<f64>,
    /// Time-averaged Dirichlet Laplacian, both sides pooled.
    pub laplacian: Vec<f64>,
    /// Pooled net order flow per level over the window, model volume units.
    pub net_flow: Vec<f64>,
    pub gamma: Option<f64>,
    pub delta: f64,
    pub imbalance: f64,
    pub abs_imbalance: f64,
    pub diagnostics: Diagnostics,
}

impl EstimateSet {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("estimates serialise");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// One row per level.
    pub fn write_levels_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "level",
            "position",
            "sigma",
            "drift",
            "laplacian",
            "net_flow",
            "events",
            "limit_bid",
            "limit_ask",
            "cancel_bid",
            "cancel_ask",
        ])?;
        let d = &self.diagnostics;
        for i in 0..self.sigma.len() {
            w.write_record(&[
                (i + 1).to_string(),
                self.positions[i].to_string(),
                self.sigma[i].to_string(),
                self.drift[i].to_string(),
                self.laplacian[i].to_string(),
                self.net_flow[i].to_string(),
                d.level_events[i].to_string(),
                d.limit_bid[i].to_string(),
                d.limit_ask[i].to_string(),
                d.cancel_bid[i].to_string(),
                d.cancel_ask[i].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("level csv", e))
    }
}

/// Streaming accumulator; feed rows with [`LobsterSink::push`], then call
/// [`Estimator::finish`].
#[derive(Debug, Clone)]
pub struct Estimator {
    config: CalibrationSection,
    group: Vec<LobsterEvent>,
    group_book: BookSnapshot,
    rows: u64,
    skipped: u64,
    out_of_window: u64,
    unoccupied: u64,
    groups: u64,
    events: Vec<u64>,
    square_shares: Vec<u128>,
    limit: [Vec<u64>; 2],
    cancel: [Vec<u64>; 2],
    laplacian: Vec<i128>,
    imbalance: i128,
    abs_imbalance: i128,
    first_mid2: Option<i64>,
    last_mid2: Option<i64>,
    sum_sq_mid2: i128,
    changes: u64,
    multi_tick: u64,
}

impl Estimator {
    pub fn new(config: CalibrationSection) -> Result<Self> {
        if config.levels == 0 {
            return Err(Error::config("calibration needs at least one level"));
        }
        if config.tick <= 0 {
            return Err(Error::config("tick must be positive"));
        }
        for (name, v) in [
            ("space_scale", config.space_scale),
            ("duration", config.duration),
            ("volume_unit", config.volume_unit),
            ("price_unit", config.price_unit),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if !(config.alpha >= 0.0 && config.alpha.is_finite()) {
            return Err(Error::config("alpha must be nonnegative"));
        }
        let l = config.levels;
        Ok(Estimator {
            config,
            group: Vec::new(),
            group_book: BookSnapshot::default(),
            rows: 0,
            skipped: 0,
            out_of_window: 0,
            unoccupied: 0,
            groups: 0,
            events: vec![0; l],
            square_shares: vec![0; l],
            limit: [vec![0; l], vec![0; l]],
            cancel: [vec![0; l], vec![0; l]],
            laplacian: vec![0; l],
            imbalance: 0,
            abs_imbalance: 0,
            first_mid2: None,
            last_mid2: None,
            sum_sq_mid2: 0,
            changes: 0,
            multi_tick: 0,
        })
    }

    fn flush(&mut self) {
        if self.group.is_empty() {
            return;
        }
        let (tick, levels) = (self.config.tick, self.config.levels);
        let book = std::mem::take(&mut self.group_book);
        for (e, a) in self.group.iter().zip(attribute_group(&self.group, &book, tick, levels)) {
            let side = match a.side {
                Side::Bid => 0,
                Side::Ask => 1,
            };
            match a.role {
                Role::Skipped => self.skipped += 1,
                Role::OutOfWindow => self.out_of_window += 1,
                Role::Unoccupied => self.unoccupied += 1,
                Role::Limit | Role::Removal => {
                    let k = a.level.expect("in-window events have a level") - 1;
                    self.events[k] += 1;
                    self.square_shares[k] += (e.size as u128).pow(2);
                    if a.role == Role::Limit {
                        self.limit[side][k] += e.size;
                    } else {
                        self.cancel[side][k] += e.size;
                    }
                }
            }
        }
        self.group.clear();

        let bid = book.relative_sizes(Side::Bid, tick, levels);
        let ask = book.relative_sizes(Side::Ask, tick, levels);
        let (Some(bid), Some(ask)) = (bid, ask) else {
            return;
        };
        self.groups += 1;
        let gap = bid[0] as i128 - ask[0] as i128;
        self.imbalance += gap;
        self.abs_imbalance += gap.abs();
        for side in [&bid, &ask] {
            for i in 0..levels {
                let at = |k: Option<usize>| k.and_then(|k| side.get(k)).map_or(0, |&v| v as i128);
                self.laplacian[i] += at(i.checked_sub(1)) + at(Some(i + 1)) - 2 * side[i] as i128;
            }
        }
        let mid2 = book.best(Side::Bid).unwrap() + book.best(Side::Ask).unwrap();
        if let Some(prev) = self.last_mid2 {
            let d = (mid2 - prev) as i128;
            self.sum_sq_mid2 += d * d;
            if d != 0 {
                self.changes += 1;
                if d.abs() > 2 * tick as i128 {
                    self.multi_tick += 1;
                }
            }
        }
        self.first_mid2.get_or_insert(mid2);
        self.last_mid2 = Some(mid2);
    }

    pub fn finish(mut self) -> Result<EstimateSet> {
        self.flush();
        let c = &self.config;
        let l = c.levels;
        let vu = c.volume_unit;
        let scale = c.space_scale;
        let mut sigma = vec![0.0; l];
        let mut drift = vec![0.0; l];
        let mut laplacian = vec![0.0; l];
        let mut net_flow = vec![0.0; l];
        let mut empty_levels = Vec::new();
        for i in 0..l {
            if self.events[i] == 0 {
                empty_levels.push(i + 1);
            }
            let half_sq = 0.5 * self.square_shares[i] as f64 / (vu * vu);
            sigma[i] = (half_sq / (scale * c.duration)).sqrt();
            let net = self.limit[0][i] as f64 + self.limit[1][i] as f64
                - self.cancel[0][i] as f64
                - self.cancel[1][i] as f64;
            net_flow[i] = 0.5 * net / vu;
            if self.groups > 0 {
                laplacian[i] =
                    self.laplacian[i] as f64 / (2.0 * self.groups as f64) / vu * scale * scale;
            }
            drift[i] = net_flow[i] / c.duration - c.alpha * laplacian[i];
        }
        if !empty_levels.is_empty() {
            log::warn!("no usable orders at levels {empty_levels:?}; volatility set to 0");
        }
        let per_group = |sum: i128| {
            if self.groups == 0 {
                0.0
            } else {
                sum as f64 / (2.0 * scale * vu * self.groups as f64)
            }
        };
        let imbalance = per_group(self.imbalance);
        let abs_imbalance = per_group(self.abs_imbalance);
        let tick = c.tick as f64;
        let net_move_ticks = match (self.first_mid2, self.last_mid2) {
            (Some(a), Some(b)) => (b - a) as f64 / (2.0 * tick),
            _ => 0.0,
        };
        let sum_sq_ticks = self.sum_sq_mid2 as f64 / (4.0 * tick * tick);
        let fit = fit_price_rates(net_move_ticks, sum_sq_ticks, imbalance, abs_imbalance, c.duration);
        if fit.gamma.is_none() {
            log::warn!("average imbalance is zero; gamma is not estimable");
        }
        if self.multi_tick > 0 {
            log::warn!("{} mid moves exceed one tick", self.multi_tick);
        }
        let tick_currency = tick * c.price_unit;
        Ok(EstimateSet {
            positions: (1..=l).map(|i| i as f64 / scale).collect(),
            sigma,
            drift,
            laplacian,
            net_flow,
            gamma: fit.gamma,
            delta: fit.delta,
            imbalance,
            abs_imbalance,
            diagnostics: Diagnostics {
                rows: self.rows,
                groups: self.groups,
                skipped_rows: self.skipped,
                out_of_window: self.out_of_window,
                excluded_unoccupied: self.unoccupied,
                level_events: self.events,
                limit_bid: self.limit[0].clone(),
                limit_ask: self.limit[1].clone(),
                cancel_bid: self.cancel[0].clone(),
                cancel_ask: self.cancel[1].clone(),
                price_changes: self.changes,
                multi_tick_moves: self.multi_tick,
                net_move_ticks,
                sum_sq_ticks,
                quadratic_variation: sum_sq_ticks * tick_currency * tick_currency,
                empty_levels,
                delta_clamped: fit.delta_clamped,
            },
        })
    }
}

impl LobsterSink for Estimator {
    fn push(&mut self, event: &LobsterEvent, snapshot: &BookSnapshot) -> Result<()> {
        if let Some(last) = self.group.last() {
            if event.time < last.time {
                return Err(Error::domain("events must be in time order"));
            }
            if event.time != last.time {
                self.flush();
            }
        }
        self.rows += 1;
        self.group.push(*event);
        self.group_book.clone_from(snapshot);
        Ok(())
    }
}

/// Runs the estimators over a pair of LOBSTER files.
pub fn calibrate_files(
    message_path: &Path,
    book_path: &Path,
    config: &CalibrationSection,
) -> Result<EstimateSet> {
    let mut est = Estimator::new(config.clone())?;
    LobsterReader::open(message_path, book_path, config.levels)?.drain_into(&mut est)?;
    est.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::lobster::EventType;

    fn config(levels: usize) -> CalibrationSection {
        CalibrationSection {
            levels,
            ..CalibrationSection::default()
        }
    }

    fn book(bid: &[u64], ask: &[u64], mid_ticks: i64) -> BookSnapshot {
        let l = bid.len();
        BookSnapshot {
            ask_price: (1..=l as i64).map(|i| (mid_ticks + i) * 100).collect(),
            ask_size: ask.to_vec(),
            bid_price: (1..=l as i64).map(|i| (mid_ticks - i) * 100).collect(),
            bid_size: bid.to_vec(),
        }
    }

    fn event(time: f64, kind: EventType, size: u64, price: i64, direction: i8) -> LobsterEvent {
        LobsterEvent {
            time,
            kind,
            order_id: 1,
            size,
            price,
            direction,
        }
    }

    #[test]
    fn volatility_inverts_quadratic_variation() {
        // 78000^2 + 6000^2 = 6.12e9 shares^2, half of which is 30.6 in 1e4 shares
        let mut est = Estimator::new(config(1)).unwrap();
        let b = book(&[200_000], &[0], 10_000);
        est.push(&event(1.0, EventType::Cancellation, 78_000, 999_900, 1), &b).unwrap();
        est.push(&event(2.0, EventType::Execution, 6_000, 999_900, 1), &b).unwrap();
        let out = est.finish().unwrap();
        assert!((out.sigma[0] * out.sigma[0] - 0.01).abs() < 1e-15);
        assert!((out.sigma[0] - 0.1).abs() < 1e-14);
        assert_eq!(out.diagnostics.cancel_bid, vec![84_000]);
    }

    #[test]
    fn drift_backs_out_laplacian() {
        // unit volume and space scales: net flow (12 - 0) / 2 = 6 per hour,
        // pooled second difference at level 1 is 27 - 2 * 13 = 1
        let cfg = CalibrationSection {
            levels: 3,
            space_scale: 1.0,
            volume_unit: 1.0,
            ..CalibrationSection::default()
        };
        let mut est = Estimator::new(cfg).unwrap();
        let b = book(&[13, 27, 0], &[13, 27, 0], 100);
        est.push(&event(1.0, EventType::Submission, 12, 9_900, 1), &b).unwrap();
        let out = est.finish().unwrap();
        assert_eq!(out.net_flow[0], 6.0);
        assert_eq!(out.laplacian[0], 1.0);
        assert!((out.drift[0] - 0.09).abs() < 1e-15);
    }

    #[test]
    fn no_activity() {
        let out = Estimator::new(config(3)).unwrap().finish().unwrap();
        assert_eq!(out.sigma, vec![0.0; 3]);
        assert_eq!(out.drift, vec![0.0; 3]);
        assert_eq!(out.gamma, None);
        assert_eq!(out.delta, 0.0);
        assert_eq!(out.diagnostics.empty_levels, vec![1, 2, 3]);
    }

    #[test]
    fn exogenous_share_identity() {
        // sum of squared moves 2417 cents^2 with an imbalance share of 885.8
        let fit = fit_price_rates(1.0, 2417.0, 1.0 / (60.0 * 2720.0), 885.8 / (60.0 * 2720.0), 60.0);
        assert!((fit.gamma.unwrap() - 2720.0).abs() < 1e-9);
        assert!((fit.delta - 12.76).abs() < 1e-12);
        assert!((120.0 * fit.delta - 1531.2).abs() < 1e-10);
    }

    #[test]
    fn negative_delta_is_clamped() {
        let fit = fit_price_rates(10.0, 5.0, 0.01, 0.02, 60.0);
        assert!(fit.delta_clamped);
        assert_eq!(fit.delta, 0.0);
    }

    #[test]
    fn symmetric_books_are_degenerate() {
        let mut est = Estimator::new(config(2)).unwrap();
        let mut t = 0.0;
        for mid in [10_000, 10_001, 10_002, 10_001] {
            t += 1.0;
            let b = book(&[50, 10], &[50, 10], mid);
            est.push(&event(t, EventType::Halt, 0, 0, 1), &b).unwrap();
        }
        let out = est.finish().unwrap();
        assert_eq!(out.imbalance, 0.0);
        assert_eq!(out.abs_imbalance, 0.0);
        assert_eq!(out.gamma, None);
        assert_eq!(out.diagnostics.sum_sq_ticks, 3.0);
        assert_eq!(out.delta, 3.0 / 120.0);
        assert_eq!(out.diagnostics.skipped_rows, 4);
    }

    #[test]
    fn imbalance_and_laplacian() {
        let mut est = Estimator::new(config(2)).unwrap();
        est.push(&event(1.0, EventType::Halt, 0, 0, 1), &book(&[30_000, 0], &[10_000, 0], 100))
            .unwrap();
        est.push(&event(2.0, EventType::Halt, 0, 0, 1), &book(&[0, 0], &[20_000, 0], 100))
            .unwrap();
        let out = est.finish().unwrap();
        let norm = 2.0 * 51.0 * 1e4 * 2.0;
        assert!((out.imbalance - (20_000.0 - 20_000.0) / norm).abs() < 1e-18);
        assert!((out.abs_imbalance - 40_000.0 / norm).abs() < 1e-15);
        assert!(out.imbalance.abs() <= out.abs_imbalance);
        // level 1 second differences: bid -60000, 0; ask -20000, -40000
        let want1 = -120_000.0 / 4.0 * 1e-4 * 51.0 * 51.0;
        assert!((out.laplacian[0] - want1).abs() < 1e-9);
    }

    #[test]
    fn limit_orders_into_empty_queues_are_excluded() {
        let mut est = Estimator::new(config(2)).unwrap();
        let b = book(&[100, 40], &[10, 10], 100);
        // level 2 bid was empty before this 40-share order
        est.push(&event(1.0, EventType::Submission, 40, 9_800, 1), &b).unwrap();
        est.push(&event(2.0, EventType::Submission, 10, 9_900, 1), &b).unwrap();
        let out = est.finish().unwrap();
        assert_eq!(out.diagnostics.excluded_unoccupied, 1);
        assert_eq!(out.diagnostics.limit_bid, vec![10, 0]);
        assert_eq!(out.diagnostics.level_events, vec![1, 0]);
    }
}
