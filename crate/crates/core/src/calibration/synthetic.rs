//! Turns a run of the macroscopic scheme into LOBSTER-format order flow.
//!
//! The profiles are held as integer share books, `round(u * volume_unit)`
//! per level. After every field step each level whose share count changed
//! emits one order of the difference: a submission when it grew, a
//! deletion when it shrank. The best bid sits one tick below the mid and
//! the best ask one tick above, and every grid slot is listed in the book
//! file, empty or not.
//!
//! A price move is written as an execution that clears the best queue on
//! the side the price moves into (a hidden execution of one share when that
//! queue is empty). Absolute prices of all other queues stay put, which is
//! exactly the shift regeneration seen in relative coordinates. The stream
//! opens with a trading-resumes row that carries the initial book.

use serde::{Deserialize, Serialize};

use super::lobster::{BookSnapshot, EventType, LobsterEvent, LobsterSink};
use crate::error::{Error, Result};
use crate::model::{shift, Direction, MesoBook, Side};
use crate::spde::{MacroField, MacroObserver, SchemeParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    /// Seconds after midnight of the first step.
    pub start_seconds: f64,
    /// Seconds per model time unit.
    pub seconds_per_unit: f64,
    /// Shares per model volume unit.
    pub volume_unit: f64,
    /// Tick in LOBSTER price units.
    pub tick: i64,
    /// Currency per LOBSTER price unit.
    pub price_unit: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            start_seconds: 39_600.0,
            seconds_per_unit: 60.0,
            volume_unit: 1e4,
            tick: 100,
            price_unit: 1e-4,
        }
    }
}

type ShareBook = crate::model::DiscreteBook<u64>;

/// [`MacroObserver`] that writes order flow into a [`LobsterSink`].
pub struct SyntheticLobster<'a, S: LobsterSink + ?Sized> {
    sink: &'a mut S,
    config: SyntheticConfig,
    dt_seconds: f64,
    shares: ShareBook,
    mid_ticks: i64,
    next_id: u64,
    snapshot: BookSnapshot,
    error: Option<Error>,
}

impl<'a, S: LobsterSink + ?Sized> SyntheticLobster<'a, S> {
    /// `init` must be the field the run starts from; its price has to sit on
    /// the tick grid and jumps must be one tick.
    pub fn new(
        sink: &'a mut S,
        init: &MacroField,
        params: &SchemeParams,
        config: SyntheticConfig,
    ) -> Result<Self> {
        let tick_currency = config.tick as f64 * config.price_unit;
        let mid = init.price() / tick_currency;
        if (mid - mid.round()).abs() > 1e-6 || mid.round() < init.book.levels() as f64 + 1.0 {
            return Err(Error::config(
                "initial price must be a whole number of ticks deep enough for every level",
            ));
        }
        let mut this = SyntheticLobster {
            sink,
            dt_seconds: params.dt() * config.seconds_per_unit,
            shares: to_shares(&init.book, config.volume_unit),
            mid_ticks: mid.round() as i64,
            next_id: 1,
            snapshot: BookSnapshot::with_levels(init.book.levels()),
            config,
            error: None,
        };
        this.refresh_snapshot();
        // trading-resumes marker carrying the opening book
        let open = LobsterEvent {
            time: this.config.start_seconds,
            kind: EventType::Halt,
            order_id: 0,
            size: 0,
            price: 1,
            direction: -1,
        };
        this.sink.push(&open, &this.snapshot)?;
        Ok(this)
    }

    /// Returns the first sink error, if any.
    pub fn finish(self) -> Result<()> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    fn price_of(&self, side: Side, level: usize) -> i64 {
        let offset = level as i64;
        let ticks = match side {
            Side::Bid => self.mid_ticks - offset,
            Side::Ask => self.mid_ticks + offset,
        };
        ticks * self.config.tick
    }

    fn refresh_snapshot(&mut self) {
        for k in 0..self.shares.levels() {
            self.snapshot.ask_price[k] = self.price_of(Side::Ask, k + 1);
            self.snapshot.ask_size[k] = self.shares.ask[k];
            self.snapshot.bid_price[k] = self.price_of(Side::Bid, k + 1);
            self.snapshot.bid_size[k] = self.shares.bid[k];
        }
    }

    fn emit(&mut self, time: f64, kind: EventType, size: u64, price: i64, side: Side) {
        if self.error.is_some() {
            return;
        }
        let event = LobsterEvent {
            time,
            kind,
            order_id: self.next_id,
            size,
            price,
            direction: if side == Side::Bid { 1 } else { -1 },
        };
        self.next_id += 1;
        if let Err(e) = self.sink.push(&event, &self.snapshot) {
            self.error = Some(e);
        }
    }

    fn time_of(&self, step: u64) -> f64 {
        self.config.start_seconds + (step + 1) as f64 * self.dt_seconds
    }
}

fn to_shares(book: &MesoBook, unit: f64) -> ShareBook {
    let round = |v: &Vec<f64>| v.iter().map(|x| (x * unit).round().max(0.0) as u64).collect();
    ShareBook {
        bid: round(&book.bid),
        ask: round(&book.ask),
        mid: book.mid,
    }
}

impl<S: LobsterSink + ?Sized> MacroObserver for SyntheticLobster<'_, S> {
    fn after_price_update(&mut self, step: u64, _field: &MacroField, jump: Option<Direction>) {
        let Some(direction) = jump else { return };
        let time = self.time_of(step);
        // the queue the price moves into
        let side = match direction {
            Direction::Up => Side::Ask,
            Direction::Down => Side::Bid,
        };
        let cleared = self.shares.side(side)[0];
        let price = self.price_of(side, 1);
        shift(&mut self.shares, direction, 1);
        self.mid_ticks += direction.sign() as i64;
        self.refresh_snapshot();
        if cleared > 0 {
            self.emit(time, EventType::Execution, cleared, price, side);
        } else {
            self.emit(time, EventType::HiddenExecution, 1, price, side);
        }
    }

    fn after_field_step(&mut self, step: u64, field: &MacroField) {
        let time = self.time_of(step);
        let unit = self.config.volume_unit;
        for side in Side::BOTH {
            for k in 0..field.book.levels() {
                let new = (field.side(side)[k] * unit).round().max(0.0) as u64;
                let old = self.shares.side(side)[k];
                if new == old {
                    continue;
                }
                self.shares.side_mut(side)[k] = new;
                match side {
                    Side::Bid => self.snapshot.bid_size[k] = new,
                    Side::Ask => self.snapshot.ask_size[k] = new,
                }
                let (kind, size) = if new > old {
                    (EventType::Submission, new - old)
                } else {
                    (EventType::Deletion, old - new)
                };
                let price = self.price_of(side, k + 1);
                self.emit(time, kind, size, price, side);
            }
        }
    }
}
