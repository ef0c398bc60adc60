//! Event-driven simulation of the microscopic order book.
//!
//! Every queue carries four exponential clocks (add, remove, hop left, hop
//! right) and the mid carries two more (up, down). Between book events the
//! price intensities are constant, so racing them alongside the book clocks
//! samples the integrated-intensity stopping times exactly. The `n`-th model
//! runs on its own clock up to `n * horizon` with rescaled coefficients; use
//! [`rescale_path`] to map it onto the diffusive scale.

use rand::{Rng, RngCore};
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    level_rates, regenerate, CoefficientSet, Direction, DiscreteBook, LevelRates, MesoBook,
    MicroBook, PriceEvent, PriceModel, ScaleIndex, Side,
};

pub const DEFAULT_EVENT_CAP: u64 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderKind {
    Add,
    Remove,
    MoveLeft,
    MoveRight,
}

impl OrderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OrderKind::Add => "add",
            OrderKind::Remove => "remove",
            OrderKind::MoveLeft => "move-left",
            OrderKind::MoveRight => "move-right",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderEvent {
    pub time: f64,
    pub side: Side,
    /// 1-based level.
    pub level: usize,
    pub kind: OrderKind,
}

/// What happened in one step.
#[derive(Debug, Clone, PartialEq)]
pub enum Transition {
    Order { side: Side, level: usize, kind: OrderKind },
    Price(PriceEvent<u64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum MicroStep {
    Applied { dt: f64, transition: Transition },
    /// Every clock has rate zero; the book will never move again.
    Frozen,
}

/// Applies one transition to a single queue side. Hops off the grid delete
/// the order.
pub(crate) fn apply_order(book: &mut MicroBook, side: Side, level: usize, kind: OrderKind) {
    let levels = book.levels();
    let q = book.side_mut(side);
    match kind {
        OrderKind::Add => q[level - 1] += 1,
        OrderKind::Remove => q[level - 1] -= 1,
        OrderKind::MoveLeft => {
            q[level - 1] -= 1;
            if level > 1 {
                q[level - 2] += 1;
            }
        }
        OrderKind::MoveRight => {
            q[level - 1] -= 1;
            if level < levels {
                q[level] += 1;
            }
        }
    }
}

/// Simulation state with cached per-level rates.
pub(crate) struct MicroEngine<'a> {
    coeffs: &'a CoefficientSet,
    price: Option<&'a PriceModel>,
    n: f64,
    root_n: f64,
    pub(crate) book: MicroBook,
    pub(crate) time: f64,
    rates: Vec<LevelRates>,
    totals: Vec<f64>,
}

pub(crate) enum EngineStep {
    Applied(f64, Transition),
    PastHorizon,
    Frozen,
}

impl<'a> MicroEngine<'a> {
    pub(crate) fn new(
        book: MicroBook,
        coeffs: &'a CoefficientSet,
        price: Option<&'a PriceModel>,
        n: ScaleIndex,
    ) -> Result<Self> {
        if coeffs.levels() != book.levels() {
            return Err(Error::domain(format!(
                "book has {} levels but coefficients have {}",
                book.levels(),
                coeffs.levels()
            )));
        }
        let levels = book.levels();
        let mut engine = MicroEngine {
            coeffs,
            price,
            n: n.as_f64(),
            root_n: n.sqrt(),
            book,
            time: 0.0,
            rates: vec![LevelRates::default(); 2 * levels],
            totals: vec![0.0; 2 * levels],
        };
        engine.refresh_all();
        Ok(engine)
    }

    fn slot(&self, side: Side, level: usize) -> usize {
        match side {
            Side::Bid => level - 1,
            Side::Ask => self.book.levels() + level - 1,
        }
    }

    fn refresh(&mut self, side: Side, level: usize) {
        let z = self.book.side(side)[level - 1];
        let r = level_rates(self.coeffs, side, level, z, self.root_n, self.n);
        let k = self.slot(side, level);
        self.rates[k] = r;
        self.totals[k] = r.total();
    }

    fn refresh_all(&mut self) {
        for side in Side::BOTH {
            for level in 1..=self.book.levels() {
                self.refresh(side, level);
            }
        }
    }

    /// Price intensities on the microscopic clock, `theta(Z / sqrt n) / n`.
    fn price_rates(&self) -> (f64, f64) {
        match self.price {
            None => (0.0, 0.0),
            Some(p) => {
                let mass = p
                    .spec
                    .imbalance_mass(&self.book.bid, &self.book.ask, 1.0 / self.root_n)
                    .expect("window validated with the price model");
                let (up, down) = p.spec.rates_from_mass(mass);
                (up / self.n, down / self.n)
            }
        }
    }

    /// Draws the next event. If it would land after `until`, nothing is
    /// applied: the clocks are memoryless, so the draw can be discarded.
    pub(crate) fn step<R: RngCore + ?Sized>(&mut self, rng: &mut R, until: f64) -> EngineStep {
        let book_rate: f64 = self.totals.iter().sum();
        let (up, down) = self.price_rates();
        let total = book_rate + up + down;
        if !(total > 0.0) {
            return EngineStep::Frozen;
        }
        let e: f64 = rng.sample(Exp1);
        let dt = e / total;
        if self.time + dt > until {
            return EngineStep::PastHorizon;
        }
        self.time += dt;
        let mut target = rng.random::<f64>() * total;

        if target < up {
            return EngineStep::Applied(dt, self.change_price(Direction::Up, rng));
        }
        target -= up;
        if target < down {
            return EngineStep::Applied(dt, self.change_price(Direction::Down, rng));
        }
        target -= down;

        let levels = self.book.levels();
        let mut chosen = None;
        for (k, &t) in self.totals.iter().enumerate() {
            if t <= 0.0 {
                continue;
            }
            chosen = Some(k);
            if target < t {
                break;
            }
            target -= t;
        }
        // rounding can push the target past the last positive clock; it then wins
        let Some(k) = chosen else {
            return EngineStep::Applied(dt, self.change_price(Direction::Down, rng));
        };
        let (side, level) = if k < levels {
            (Side::Bid, k + 1)
        } else {
            (Side::Ask, k - levels + 1)
        };
        let r = self.rates[k];
        let target = target.min(r.total());
        let kind = if target < r.add {
            OrderKind::Add
        } else if target < r.add + r.remove {
            OrderKind::Remove
        } else if target < r.add + r.remove + r.left {
            OrderKind::MoveLeft
        } else {
            OrderKind::MoveRight
        };
        // never act on an empty queue, whatever the rounding
        let kind = match kind {
            OrderKind::Add => OrderKind::Add,
            _ if self.book.side(side)[level - 1] == 0 => OrderKind::Add,
            other => other,
        };
        apply_order(&mut self.book, side, level, kind);
        self.refresh(side, level);
        match kind {
            OrderKind::MoveLeft if level > 1 => self.refresh(side, level - 1),
            OrderKind::MoveRight if level < levels => self.refresh(side, level + 1),
            _ => {}
        }
        EngineStep::Applied(dt, Transition::Order { side, level, kind })
    }

    fn change_price<R: RngCore + ?Sized>(&mut self, direction: Direction, rng: &mut R) -> Transition {
        let price = self.price.expect("price clocks only run with a price model");
        let pre = self.book.clone();
        self.book.mid += direction.sign() * price.jump_size;
        let mut dyn_rng = crate::rng::DynRng(rng);
        regenerate(
            &mut self.book,
            direction,
            &price.rule,
            price.bins,
            1.0 / self.root_n,
            &mut dyn_rng,
        );
        self.refresh_all();
        Transition::Price(PriceEvent {
            time: self.time,
            direction,
            new_mid: self.book.mid,
            pre,
        })
    }
}

/// One step of the `n`-th microscopic model: samples the holding time and
/// applies exactly one transition. Passing `price = None` gives the static
/// book.
pub fn step_micro<R: RngCore>(
    book: &mut MicroBook,
    coeffs: &CoefficientSet,
    price: Option<&PriceModel>,
    n: ScaleIndex,
    rng: &mut R,
) -> Result<MicroStep> {
    let mut engine = MicroEngine::new(book.clone(), coeffs, price, n)?;
    Ok(match engine.step(rng, f64::INFINITY) {
        EngineStep::Applied(dt, transition) => {
            *book = engine.book;
            MicroStep::Applied { dt, transition }
        }
        EngineStep::Frozen => MicroStep::Frozen,
        EngineStep::PastHorizon => unreachable!("infinite horizon"),
    })
}

#[derive(Debug, Clone)]
pub struct MicroOptions {
    /// Keep the full event log (needed for replay and CSV output).
    pub record_events: bool,
    /// Rescaled times at which to capture the book.
    pub snapshot_times: Vec<f64>,
    pub event_cap: u64,
}

impl Default for MicroOptions {
    fn default() -> Self {
        MicroOptions {
            record_events: true,
            snapshot_times: Vec::new(),
            event_cap: DEFAULT_EVENT_CAP,
        }
    }
}

impl MicroOptions {
    pub fn terminal_only() -> Self {
        MicroOptions {
            record_events: false,
            ..Default::default()
        }
    }
}

/// A price change as stored in a path: where it sits in the event log and
/// what the book looked like after regeneration.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedPriceChange {
    /// Number of order events logged before this change.
    pub after_events: usize,
    pub event: PriceEvent<u64>,
    pub post: MicroBook,
}

/// Trajectory of the `n`-th microscopic model on its own clock.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroPath {
    pub scale: ScaleIndex,
    pub initial: MicroBook,
    /// End of the simulated window on the microscopic clock.
    pub end_time: f64,
    pub events: Vec<OrderEvent>,
    pub price_changes: Vec<RecordedPriceChange>,
    /// `(microscopic time, book)` for each requested snapshot.
    pub snapshots: Vec<(f64, MicroBook)>,
    pub terminal: MicroBook,
    /// Transitions simulated, whether or not they were logged.
    pub event_count: u64,
    pub price_change_count: u64,
    /// Microscopic times of every price change, logged or not.
    pub price_times: Vec<f64>,
    pub frozen: bool,
}

impl MicroPath {
    /// Rebuilds the book at microscopic time `t` from the log.
    pub fn replay_at(&self, t: f64) -> Result<MicroBook> {
        if self.event_count > 0 && self.events.len() as u64 + self.price_changes.len() as u64 != self.event_count {
            return Err(Error::domain("path was simulated without an event log"));
        }
        let mut book = self.initial.clone();
        let mut changes = self.price_changes.iter().peekable();
        for (k, ev) in self.events.iter().enumerate() {
            while let Some(c) = changes.peek() {
                if c.after_events == k && c.event.time <= t {
                    book = c.post.clone();
                    changes.next();
                } else {
                    break;
                }
            }
            if ev.time > t {
                return Ok(book);
            }
            apply_order(&mut book, ev.side, ev.level, ev.kind);
        }
        for c in changes {
            if c.event.time <= t {
                book = c.post.clone();
            }
        }
        Ok(book)
    }
}

/// Simulates the `n`-th dynamic microscopic model (or the static one when
/// `price` is `None`) up to rescaled time `horizon`, i.e. microscopic time
/// `n * horizon`.
pub fn simulate_micro<R: RngCore>(
    init: &MicroBook,
    coeffs: &CoefficientSet,
    price: Option<&PriceModel>,
    horizon: f64,
    n: ScaleIndex,
    options: &MicroOptions,
    rng: &mut R,
) -> Result<MicroPath> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::domain(format!("horizon must be finite and >= 0, got {horizon}")));
    }
    let end = horizon * n.as_f64();
    let mut snapshot_times: Vec<f64> = options
        .snapshot_times
        .iter()
        .map(|t| t * n.as_f64())
        .collect();
    snapshot_times.sort_by(f64::total_cmp);
    let mut next_snapshot = 0;

    let mut engine = MicroEngine::new(init.clone(), coeffs, price, n)?;
    let mut path = MicroPath {
        scale: n,
        initial: init.clone(),
        end_time: end,
        events: Vec::new(),
        price_changes: Vec::new(),
        snapshots: Vec::with_capacity(snapshot_times.len()),
        terminal: init.clone(),
        event_count: 0,
        price_change_count: 0,
        price_times: Vec::new(),
        frozen: false,
    };

    loop {
        let until = snapshot_times.get(next_snapshot).map_or(end, |&t| t.min(end));
        match engine.step(rng, until) {
            EngineStep::Applied(dt, transition) => {
                path.event_count += 1;
                if path.event_count > options.event_cap {
                    return Err(Error::RunawayRate {
                        events: path.event_count,
                        cap: options.event_cap,
                        time: engine.time / n.as_f64(),
                        rate: 1.0 / dt,
                    });
                }
                match transition {
                    Transition::Order { side, level, kind } => {
                        if options.record_events {
                            path.events.push(OrderEvent {
                                time: engine.time,
                                side,
                                level,
                                kind,
                            });
                        }
                    }
                    Transition::Price(event) => {
                        path.price_change_count += 1;
                        path.price_times.push(event.time);
                        if options.record_events {
                            path.price_changes.push(RecordedPriceChange {
                                after_events: path.events.len(),
                                event,
                                post: engine.book.clone(),
                            });
                        }
                    }
                }
            }
            EngineStep::PastHorizon if until < end => {
                engine.time = until;
                path.snapshots.push((until, engine.book.clone()));
                next_snapshot += 1;
            }
            EngineStep::PastHorizon => break,
            EngineStep::Frozen => {
                path.frozen = true;
                break;
            }
        }
    }
    while next_snapshot < snapshot_times.len() {
        path.snapshots.push((snapshot_times[next_snapshot], engine.book.clone()));
        next_snapshot += 1;
    }
    path.terminal = engine.book;
    Ok(path)
}

/// A path on the diffusive scale: times divided by `n`, volumes by `sqrt n`.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledPath {
    pub end_time: f64,
    pub events: Vec<OrderEvent>,
    pub price_events: Vec<PriceEvent<f64>>,
    pub snapshots: Vec<(f64, MesoBook)>,
    pub initial: MesoBook,
    pub terminal: MesoBook,
}

impl RescaledPath {
    /// Applies a further rescaling by `n`.
    pub fn rescale(&self, n: ScaleIndex) -> RescaledPath {
        let (tf, vf) = (1.0 / n.as_f64(), 1.0 / n.sqrt());
        RescaledPath {
            end_time: self.end_time * tf,
            events: self
                .events
                .iter()
                .map(|e| OrderEvent {
                    time: e.time * tf,
                    ..*e
                })
                .collect(),
            price_events: self
                .price_events
                .iter()
                .map(|e| PriceEvent {
                    time: e.time * tf,
                    direction: e.direction,
                    new_mid: e.new_mid,
                    pre: e.pre.to_real(vf),
                })
                .collect(),
            snapshots: self
                .snapshots
                .iter()
                .map(|(t, b)| (t * tf, b.to_real(vf)))
                .collect(),
            initial: self.initial.to_real(vf),
            terminal: self.terminal.to_real(vf),
        }
    }
}

/// Maps a microscopic path to the diffusive scale: `t -> t / n`,
/// `v -> v / sqrt n`, prices unchanged.
pub fn rescale_path(path: &MicroPath, n: ScaleIndex) -> RescaledPath {
    let identity = RescaledPath {
        end_time: path.end_time,
        events: path.events.clone(),
        price_events: path
            .price_changes
            .iter()
            .map(|c| PriceEvent {
                time: c.event.time,
                direction: c.event.direction,
                new_mid: c.event.new_mid,
                pre: c.event.pre.to_real(1.0),
            })
            .collect(),
        snapshots: path
            .snapshots
            .iter()
            .map(|(t, b)| (*t, b.to_real(1.0)))
            .collect(),
        initial: path.initial.to_real(1.0),
        terminal: path.terminal.to_real(1.0),
    };
    identity.rescale(n)
}

/// Terminal rescaled book only; cheaper than building a full path.
pub fn terminal_rescaled(path: &MicroPath) -> DiscreteBook<f64> {
    path.terminal.to_real(1.0 / path.scale.sqrt())
}
