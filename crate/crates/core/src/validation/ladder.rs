//! Cross-scale ladders: ensembles of a finer model at increasing scale
//! compared level by level with the limiting model, using two-sample KS.
//!
//! * `MicroMeso`: the static microscopic model at `n` (rescaled as
//!   `Z / sqrt n` at rescaled time `t`) against the mesoscopic system.
//! * `MesoMacro`: the `N`-th mesoscopic system (`X / sqrt N` at time
//!   `N^2 t`, coefficients from [`CoefficientSet::mesoscopic_for_grid`])
//!   against the macroscopic scheme on a fine reference grid, compared at
//!   fixed positions.
//! * `Trivial`: two independent mesoscopic ensembles of the same model.
//!
//! A seed passes when the mean KS statistic strictly decreases along the
//! ladder and every comparison at the last rung has p above the
//! significance level. The ladder passes when at least two thirds of the
//! seeds do.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::stats::ks_two_sample;
use crate::ensemble::run_ensemble;
use crate::error::{Error, Result};
use crate::meso::{simulate_meso_dynamic, MesoOptions, MesoState};
use crate::micro::{simulate_micro, MicroOptions};
use crate::model::{MesoBook, ModelConfig, ResolvedModel, ScaleIndex, Side};
use crate::spde::{simulate_macro, MacroField, MacroObserver, MacroOptions, SchemeParams};

const MICRO_MESO_TOML: &str = r#"
[grid]
num_ticks = 4
tick_size = 0.01
jump_size = 0.01

[coefficients-bid]
alpha = 0.5
sigma = { base = [0.5, 0.5, 0.5], slope = [0.2, 0.2, 0.2] }
limit = { constant = 0.3 }
cancel = { base = [0.0, 0.0, 0.0], slope = [0.2, 0.2, 0.2] }

[price-change]
gamma = 0.0
delta = 0.0

[initial]
mid = 100.0
"#;

const MESO_MACRO_TOML: &str = r#"
[grid]
num_ticks = 10
tick_size = 0.01
jump_size = 0.01

[coefficients-bid]
alpha = 1.0
sigma = { constant = 1.0 }
limit = { constant = 0.5 }

[price-change]
gamma = 0.0
delta = 0.0

[initial]
mid = 100.0
bid = { constant = 1.0 }
ask = { constant = 1.0 }
"#;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LadderKind {
    Trivial,
    MicroMeso,
    MesoMacro,
}

impl LadderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LadderKind::Trivial => "trivial",
            LadderKind::MicroMeso => "micro-meso",
            LadderKind::MesoMacro => "meso-macro",
        }
    }
}

impl std::str::FromStr for LadderKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trivial" => Ok(LadderKind::Trivial),
            "micro-meso" => Ok(LadderKind::MicroMeso),
            "meso-macro" => Ok(LadderKind::MesoMacro),
            other => Err(Error::config(format!(
                "unknown ladder {other:?} (expected trivial, micro-meso or meso-macro)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LadderSpec {
    pub kind: LadderKind,
    /// Model whose coefficients and initial profile are used. For
    /// `MesoMacro` its tables are re-resolved on every grid, so inline
    /// tables only work when every grid has the same size.
    pub config: ModelConfig,
    pub base_dir: PathBuf,
    /// `n` for `MicroMeso`, `N` for `MesoMacro`; ignored by `Trivial`.
    pub rungs: Vec<u64>,
    /// Reference grid for `MesoMacro`.
    pub reference: usize,
    /// Rescaled comparison times.
    pub times: Vec<f64>,
    /// Positions in `(0, 1)` compared by `MesoMacro`.
    pub points: Vec<f64>,
    /// Sides compared.
    pub sides: Vec<Side>,
    pub paths: usize,
    /// Step of the mesoscopic reference in `MicroMeso` and `Trivial`.
    pub meso_dt: f64,
    /// Target `alpha T N^2 / M` of the macroscopic scheme.
    pub diffusion_number: f64,
    pub significance: f64,
}

impl LadderSpec {
    /// The built-in ladder of the given kind.
    pub fn builtin(kind: LadderKind) -> Self {
        let toml = match kind {
            LadderKind::MesoMacro => MESO_MACRO_TOML,
            _ => MICRO_MESO_TOML,
        };
        let config = ModelConfig::from_toml_str(toml).expect("built-in ladder config parses");
        let mut spec = Self::with_config(kind, config, PathBuf::from("."));
        if kind == LadderKind::MesoMacro {
            // the built-in model is symmetric, so the ask side repeats the bid
            spec.sides = vec![Side::Bid];
        }
        spec
    }

    /// Default rungs and settings for `kind` around a user model.
    pub fn with_config(kind: LadderKind, config: ModelConfig, base_dir: PathBuf) -> Self {
        let (rungs, times) = match kind {
            LadderKind::Trivial => (vec![1], vec![1.0]),
            LadderKind::MicroMeso => (vec![100, 1_000, 10_000], vec![1.0]),
            LadderKind::MesoMacro => (vec![10, 20, 40], vec![0.02, 0.05]),
        };
        LadderSpec {
            kind,
            config,
            base_dir,
            rungs,
            reference: 80,
            times,
            points: vec![0.2, 0.5, 0.8],
            sides: Side::BOTH.to_vec(),
            paths: 2000,
            meso_dt: 1e-4,
            diffusion_number: 0.02,
            significance: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Budget {
    pub max_paths: usize,
    pub event_cap: u64,
    pub deadline: Option<Instant>,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_paths: 2000,
            event_cap: 10_000_000,
            deadline: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub seed: u64,
    pub rung: u64,
    pub time: f64,
    pub side: &'static str,
    /// Level for `MicroMeso` and `Trivial`, position for `MesoMacro`.
    pub coordinate: f64,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedVerdict {
    pub seed: u64,
    /// Mean KS statistic per rung.
    pub mean_statistic: Vec<f64>,
    pub improving: bool,
    pub last_rung_passes: bool,
}

impl SeedVerdict {
    pub fn passed(&self) -> bool {
        self.improving && self.last_rung_passes
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossScaleReport {
    pub ladder: LadderKind,
    pub rungs: Vec<u64>,
    pub paths: usize,
    pub significance: f64,
    pub cells: Vec<CellResult>,
    pub verdicts: Vec<SeedVerdict>,
    pub pass: bool,
    /// Set when the budget ran out before every seed finished.
    pub incomplete: bool,
    pub note: Option<String>,
}

impl CrossScaleReport {
    pub fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "ladder {}: rungs {:?}, {} paths per ensemble, significance {}",
            self.ladder.as_str(),
            self.rungs,
            self.paths,
            self.significance
        );
        for v in &self.verdicts {
            let stats: Vec<String> = v.mean_statistic.iter().map(|d| format!("{d:.4}")).collect();
            let _ = writeln!(
                s,
                "seed {}: mean KS [{}] improving={} last-rung-pass={} -> {}",
                v.seed,
                stats.join(", "),
                v.improving,
                v.last_rung_passes,
                if v.passed() { "pass" } else { "fail" }
            );
        }
        if let Some(note) = &self.note {
            let _ = writeln!(s, "note: {note}");
        }
        let status = if self.incomplete {
            "INCOMPLETE"
        } else if self.pass {
            "PASS"
        } else {
            "FAIL"
        };
        let _ = writeln!(s, "result: {status}");
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["ladder", "seed", "rung", "time", "side", "coordinate", "statistic", "p_value"])?;
        for c in &self.cells {
            w.write_record([
                self.ladder.as_str().to_string(),
                c.seed.to_string(),
                c.rung.to_string(),
                c.time.to_string(),
                c.side.to_string(),
                c.coordinate.to_string(),
                c.statistic.to_string(),
                c.p_value.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Derives independent seeds for the ensembles inside one ladder seed.
fn sub_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Samples indexed `[cell][path]`, cells ordered by time, then side, then
/// coordinate.
type Samples = Vec<Vec<f64>>;

fn transpose(per_path: Vec<Vec<f64>>) -> Samples {
    let cells = per_path.first().map_or(0, Vec::len);
    (0..cells)
        .map(|c| per_path.iter().map(|p| p[c]).collect())
        .collect()
}

fn push_book(out: &mut Vec<f64>, book: &MesoBook, sides: &[Side], pick: &[usize], scale: f64) {
    for &side in sides {
        for &k in pick {
            out.push(book.side(side)[k] * scale);
        }
    }
}

fn micro_samples(
    model: &ResolvedModel,
    n: u64,
    times: &[f64],
    sides: &[Side],
    paths: usize,
    seed: u64,
    cap: u64,
) -> Result<Samples> {
    let n = ScaleIndex::new(n)?;
    let init = model.initial.to_micro(n);
    let horizon = times.iter().copied().fold(0.0, f64::max);
    let options = MicroOptions {
        record_events: false,
        snapshot_times: times.to_vec(),
        event_cap: cap,
    };
    let all: Vec<usize> = (0..model.grid.levels()).collect();
    let scale = 1.0 / n.sqrt();
    let per_path = run_ensemble(seed, paths, |_, rng| {
        let path = simulate_micro(&init, &model.coefficients, None, horizon, n, &options, rng)?;
        let mut out = Vec::new();
        for (_, book) in &path.snapshots {
            push_book(&mut out, &book.to_real(1.0), sides, &all, scale);
        }
        Ok(out)
    })?;
    Ok(transpose(per_path))
}

fn meso_samples(
    coeffs: &crate::model::CoefficientSet,
    init: &MesoBook,
    times: &[f64],
    dt: f64,
    sides: &[Side],
    pick: &[usize],
    scale: f64,
    paths: usize,
    seed: u64,
) -> Result<Samples> {
    let horizon = times.iter().copied().fold(0.0, f64::max);
    let options = MesoOptions {
        snapshot_times: times.to_vec(),
        clock: None,
    };
    let state = MesoState::new(init.clone());
    let per_path = run_ensemble(seed, paths, |_, rng| {
        let path = simulate_meso_dynamic(&state, coeffs, None, horizon, dt, &options, rng)?;
        let mut out = Vec::new();
        for (_, book) in &path.snapshots {
            push_book(&mut out, book, sides, pick, scale);
        }
        Ok(out)
    })?;
    Ok(transpose(per_path))
}

struct Recorder<'a> {
    steps: &'a [u64],
    sides: &'a [Side],
    pick: &'a [usize],
    out: Vec<f64>,
}

impl MacroObserver for Recorder<'_> {
    fn after_field_step(&mut self, step: u64, field: &MacroField) {
        if self.steps.contains(&(step + 1)) {
            push_book(&mut self.out, &field.book, self.sides, self.pick, 1.0);
        }
    }
}

/// Steps of a scheme on `num_ticks` cells reaching the largest time with
/// every time on the step grid and `alpha T N^2 / M` near the target.
fn scheme_steps(alpha: f64, horizon: f64, num_ticks: usize, target: f64, times: &[f64]) -> Result<(u64, Vec<u64>)> {
    let base = (alpha * horizon * (num_ticks * num_ticks) as f64 / target).ceil().max(1.0) as u64;
    for m in base..base * 4 + 1000 {
        let steps: Vec<f64> = times.iter().map(|t| t / horizon * m as f64).collect();
        if steps.iter().all(|s| (s - s.round()).abs() < 1e-6) {
            return Ok((m, steps.iter().map(|s| s.round() as u64).collect()));
        }
    }
    Err(Error::config("comparison times do not share a step grid"))
}

fn resolve_on(spec: &LadderSpec, num_ticks: usize) -> Result<ResolvedModel> {
    let mut cfg = spec.config.clone();
    cfg.grid.num_ticks = num_ticks;
    cfg.resolve(&spec.base_dir)
}

fn grid_indices(points: &[f64], num_ticks: usize) -> Result<Vec<usize>> {
    points
        .iter()
        .map(|&x| {
            let i = x * num_ticks as f64;
            if (i - i.round()).abs() > 1e-9 || i.round() < 1.0 || i.round() >= num_ticks as f64 {
                Err(Error::config(format!("position {x} is not an interior node of a {num_ticks}-cell grid")))
            } else {
                Ok(i.round() as usize - 1)
            }
        })
        .collect()
}

fn compare(
    reference: &Samples,
    other: &Samples,
    seed: u64,
    rung: u64,
    times: &[f64],
    sides: &[Side],
    coords: &[f64],
) -> Result<Vec<CellResult>> {
    let mut out = Vec::with_capacity(reference.len());
    let mut c = 0;
    for &time in times {
        for &side in sides {
            for &coordinate in coords {
                let ks = ks_two_sample(&reference[c], &other[c])?;
                out.push(CellResult {
                    seed,
                    rung,
                    time,
                    side: side.as_str(),
                    coordinate,
                    statistic: ks.statistic,
                    p_value: ks.p_value,
                });
                c += 1;
            }
        }
    }
    Ok(out)
}

enum Outcome {
    Done(Vec<CellResult>),
    OutOfBudget(String),
}

fn run_seed(spec: &LadderSpec, seed: u64, paths: usize, budget: &Budget) -> Result<Outcome> {
    let over = || budget.deadline.is_some_and(|d| Instant::now() > d);
    let mut cells = Vec::new();
    match spec.kind {
        LadderKind::Trivial | LadderKind::MicroMeso => {
            let model = spec.config.resolve(&spec.base_dir)?;
            let all: Vec<usize> = (0..model.grid.levels()).collect();
            let coords: Vec<f64> = (1..=all.len()).map(|l| l as f64).collect();
            let reference = meso_samples(
                &model.coefficients,
                &model.initial,
                &spec.times,
                spec.meso_dt,
                &spec.sides,
                &all,
                1.0,
                paths,
                sub_seed(seed, 0),
            )?;
            let rungs: &[u64] = if spec.kind == LadderKind::Trivial { &[1] } else { &spec.rungs };
            for &rung in rungs {
                if over() {
                    return Ok(Outcome::OutOfBudget(format!("deadline reached before rung {rung}")));
                }
                let tag = rung + 1;
                let other = if spec.kind == LadderKind::Trivial {
                    meso_samples(
                        &model.coefficients,
                        &model.initial,
                        &spec.times,
                        spec.meso_dt,
                        &spec.sides,
                        &all,
                        1.0,
                        paths,
                        sub_seed(seed, tag),
                    )?
                } else {
                    match micro_samples(&model, rung, &spec.times, &spec.sides, paths, sub_seed(seed, tag), budget.event_cap) {
                        Ok(s) => s,
                        Err(e @ Error::RunawayRate { .. }) => {
                            return Ok(Outcome::OutOfBudget(format!("n = {rung}: {e}")))
                        }
                        Err(e) => return Err(e),
                    }
                };
                cells.extend(compare(&reference, &other, seed, rung, &spec.times, &spec.sides, &coords)?);
            }
        }
        LadderKind::MesoMacro => {
            let horizon = spec.times.iter().copied().fold(0.0, f64::max);
            let fine = resolve_on(spec, spec.reference)?;
            let pick = grid_indices(&spec.points, spec.reference)?;
            let alpha = fine.coefficients.max_alpha();
            let (m, steps) = scheme_steps(alpha, horizon, spec.reference, spec.diffusion_number, &spec.times)?;
            let params = SchemeParams::new(horizon, spec.reference, m)?;
            let init = MacroField::new(fine.initial.clone());
            let per_path = run_ensemble(sub_seed(seed, 0), paths, |_, rng| {
                let mut rec = Recorder {
                    steps: &steps,
                    sides: &spec.sides,
                    pick: &pick,
                    out: Vec::new(),
                };
                let options = MacroOptions {
                    snapshot_every: Some(m),
                };
                simulate_macro(&init, &fine.coefficients, None, &params, &options, &mut rec, rng)?;
                Ok(rec.out)
            })?;
            let reference = transpose(per_path);
            for &rung in &spec.rungs {
                if over() {
                    return Ok(Outcome::OutOfBudget(format!("deadline reached before N = {rung}")));
                }
                let num_ticks = rung as usize;
                let model = resolve_on(spec, num_ticks)?;
                let pick = grid_indices(&spec.points, num_ticks)?;
                let nf = num_ticks as f64;
                let coeffs = model.coefficients.mesoscopic_for_grid(num_ticks);
                let (m, _) = scheme_steps(alpha, horizon, num_ticks, spec.diffusion_number, &spec.times)?;
                let dt = nf * nf * horizon / m as f64;
                let mut init = model.initial.clone();
                for v in init.bid.iter_mut().chain(init.ask.iter_mut()) {
                    *v *= nf.sqrt();
                }
                let meso_times: Vec<f64> = spec.times.iter().map(|t| t * nf * nf).collect();
                let other = meso_samples(
                    &coeffs,
                    &init,
                    &meso_times,
                    dt,
                    &spec.sides,
                    &pick,
                    1.0 / nf.sqrt(),
                    paths,
                    sub_seed(seed, rung + 1),
                )?;
                cells.extend(compare(&reference, &other, seed, rung, &spec.times, &spec.sides, &spec.points)?);
            }
        }
    }
    Ok(Outcome::Done(cells))
}

fn verdict(spec: &LadderSpec, seed: u64, rungs: &[u64], cells: &[CellResult]) -> SeedVerdict {
    let mean_statistic: Vec<f64> = rungs
        .iter()
        .map(|&r| {
            let xs: Vec<f64> = cells.iter().filter(|c| c.rung == r).map(|c| c.statistic).collect();
            xs.iter().sum::<f64>() / xs.len().max(1) as f64
        })
        .collect();
    let improving = mean_statistic.windows(2).all(|w| w[1] < w[0]);
    let last = *rungs.last().unwrap_or(&0);
    let last_rung_passes = cells
        .iter()
        .filter(|c| c.rung == last)
        .all(|c| c.p_value > spec.significance);
    SeedVerdict {
        seed,
        mean_statistic,
        improving,
        last_rung_passes,
    }
}

/// Runs the ladder once per seed.
pub fn cross_scale_report(spec: &LadderSpec, seeds: &[u64], budget: &Budget) -> Result<CrossScaleReport> {
    if seeds.is_empty() {
        return Err(Error::config("at least one seed is needed"));
    }
    if spec.times.is_empty() || spec.times.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::config("comparison times must be positive"));
    }
    if spec.sides.is_empty() {
        return Err(Error::config("no sides to compare"));
    }
    if spec.kind != LadderKind::Trivial && spec.rungs.is_empty() {
        return Err(Error::config("ladder has no rungs"));
    }
    let paths = spec.paths.min(budget.max_paths).max(2);
    let rungs = if spec.kind == LadderKind::Trivial { vec![1] } else { spec.rungs.clone() };
    let mut report = CrossScaleReport {
        ladder: spec.kind,
        rungs: rungs.clone(),
        paths,
        significance: spec.significance,
        cells: Vec::new(),
        verdicts: Vec::new(),
        pass: false,
        incomplete: false,
        note: None,
    };
    if paths < spec.paths {
        report.note = Some(format!("paths capped at {paths} by the budget"));
    }
    for &seed in seeds {
        match run_seed(spec, seed, paths, budget)? {
            Outcome::Done(cells) => {
                report.verdicts.push(verdict(spec, seed, &rungs, &cells));
                report.cells.extend(cells);
            }
            Outcome::OutOfBudget(why) => {
                report.incomplete = true;
                report.note = Some(format!("seed {seed}: {why}"));
                return Ok(report);
            }
        }
    }
    let needed = (2 * seeds.len()).div_ceil(3);
    report.pass = report.verdicts.iter().filter(|v| v.passed()).count() >= needed;
    Ok(report)
}
