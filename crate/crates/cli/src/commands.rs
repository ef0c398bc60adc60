use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde_json::{json, Value};

use lobscale::calibration::calibrate_files;
use lobscale::ensemble::run_ensemble;
use lobscale::meso::{default_dt, simulate_meso_dynamic, MesoOptions, MesoState};
use lobscale::micro::{rescale_path, simulate_micro, MicroOptions, DEFAULT_EVENT_CAP};
use lobscale::model::config::CalibrationSection;
use lobscale::model::{ModelConfig, PriceModel, ResolvedModel, ScaleIndex};
use lobscale::output::{write_event_log, write_price_events, write_price_series, write_profile, write_snapshots};
use lobscale::spde::{simulate_macro, MacroField, MacroOptions, SchemeParams};
use lobscale::validation::{cross_scale_report, Budget, LadderKind, LadderSpec};
use lobscale::{Error, Result};

/// Settings shared by every subcommand.
pub struct Common {
    pub config: Option<PathBuf>,
    pub seed: u64,
    pub ensemble: usize,
    pub out: PathBuf,
    pub snapshot_times: Option<Vec<f64>>,
}

/// What a command reports back for the manifest.
pub struct Outcome {
    pub settings: Value,
    /// Nonzero for a completed run whose verdict is negative.
    pub exit: i32,
}

pub struct Loaded {
    pub config: ModelConfig,
    pub model: ResolvedModel,
    pub price: PriceModel,
}

pub fn load(path: &Path) -> Result<Loaded> {
    let config = ModelConfig::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let model = config.resolve(base)?;
    let price = PriceModel::new(model.price, model.regeneration.into(), &model.grid)?;
    Ok(Loaded { config, model, price })
}

fn require_config(common: &Common) -> Result<&Path> {
    common
        .config
        .as_deref()
        .ok_or_else(|| Error::config("this command needs --config"))
}

/// Directory for run `k`: the output directory itself for a single run.
fn run_dir(common: &Common, k: usize) -> Result<PathBuf> {
    if common.ensemble == 1 {
        return Ok(common.out.clone());
    }
    let dir = common.out.join(format!("run_{k:04}"));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn simulate_micro_cmd(common: &Common) -> Result<Outcome> {
    let loaded = load(require_config(common)?)?;
    let section = loaded
        .config
        .micro
        .clone()
        .ok_or_else(|| Error::config("config has no [micro] section"))?;
    let n = ScaleIndex::new(section.scale)?;
    let init = loaded.model.initial.to_micro(n);
    let options = MicroOptions {
        record_events: true,
        snapshot_times: common.snapshot_times.clone().unwrap_or(section.snapshot_times.clone()),
        event_cap: section.event_cap.unwrap_or(DEFAULT_EVENT_CAP),
    };
    let positions: Vec<f64> = (1..=loaded.model.grid.levels()).map(|i| loaded.model.grid.position(i)).collect();
    info!("micro: n = {}, horizon {}, {} runs", n.get(), section.horizon, common.ensemble);
    let rows = run_ensemble(common.seed, common.ensemble, |k, rng| {
        let path = simulate_micro(&init, &loaded.model.coefficients, Some(&loaded.price), section.horizon, n, &options, rng)?;
        let scaled = rescale_path(&path, n);
        let dir = run_dir(common, k)?;
        write_event_log(&dir.join("events.csv"), &scaled.events, "rescaled time")?;
        write_price_events(&dir.join("price_changes.csv"), &scaled.price_events, "rescaled time")?;
        let mut snaps = vec![(0.0, scaled.initial.clone())];
        snaps.extend(scaled.snapshots.iter().cloned());
        snaps.push((scaled.end_time, scaled.terminal.clone()));
        write_snapshots(&dir.join("snapshots.csv"), &snaps, "time rescaled by 1/n; volumes rescaled by 1/sqrt(n)")?;
        write_profile(
            &dir.join("terminal_profile.csv"),
            &positions,
            &scaled.terminal.bid,
            &scaled.terminal.ask,
            "volumes rescaled by 1/sqrt(n); position relative to the mid",
        )?;
        Ok((path.event_count, path.price_change_count, path.frozen, scaled.terminal.mid))
    })?;
    let mut table = String::from("run,events,price_changes,frozen,terminal_mid\n");
    for (k, (events, changes, frozen, mid)) in rows.iter().enumerate() {
        table.push_str(&format!("{k},{events},{changes},{frozen},{mid}\n"));
    }
    write_text(&common.out.join("summary.csv"), &table)?;
    Ok(Outcome {
        settings: json!({ "scale": n.get(), "horizon": section.horizon, "snapshot_times": options.snapshot_times }),
        exit: 0,
    })
}

pub fn simulate_meso_cmd(common: &Common) -> Result<Outcome> {
    let loaded = load(require_config(common)?)?;
    let section = loaded
        .config
        .meso
        .clone()
        .ok_or_else(|| Error::config("config has no [meso] section"))?;
    let dt = section.dt.unwrap_or_else(|| default_dt(section.horizon));
    let options = MesoOptions {
        snapshot_times: common.snapshot_times.clone().unwrap_or(section.snapshot_times.clone()),
        clock: None,
    };
    let init = MesoState::new(loaded.model.initial.clone());
    let positions: Vec<f64> = (1..=loaded.model.grid.levels()).map(|i| loaded.model.grid.position(i)).collect();
    info!("meso: horizon {}, dt {dt}, {} runs", section.horizon, common.ensemble);
    let rows = run_ensemble(common.seed, common.ensemble, |k, rng| {
        let path = simulate_meso_dynamic(&init, &loaded.model.coefficients, Some(&loaded.price), section.horizon, dt, &options, rng)?;
        let dir = run_dir(common, k)?;
        write_price_events(&dir.join("price_changes.csv"), &path.price_events, "model time")?;
        let mut snaps = vec![(0.0, init.book.clone())];
        snaps.extend(path.snapshots.iter().cloned());
        snaps.push((path.terminal.time, path.terminal.book.clone()));
        write_snapshots(&dir.join("snapshots.csv"), &snaps, "time in model units; volumes in model units")?;
        let t = &path.terminal;
        write_profile(&dir.join("terminal_profile.csv"), &positions, &t.book.bid, &t.book.ask, "volumes in model units")?;
        write_profile(
            &dir.join("reflection_ledger.csv"),
            &positions,
            &t.ledger_bid,
            &t.ledger_ask,
            "cumulative reflection push per level, model units",
        )?;
        Ok((path.steps, path.price_events.len(), t.book.mid))
    })?;
    let mut table = String::from("run,steps,price_changes,terminal_mid\n");
    for (k, (steps, changes, mid)) in rows.iter().enumerate() {
        table.push_str(&format!("{k},{steps},{changes},{mid}\n"));
    }
    write_text(&common.out.join("summary.csv"), &table)?;
    Ok(Outcome {
        settings: json!({ "horizon": section.horizon, "dt": dt, "snapshot_times": options.snapshot_times }),
        exit: 0,
    })
}

pub fn simulate_macro_cmd(common: &Common) -> Result<Outcome> {
    let loaded = load(require_config(common)?)?;
    let scheme = loaded
        .config
        .scheme
        .clone()
        .ok_or_else(|| Error::config("config has no [scheme] section"))?;
    let mut params = SchemeParams::new(scheme.horizon, loaded.model.grid.num_ticks, scheme.steps)?;
    params.allow_unstable = scheme.allow_unstable;
    params.validate(&loaded.model.coefficients)?;
    let options = MacroOptions {
        snapshot_every: scheme.snapshot_every,
    };
    let init = MacroField::new(loaded.model.initial.clone());
    let positions: Vec<f64> = (1..=loaded.model.grid.levels()).map(|i| loaded.model.grid.position(i)).collect();
    info!(
        "macro: N = {}, M = {}, T = {}, {} runs",
        params.space_steps, params.time_steps, params.horizon, common.ensemble
    );
    let rows = run_ensemble(common.seed, common.ensemble, |k, rng| {
        let run = simulate_macro(&init, &loaded.model.coefficients, Some(&loaded.price), &params, &options, &mut (), rng)?;
        let dir = run_dir(common, k)?;
        write_price_series(&dir.join("price.csv"), &run.price_path, "model time")?;
        write_snapshots(&dir.join("snapshots.csv"), &run.snapshots, "time in model units; volume densities at interior grid nodes")?;
        write_profile(&dir.join("mean_profile.csv"), &positions, &run.mean_bid, &run.mean_ask, "time-averaged volume densities")?;
        info!("run {k}: QV {:.4}, {} price changes", run.quadratic_variation, run.jumps());
        Ok((run.quadratic_variation, run.up_jumps, run.down_jumps, run.terminal.price()))
    })?;
    let mut table = String::from("# quadratic variation in currency squared\nrun,quadratic_variation,up,down,terminal_price\n");
    for (k, (qv, up, down, price)) in rows.iter().enumerate() {
        table.push_str(&format!("{k},{qv},{up},{down},{price}\n"));
    }
    write_text(&common.out.join("summary.csv"), &table)?;
    let mean_qv = rows.iter().map(|r| r.0).sum::<f64>() / rows.len() as f64;
    Ok(Outcome {
        settings: json!({
            "horizon": params.horizon,
            "space_steps": params.space_steps,
            "time_steps": params.time_steps,
            "mean_quadratic_variation": mean_qv,
        }),
        exit: 0,
    })
}

pub fn calibrate_cmd(common: &Common, message: &Path, book: &Path) -> Result<Outcome> {
    let section = match &common.config {
        Some(path) => ModelConfig::load(path)?.calibration,
        None => CalibrationSection::default(),
    };
    let est = calibrate_files(message, book, &section)?;
    est.write_json(&common.out.join("estimates.json"))?;
    let path = common.out.join("levels.csv");
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    est.write_levels_csv(file)?;
    info!("gamma {:?}, delta {}", est.gamma, est.delta);
    Ok(Outcome {
        settings: json!({
            "message": message.display().to_string(),
            "book": book.display().to_string(),
            "levels": section.levels,
            "rows": est.diagnostics.rows,
        }),
        exit: 0,
    })
}

pub fn validate_cmd(common: &Common, ladder: LadderKind, seeds: usize) -> Result<Outcome> {
    let mut spec = match &common.config {
        Some(path) => {
            let config = ModelConfig::load(path)?;
            let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
            LadderSpec::with_config(ladder, config, base)
        }
        None => LadderSpec::builtin(ladder),
    };
    if common.ensemble > 1 {
        spec.paths = common.ensemble;
    }
    if let Some(times) = &common.snapshot_times {
        spec.times = times.clone();
    }
    let seeds: Vec<u64> = (0..seeds as u64).map(|k| common.seed.wrapping_add(k)).collect();
    info!("{} ladder, rungs {:?}, {} paths, seeds {seeds:?}", ladder.as_str(), spec.rungs, spec.paths);
    let report = cross_scale_report(&spec, &seeds, &Budget::default())?;
    write_text(&common.out.join("report.txt"), &report.text())?;
    report.write_csv(&common.out.join("cells.csv"))?;
    print!("{}", report.text());
    let exit = if report.incomplete {
        4
    } else if report.pass {
        0
    } else {
        1
    };
    Ok(Outcome {
        settings: json!({
            "ladder": ladder.as_str(),
            "rungs": spec.rungs,
            "paths": spec.paths,
            "seeds": seeds,
            "pass": report.pass,
            "incomplete": report.incomplete,
        }),
        exit,
    })
}
