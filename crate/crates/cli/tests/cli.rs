use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use lobscale::calibration::{LobsterWriter, SyntheticConfig, SyntheticLobster};
use lobscale::model::{
    AffineTable, CoefficientSet, GridSpec, MesoBook, PriceChangeSpec, PriceModel, RegenerationRule,
    SideCoefficients,
};
use lobscale::rng::stream_rng;
use lobscale::spde::{simulate_macro, MacroField, MacroOptions, SchemeParams};

const SMALL: &str = r#"
[grid]
num_ticks = 6
tick_size = 0.01
jump_size = 0.01

[coefficients-bid]
alpha = 0.01
sigma = { constant = 0.3 }
limit = { constant = 2.0 }
cancel = { base = [0.0, 0.0, 0.0, 0.0, 0.0], slope = [2.0, 2.0, 2.0, 2.0, 2.0] }

[price-change]
gamma = 50.0
delta = 2.0

[regeneration]
rule = "shift"

[initial]
mid = 100.0
bid = { constant = 1.0 }
ask = { constant = 0.8 }

[scheme]
horizon = 1.0
steps = 2000

[meso]
horizon = 0.2
dt = 0.001
snapshot_times = [0.1]

[micro]
scale = 100
horizon = 0.05
"#;

fn lobscale(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lobscale"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("model.toml");
    fs::write(&path, text).unwrap();
    path
}

fn manifest(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    lobscale(&args)
}

#[test]
fn trivial_ladder_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let o = lobscale(&["validate", "--ladder", "trivial", "--ensemble", "300", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("PASS"), "{report}");
    assert!(out.join("cells.csv").exists());
    let m = manifest(&out);
    assert_eq!(m["status"]["ok"], true);
    assert_eq!(m["settings"]["ladder"], "trivial");
}

#[test]
fn macro_output_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for (out, seed) in [(&a, "7"), (&b, "7"), (&c, "8")] {
        let o = run("simulate-macro", &config, out, &["--seed", seed, "--ensemble", "2"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for file in ["summary.csv", "run_0000/price.csv", "run_0001/snapshots.csv", "run_0001/mean_profile.csv"] {
        let x = fs::read(a.join(file)).unwrap();
        assert_eq!(x, fs::read(b.join(file)).unwrap(), "{file}");
    }
    assert_ne!(fs::read(a.join("summary.csv")).unwrap(), fs::read(c.join("summary.csv")).unwrap());
    let m = manifest(&a);
    assert_eq!(m["seed"], 7);
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    let files: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|f| f["file"].as_str().unwrap()).collect();
    assert!(files.contains(&"run_0000/price.csv"));
    assert_eq!(manifest(&a)["outputs"], manifest(&b)["outputs"]);
    let price = fs::read_to_string(a.join("run_0000/price.csv")).unwrap();
    assert!(price.starts_with("# time in model time"));
}

#[test]
fn micro_and_meso_write_their_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("micro");
    let o = run("simulate-micro", &config, &out, &["--snapshot-times", "0.01,0.02"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let snaps = fs::read_to_string(out.join("snapshots.csv")).unwrap();
    // initial, two requested times, terminal
    assert_eq!(snaps.lines().count(), 2 + 4);
    assert!(out.join("events.csv").exists());

    let out = dir.path().join("meso");
    let o = run("simulate-meso", &config, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["snapshots.csv", "terminal_profile.csv", "reflection_ledger.csv", "price_changes.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn config_errors_exit_2_and_still_write_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[grid]\nnum_ticks = 0\n");
    let out = dir.path().join("bad");
    let o = run("simulate-macro", &config, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    let m = manifest(&out);
    assert_eq!(m["status"]["ok"], false);
    assert_eq!(m["status"]["category"], "config");

    // stability guard
    let unstable = SMALL.replace("steps = 2000", "steps = 10").replace("alpha = 0.01", "alpha = 1.0");
    let config = write_config(dir.path(), &unstable);
    let o = run("simulate-macro", &config, &dir.path().join("unstable"), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn coarse_time_step_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("gamma = 50.0", "gamma = 1e7").replace("steps = 2000", "steps = 100");
    let config = write_config(dir.path(), &text);
    let out = dir.path().join("coarse");
    let o = run("simulate-macro", &config, &out, &[]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(manifest(&out)["status"]["category"], "numerical");
}

#[test]
fn malformed_lobster_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let msg = dir.path().join("m.csv");
    let book = dir.path().join("b.csv");
    fs::write(&msg, "34200.0,1,5,100,not-a-price,1\n").unwrap();
    fs::write(&book, "1000000,10,999900,10\n").unwrap();
    let config = write_config(dir.path(), &format!("{SMALL}\n[calibration]\nlevels = 1\n"));
    let out = dir.path().join("cal");
    let o = run(
        "calibrate",
        &config,
        &out,
        &["--message", msg.to_str().unwrap(), "--book", book.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(manifest(&out)["status"]["category"], "data");
}

#[test]
fn calibrate_recovers_planted_rates() {
    let (num_ticks, levels) = (6usize, 5usize);
    let (gamma, delta) = (2720.0, 12.76);
    let side = |limit: f64| SideCoefficients {
        sigma: AffineTable::constant(levels, 0.2),
        limit: AffineTable::constant(levels, limit),
        cancel: AffineTable::new(vec![0.0; levels], vec![10.0; levels]).unwrap(),
        alpha: 0.01,
    };
    let coeffs = CoefficientSet::new(side(10.0), side(1.0)).unwrap();
    let grid = GridSpec::unit_jump(num_ticks, 0.01).unwrap();
    let price = PriceModel::new(
        PriceChangeSpec::new(gamma, delta, 1.0 / num_ticks as f64).unwrap(),
        RegenerationRule::Shift,
        &grid,
    )
    .unwrap();
    let params = SchemeParams::new(60.0, num_ticks, 50_000).unwrap();
    let init = MacroField::new(MesoBook::new(vec![1.0; levels], vec![0.1; levels], 100.0).unwrap());

    let dir = tempfile::tempdir().unwrap();
    let msg = dir.path().join("message.csv");
    let book = dir.path().join("orderbook.csv");
    let mut writer = LobsterWriter::create(&msg, &book).unwrap();
    let mut gen = SyntheticLobster::new(&mut writer, &init, &params, SyntheticConfig::default()).unwrap();
    simulate_macro(&init, &coeffs, Some(&price), &params, &MacroOptions::default(), &mut gen, &mut stream_rng(3, 0))
        .unwrap();
    gen.finish().unwrap();
    writer.finish().unwrap();

    let config = write_config(
        dir.path(),
        &format!("{SMALL}\n[calibration]\nlevels = {levels}\nspace_scale = {num_ticks}.0\nduration = 60.0\n"),
    );
    let out = dir.path().join("cal");
    let o = run(
        "calibrate",
        &config,
        &out,
        &["--message", msg.to_str().unwrap(), "--book", book.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let est: Value = serde_json::from_str(&fs::read_to_string(out.join("estimates.json")).unwrap()).unwrap();
    let g = est["gamma"].as_f64().unwrap();
    let d = est["delta"].as_f64().unwrap();
    assert!((g / gamma - 1.0).abs() < 0.25, "gamma {g}");
    assert!((d / delta - 1.0).abs() < 0.25, "delta {d}");
    let levels_csv = fs::read_to_string(out.join("levels.csv")).unwrap();
    assert_eq!(levels_csv.lines().count(), 1 + levels);
}

#[test]
fn missing_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("none");
    let o = lobscale(&["simulate-macro", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(out.join("manifest.json").exists());
}
