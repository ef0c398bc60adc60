//! Model configuration file.
//!
//! A TOML document with the sections `grid`, `coefficients-bid`,
//! `coefficients-ask` (optional, defaults to the bid side), `price-change`
//! and `regeneration`, plus optional run sections used by the command line.
//! Coefficient tables are given either inline, as a constant, or as a
//! two-column CSV of `(grid position, value)` pairs that is linearly
//! interpolated onto the grid.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::book::MesoBook;
use super::coeffs::{AffineTable, CoefficientSet, SideCoefficients};
use super::grid::GridSpec;
use super::price::PriceChangeSpec;
use super::regen::RegenerationKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TableSpec {
    Constant {
        constant: f64,
    },
    Inline {
        base: Vec<f64>,
        #[serde(default)]
        slope: Option<Vec<f64>>,
    },
    Csv {
        csv: PathBuf,
        #[serde(default)]
        slope_csv: Option<PathBuf>,
    },
}

impl Default for TableSpec {
    fn default() -> Self {
        TableSpec::Constant { constant: 0.0 }
    }
}

impl TableSpec {
    pub fn resolve(&self, num_ticks: usize, base_dir: &Path) -> Result<AffineTable> {
        let levels = num_ticks - 1;
        match self {
            TableSpec::Constant { constant } => {
                AffineTable::new(vec![*constant; levels], vec![0.0; levels])
            }
            TableSpec::Inline { base, slope } => {
                if base.len() != levels {
                    return Err(Error::config(format!(
                        "table has {} entries, grid has {levels} levels",
                        base.len()
                    )));
                }
                let slope = slope.clone().unwrap_or_else(|| vec![0.0; levels]);
                AffineTable::new(base.clone(), slope)
            }
            TableSpec::Csv { csv, slope_csv } => {
                let base = read_profile_csv(&base_dir.join(csv), num_ticks)?;
                let slope = match slope_csv {
                    Some(p) => read_profile_csv(&base_dir.join(p), num_ticks)?,
                    None => vec![0.0; levels],
                };
                AffineTable::new(base, slope)
            }
        }
    }
}

/// Reads `(position, value)` rows and interpolates them at `i / num_ticks`.
pub fn read_profile_csv(path: &Path, num_ticks: usize) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::config(format!("cannot open {}: {e}", path.display())),
            _ => Error::Csv(e),
        })?;
    let mut points = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let parse = |k: usize| -> Result<f64> {
            record
                .get(k)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::Parse {
                    file: path.display().to_string(),
                    line: line + 1,
                    message: "expected two numeric columns".into(),
                })
        };
        let (x, y) = match (parse(0), parse(1)) {
            (Ok(x), Ok(y)) => (x, y),
            // tolerate a header row
            _ if line == 0 => continue,
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
        points.push((x, y));
    }
    if points.is_empty() {
        return Err(Error::config(format!("{} has no data rows", path.display())));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok((1..num_ticks)
        .map(|i| interpolate(&points, i as f64 / num_ticks as f64))
        .collect())
}

fn interpolate(points: &[(f64, f64)], x: f64) -> f64 {
    let first = points[0];
    let last = points[points.len() - 1];
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    let j = points.partition_point(|p| p.0 <= x);
    let (x0, y0) = points[j - 1];
    let (x1, y1) = points[j];
    if x1 == x0 {
        y1
    } else {
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SideSection {
    pub alpha: f64,
    #[serde(default)]
    pub sigma: TableSpec,
    #[serde(default)]
    pub limit: TableSpec,
    #[serde(default)]
    pub cancel: TableSpec,
}

impl SideSection {
    fn resolve(&self, num_ticks: usize, base_dir: &Path) -> Result<SideCoefficients> {
        Ok(SideCoefficients {
            sigma: self.sigma.resolve(num_ticks, base_dir)?,
            limit: self.limit.resolve(num_ticks, base_dir)?,
            cancel: self.cancel.resolve(num_ticks, base_dir)?,
            alpha: self.alpha,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceSection {
    pub gamma: f64,
    pub delta: f64,
    /// Imbalance window on `[0, 1]`; defaults to the jump size in grid units.
    #[serde(default)]
    pub window: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegenerationSection {
    #[serde(default)]
    pub rule: RegenerationKind,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(default)]
    pub mid: f64,
    #[serde(default)]
    pub bid: TableSpec,
    #[serde(default)]
    pub ask: TableSpec,
}

/// Settings of the forward SPDE scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub horizon: f64,
    pub steps: u64,
    #[serde(default)]
    pub allow_unstable: bool,
    /// Snapshot every this many steps; defaults to a fifth of the run.
    #[serde(default)]
    pub snapshot_every: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicroSection {
    pub scale: u64,
    pub horizon: f64,
    #[serde(default)]
    pub event_cap: Option<u64>,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MesoSection {
    pub horizon: f64,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

/// Calibration constants; defaults reproduce the one-hour, 50-level setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSection {
    pub levels: usize,
    /// Spatial normaliser: relative level `i` sits at `i / space_scale`.
    pub space_scale: f64,
    /// Observation window in model time units.
    pub duration: f64,
    /// Shares per model volume unit.
    pub volume_unit: f64,
    /// Currency per LOBSTER price unit.
    pub price_unit: f64,
    /// Tick size in LOBSTER price units.
    pub tick: i64,
    /// Smoothing rate used to back out the drift.
    pub alpha: f64,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        CalibrationSection {
            levels: 50,
            space_scale: 51.0,
            duration: 60.0,
            volume_unit: 1e4,
            price_unit: 1e-4,
            tick: 100,
            alpha: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub grid: GridSpec,
    #[serde(rename = "coefficients-bid")]
    pub coefficients_bid: SideSection,
    #[serde(rename = "coefficients-ask", default)]
    pub coefficients_ask: Option<SideSection>,
    #[serde(rename = "price-change")]
    pub price_change: PriceSection,
    #[serde(default)]
    pub regeneration: RegenerationSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub scheme: Option<SchemeSection>,
    #[serde(default)]
    pub micro: Option<MicroSection>,
    #[serde(default)]
    pub meso: Option<MesoSection>,
    #[serde(default)]
    pub calibration: CalibrationSection,
}

/// A configuration with every table resolved against the grid.
#[derive(Debug, Clone)]
pub struct ResolvedModel {
    pub grid: GridSpec,
    pub coefficients: CoefficientSet,
    pub price: PriceChangeSpec,
    pub regeneration: RegenerationKind,
    pub initial: MesoBook,
}

impl ModelConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Resolves tables; relative CSV paths are taken from `base_dir`.
    pub fn resolve(&self, base_dir: &Path) -> Result<ResolvedModel> {
        self.grid.validate()?;
        let n = self.grid.num_ticks;
        let bid = self.coefficients_bid.resolve(n, base_dir)?;
        let ask = match &self.coefficients_ask {
            Some(a) => a.resolve(n, base_dir)?,
            None => bid.clone(),
        };
        let coefficients = CoefficientSet::new(bid, ask)?;
        let window = self
            .price_change
            .window
            .unwrap_or(self.grid.jump_bins() as f64 / n as f64);
        let price = PriceChangeSpec::new(self.price_change.gamma, self.price_change.delta, window)?;
        let init_bid = self.initial.bid.resolve(n, base_dir)?.base;
        let init_ask = self.initial.ask.resolve(n, base_dir)?.base;
        let initial = MesoBook::new(init_bid, init_ask, self.initial.mid)?;
        Ok(ResolvedModel {
            grid: self.grid,
            coefficients,
            price,
            regeneration: self.regeneration.rule,
            initial,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    const BASIC: &str = r#"
[grid]
num_ticks = 4
tick_size = 0.01
jump_size = 0.01

[coefficients-bid]
alpha = 0.5
sigma = { constant = 1.0 }
limit = { base = [0.1, 0.2, 0.3], slope = [0.0, 0.0, 1.0] }

[price-change]
gamma = 10.0
delta = 2.0

[regeneration]
rule = "identity"
"#;

    #[test]
    fn parses_and_mirrors_ask_side() {
        let cfg = ModelConfig::from_toml_str(BASIC).unwrap();
        let model = cfg.resolve(Path::new(".")).unwrap();
        assert_eq!(model.coefficients.bid, model.coefficients.ask);
        assert_eq!(model.coefficients.bid.limit.eval(3, 2.0), 2.3);
        assert_eq!(model.coefficients.bid.cancel.eval(1, 5.0), 0.0);
        assert!((model.price.window - 0.25).abs() < 1e-15);
        assert_eq!(model.regeneration, RegenerationKind::Identity);
        assert_eq!(model.initial.total_volume(), 0.0);
    }

    #[test]
    fn rejects_wrong_table_length() {
        let text = BASIC.replace("[0.1, 0.2, 0.3]", "[0.1, 0.2]");
        let cfg = ModelConfig::from_toml_str(&text).unwrap();
        assert!(matches!(cfg.resolve(Path::new(".")), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = BASIC.replace("gamma = 10.0", "gamma = 10.0\nbogus = 1");
        assert!(ModelConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn csv_tables_are_interpolated() {
        let dir = tempfile::tempdir().unwrap();
        let mut f = std::fs::File::create(dir.path().join("sigma.csv")).unwrap();
        writeln!(f, "position,value\n0.0,0.0\n1.0,4.0").unwrap();
        let text = BASIC.replace("{ constant = 1.0 }", "{ csv = \"sigma.csv\" }");
        let cfg = ModelConfig::from_toml_str(&text).unwrap();
        let model = cfg.resolve(dir.path()).unwrap();
        assert_eq!(model.coefficients.bid.sigma.base, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ModelConfig::from_toml_str(BASIC).unwrap();
        let again = ModelConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, again);
    }
}
