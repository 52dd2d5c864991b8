//! Declarative experiment scenarios.
//!
//! A scenario is a TOML manifest naming the datasets, the methods to compare,
//! the GP and Holt-Winters settings and one experiment design. Running it
//! writes `tables/*.csv`, `plots/*.dat` and `models/*.sl` under an output
//! directory and returns the same numbers as typed values.
//!
//! ```toml
//! name = "gapped"
//! methods = ["HW", "LR", "SL"]
//! seed = 7
//!
//! [gp]
//! runs = 10
//!
//! [experiment]
//! kind = "gapped_training"
//! train = "2017-08-28..2017-09-17"
//! gap = "2017-09-04..2017-09-09"
//! test = "2017-09-18..2017-09-24"
//!
//! [[datasets]]
//! source = "synth"
//! junction_id = "S1"
//! arity = 3
//! days = 28
//! interval = 15
//! noise_stdev = 1.0
//! ground_truth = "0.5 * x0 + 0.3 * lag(x0) + x1 + 2"
//! seed = 1
//! ```

mod run;
mod tables;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{ForecastMode, DEFAULT_GRID_STEP};
use crate::data::{
    detect_interval, ingest_csv, interpolate_gaps, CsvSchema, JunctionDataset, JunctionManifest, TimeRange,
};
use crate::error::{Error, Result};
use crate::gp::GpConfig;
use crate::synth::{generate, SynthProfile};

pub use run::{
    fit_models, run_scenario, run_scenario_with_jobs, score, Cell, GappedRow, PValueRow, ResultRow,
    ScenarioOutcome, ShelfRow, StructureRow, TransferMatrix,
};
pub use tables::write_outputs;

/// The four compared forecasters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Holt-Winters on the output series alone.
    #[serde(rename = "HW")]
    HoltWinters,
    /// Ordinary least squares over the inputs.
    #[serde(rename = "LR")]
    Linear,
    /// Symbolic regression without `lag`.
    #[serde(rename = "SR")]
    Symbolic,
    /// Symbolic regression with `lag`.
    #[serde(rename = "SL")]
    SymbolicLag,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::HoltWinters,
        Method::Linear,
        Method::Symbolic,
        Method::SymbolicLag,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Method::HoltWinters => "HW",
            Method::Linear => "LR",
            Method::Symbolic => "SR",
            Method::SymbolicLag => "SL",
        }
    }

    pub fn is_gp(self) -> bool {
        matches!(self, Method::Symbolic | Method::SymbolicLag)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.code().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::config(format!("unknown method `{s}` (expected HW, LR, SR or SL)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HwSettings {
    pub grid_step: f64,
    pub forecast_mode: ForecastMode,
}

impl Default for HwSettings {
    fn default() -> Self {
        HwSettings {
            grid_step: DEFAULT_GRID_STEP,
            forecast_mode: ForecastMode::Rolling,
        }
    }
}

/// Where a junction's data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSource {
    Synth(SynthProfile),
    /// Long-format sensor CSV, gap-repaired and optionally aggregated.
    Csv {
        csv: PathBuf,
        manifest: PathBuf,
        junction: String,
        /// Grid of the file; inferred from the timestamps when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        raw_interval: Option<u32>,
        /// Target interval; the file's own when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        interval: Option<u32>,
    },
}

impl DatasetSource {
    pub fn load(&self) -> Result<JunctionDataset> {
        match self {
            DatasetSource::Synth(profile) => generate(profile),
            DatasetSource::Csv {
                csv,
                manifest,
                junction,
                raw_interval,
                interval,
            } => {
                let bytes = std::fs::read(csv).map_err(|e| {
                    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", csv.display())))
                })?;
                let schema = CsvSchema::default();
                let raw = match raw_interval {
                    Some(i) => *i,
                    None => detect_interval(&bytes[..], &schema.timestamp)?,
                };
                let frame = ingest_csv(&bytes[..], &CsvSchema::with_interval(raw))?;
                let manifest = JunctionManifest::load(manifest, junction)?;
                let dataset = JunctionDataset::from_frame(&interpolate_gaps(&frame)?, &manifest)?;
                match interval {
                    Some(i) if *i != raw => dataset.aggregate(*i),
                    _ => Ok(dataset),
                }
            }
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        if let DatasetSource::Csv { csv, manifest, .. } = self {
            for p in [csv, manifest] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }
}

/// The experiment design; each maps to one study of the evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    /// Train on `train` and on `train` minus `gap`; test both on `test`.
    GappedTraining {
        train: TimeRange,
        #[serde(default)]
        gap: Option<TimeRange>,
        test: TimeRange,
    },
    /// Train on the `w` weeks right before `test`, for each `w`.
    WindowLength { train_weeks: Vec<usize>, test: TimeRange },
    /// Same windows at several sampling intervals.
    SamplingInterval {
        intervals: Vec<u32>,
        train: TimeRange,
        test: TimeRange,
    },
    /// Train on each dataset, test on every dataset.
    TransferMatrix { train: TimeRange, test: TimeRange },
    /// Structure of the run-best models.
    StructureStats { train: TimeRange, test: TimeRange },
    /// One training window, an adjacent and a distant test window.
    ShelfLife {
        train: TimeRange,
        near_test: TimeRange,
        far_test: TimeRange,
    },
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::GappedTraining { .. } => "gapped_training",
            Experiment::WindowLength { .. } => "window_length",
            Experiment::SamplingInterval { .. } => "sampling_interval",
            Experiment::TransferMatrix { .. } => "transfer_matrix",
            Experiment::StructureStats { .. } => "structure_stats",
            Experiment::ShelfLife { .. } => "shelf_life",
        }
    }
}

/// The GP configuration of a symbolic method: SL uses `gp` as given, SR
/// is the same configuration minus `lag`.
pub fn method_config(gp: &GpConfig, method: Method) -> Result<GpConfig> {
    match method {
        Method::SymbolicLag if !gp.uses_lag() => Err(Error::config(
            "SL requested but the GP operator set has no `lag`",
        )),
        Method::SymbolicLag => Ok(gp.clone()),
        Method::Symbolic => {
            let sr = gp.without_lag();
            let mut check = sr.clone();
            check.operators = gp.operators.clone();
            debug_assert_eq!(&check, gp, "SR differs from SL beyond the operator set");
            Ok(sr)
        }
        _ => Err(Error::config(format!("{method} is not a GP method"))),
    }
}

fn default_confidence() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub methods: Vec<Method>,
    /// Overrides `gp.rng_seed` when set.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub gp: GpConfig,
    #[serde(default)]
    pub hw: HwSettings,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    pub experiment: Experiment,
    pub datasets: Vec<DatasetSource>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    /// Read a manifest; relative CSV paths are taken from its directory.
    pub fn load(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
        })?;
        let mut s = Scenario::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for d in &mut s.datasets {
            d.resolve_paths(base);
        }
        Ok(s)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// The seed every GP run of the scenario derives from.
    pub fn effective_seed(&self) -> u64 {
        self.seed.unwrap_or(self.gp.rng_seed)
    }

    /// GP configuration for a symbolic method, seeded by the scenario.
    pub fn gp_config(&self, method: Method) -> Result<GpConfig> {
        let mut c = self.gp.clone();
        c.rng_seed = self.effective_seed();
        method_config(&c, method)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::config("scenario needs a name"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("scenario lists no methods"));
        }
        if self.datasets.is_empty() {
            return Err(Error::config("scenario lists no datasets"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::config(format!(
                "confidence {} outside (0, 1)",
                self.confidence
            )));
        }
        if !(self.hw.grid_step > 0.0 && self.hw.grid_step < 1.0) {
            return Err(Error::config(format!(
                "HW grid step {} outside (0, 1)",
                self.hw.grid_step
            )));
        }
        if self.methods.iter().any(|m| m.is_gp()) {
            self.gp.validate()?;
        }
        if self.methods.contains(&Method::SymbolicLag) {
            self.gp_config(Method::SymbolicLag)?;
        }
        match &self.experiment {
            Experiment::WindowLength { train_weeks, .. } if train_weeks.is_empty() || train_weeks.contains(&0) => {
                Err(Error::config("train_weeks must be a non-empty list of positive counts"))
            }
            Experiment::SamplingInterval { intervals, .. } if intervals.is_empty() => {
                Err(Error::config("sampling_interval needs at least one interval"))
            }
            _ => Ok(()),
        }
    }
}
