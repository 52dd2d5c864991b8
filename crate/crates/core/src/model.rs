//! Persisted models.
//!
//! A model is a `.sl` text file with one formatted expression per line,
//! plus a JSON sidecar with the same stem holding the junction, interval,
//! training window, metrics and, for non-expression models, parameters.
//! Lines starting with `#` in the `.sl` file are comments.

use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::baselines::{ForecastMode, HwParams, HwState, LinearModel};
use crate::data::TimeRange;
use crate::error::{Error, Result};
use crate::expr::{parse, ExprTree};
use crate::metrics::EvalReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedModel {
    Expr {
        tree: ExprTree,
    },
    Linear(LinearModel),
    HoltWinters {
        params: HwParams,
        state: HwState,
        /// First instant after the training series; forecasts continue from here.
        train_end: NaiveDateTime,
        mode: ForecastMode,
    },
}

impl FittedModel {
    /// The model as an expression over the input arms, when it has one.
    pub fn expression(&self) -> Option<ExprTree> {
        match self {
            FittedModel::Expr { tree } => Some(tree.clone()),
            FittedModel::Linear(m) => Some(m.to_expr()),
            FittedModel::HoltWinters { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub junction_id: String,
    pub interval: u32,
    pub method: String,
    pub train_window: Vec<TimeRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_window: Option<TimeRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<EvalReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub model: FittedModel,
}

fn sidecar_path(sl: &Path) -> PathBuf {
    sl.with_extension("json")
}

/// Write `<stem>.sl` and `<stem>.json`.
pub fn save_model(path: &Path, sidecar: &Sidecar) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let text = match sidecar.model.expression() {
        Some(tree) => format!("{tree}\n"),
        None => format!("# {} model; parameters are in the sidecar\n", sidecar.method),
    };
    std::fs::write(path, text)?;
    let json = serde_json::to_string_pretty(sidecar)?;
    std::fs::write(sidecar_path(path), json + "\n")?;
    Ok(())
}

/// The expressions of a `.sl` file, in order.
pub fn load_expressions(path: &Path) -> Result<Vec<ExprTree>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(parse)
        .collect()
}

pub fn load_sidecar(path: &Path) -> Result<Sidecar> {
    let p = sidecar_path(path);
    let text = std::fs::read_to_string(&p).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", p.display()),
        ))
    })?;
    Ok(serde_json::from_str(&text)?)
}
