//! Sensor data pipeline: ingest, gap repair, aggregation and junction views.
//!
//! Raw sensor exports arrive as long-format CSV (`timestamp,sensor_id,count`)
//! on a one-minute grid with holes. [`ingest_csv`] turns them into a
//! [`SeriesFrame`], [`interpolate_gaps`] repairs the holes, [`aggregate`]
//! sums to coarser sampling intervals, and [`JunctionDataset`] binds the
//! columns of one junction into inputs `X0..Xn` and an output `Y`.

mod aggregate;
mod ingest;
mod repair;
mod window;

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use aggregate::aggregate;
pub use ingest::{detect_interval, ingest_csv, parse_timestamp, write_csv, CsvSchema};
pub use repair::{interpolate_gaps, repair, write_gap_report, FillMethod, GapFill};
pub use window::{pad_inputs, slice, DatasetView, TimeRange, WindowSpec};

/// Sampling intervals, in minutes, that a frame may carry.
pub const ALLOWED_INTERVALS: [u32; 5] = [1, 5, 10, 15, 20];

/// One sensor's value stream plus the mask of originally-missing samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub sensor_id: String,
    pub values: Vec<f64>,
    pub gap_mask: Vec<bool>,
}

impl Column {
    /// A gap-free column.
    pub fn new(sensor_id: impl Into<String>, values: Vec<f64>) -> Self {
        let gap_mask = vec![false; values.len()];
        Column {
            sensor_id: sensor_id.into(),
            values,
            gap_mask,
        }
    }

    pub fn with_gaps(sensor_id: impl Into<String>, values: Vec<f64>, gap_mask: Vec<bool>) -> Self {
        Column {
            sensor_id: sensor_id.into(),
            values,
            gap_mask,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn gap_count(&self) -> usize {
        self.gap_mask.iter().filter(|g| **g).count()
    }
}

/// Regularly sampled multivariate count series.
///
/// Immutable once built: every constructor checks that all columns share one
/// length, that the gap masks line up with the values, and that the interval
/// is one of [`ALLOWED_INTERVALS`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesFrame {
    start_time: NaiveDateTime,
    interval: u32,
    columns: Vec<Column>,
}

impl SeriesFrame {
    pub fn new(start_time: NaiveDateTime, interval: u32, columns: Vec<Column>) -> Result<Self> {
        check_interval(interval)?;
        if let Some(first) = columns.first() {
            for col in &columns {
                if col.values.len() != first.values.len() {
                    return Err(Error::integrity(format!(
                        "column `{}` has {} samples, expected {}",
                        col.sensor_id,
                        col.values.len(),
                        first.values.len()
                    )));
                }
                if col.gap_mask.len() != col.values.len() {
                    return Err(Error::integrity(format!(
                        "column `{}` gap mask length {} differs from value length {}",
                        col.sensor_id,
                        col.gap_mask.len(),
                        col.values.len()
                    )));
                }
            }
        }
        Ok(SeriesFrame {
            start_time,
            interval,
            columns,
        })
    }

    pub fn start_time(&self) -> NaiveDateTime {
        self.start_time
    }

    pub fn interval(&self) -> u32 {
        self.interval
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, sensor_id: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.sensor_id == sensor_id)
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Column::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Timestamp of sample `index`.
    pub fn time_at(&self, index: usize) -> NaiveDateTime {
        self.start_time + Duration::minutes(index as i64 * self.interval as i64)
    }

    pub fn into_columns(self) -> Vec<Column> {
        self.columns
    }
}

pub(crate) fn check_interval(interval: u32) -> Result<()> {
    if ALLOWED_INTERVALS.contains(&interval) {
        Ok(())
    } else {
        Err(Error::config(format!(
            "sampling interval {interval} min is not one of {ALLOWED_INTERVALS:?}"
        )))
    }
}

/// Which sensors make up a junction. Read from JSON or TOML.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JunctionManifest {
    pub junction_id: String,
    pub inputs: Vec<String>,
    pub output: String,
}

/// A file may describe one junction or a list of them under `junctions`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ManifestFile {
    Many { junctions: Vec<JunctionManifest> },
    One(JunctionManifest),
}

impl JunctionManifest {
    /// Parse a manifest file; the format is picked from the extension
    /// (`.json`, anything else is read as TOML).
    pub fn load_all(path: &std::path::Path) -> Result<Vec<JunctionManifest>> {
        let text = std::fs::read_to_string(path)?;
        let parsed: ManifestFile = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text)?
        };
        Ok(match parsed {
            ManifestFile::Many { junctions } => junctions,
            ManifestFile::One(one) => vec![one],
        })
    }

    pub fn load(path: &std::path::Path, junction_id: &str) -> Result<JunctionManifest> {
        Self::load_all(path)?
            .into_iter()
            .find(|m| m.junction_id == junction_id)
            .ok_or_else(|| {
                Error::config(format!(
                    "junction `{junction_id}` not found in {}",
                    path.display()
                ))
            })
    }
}

/// Inputs `X0..X(n-1)` and output `Y` of one junction on a shared grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JunctionDataset {
    junction_id: String,
    start_time: NaiveDateTime,
    interval: u32,
    inputs: Vec<Column>,
    output: Column,
}

/// Largest input arity a raw junction may have before padding.
pub const MAX_RAW_ARITY: usize = 5;

impl JunctionDataset {
    pub fn new(
        junction_id: impl Into<String>,
        start_time: NaiveDateTime,
        interval: u32,
        inputs: Vec<Column>,
        output: Column,
    ) -> Result<Self> {
        let junction_id = junction_id.into();
        check_interval(interval)?;
        if inputs.is_empty() {
            return Err(Error::config(format!(
                "junction `{junction_id}` has no input arms"
            )));
        }
        for col in inputs.iter().chain(std::iter::once(&output)) {
            if col.len() != output.len() || col.gap_mask.len() != col.len() {
                return Err(Error::integrity(format!(
                    "junction `{junction_id}`: column `{}` is misaligned",
                    col.sensor_id
                )));
            }
        }
        Ok(JunctionDataset {
            junction_id,
            start_time,
            interval,
            inputs,
            output,
        })
    }

    /// Pick the manifest's sensors out of a frame.
    pub fn from_frame(frame: &SeriesFrame, manifest: &JunctionManifest) -> Result<Self> {
        if manifest.inputs.len() > MAX_RAW_ARITY {
            return Err(Error::config(format!(
                "junction `{}` lists {} inputs; at most {MAX_RAW_ARITY} are supported",
                manifest.junction_id,
                manifest.inputs.len()
            )));
        }
        let pick = |id: &str| {
            frame.column(id).cloned().ok_or_else(|| {
                Error::integrity(format!(
                    "sensor `{id}` of junction `{}` is missing from the data",
                    manifest.junction_id
                ))
            })
        };
        let inputs = manifest
            .inputs
            .iter()
            .map(|id| pick(id))
            .collect::<Result<Vec<_>>>()?;
        let output = pick(&manifest.output)?;
        JunctionDataset::new(
            manifest.junction_id.clone(),
            frame.start_time(),
            frame.interval(),
            inputs,
            output,
        )
    }

    pub fn junction_id(&self) -> &str {
        &self.junction_id
    }

    pub fn start_time(&self) -> NaiveDateTime {
        self.start_time
    }

    pub fn interval(&self) -> u32 {
        self.interval
    }

    pub fn inputs(&self) -> &[Column] {
        &self.inputs
    }

    pub fn output(&self) -> &Column {
        &self.output
    }

    pub fn arity(&self) -> usize {
        self.inputs.len()
    }

    pub fn len(&self) -> usize {
        self.output.len()
    }

    pub fn is_empty(&self) -> bool {
        self.output.is_empty()
    }

    pub fn end_time(&self) -> NaiveDateTime {
        self.time_at(self.len())
    }

    pub fn time_at(&self, index: usize) -> NaiveDateTime {
        self.start_time + Duration::minutes(index as i64 * self.interval as i64)
    }

    /// All columns, inputs first, as a frame.
    pub fn to_frame(&self) -> SeriesFrame {
        let mut columns = self.inputs.clone();
        columns.push(self.output.clone());
        SeriesFrame {
            start_time: self.start_time,
            interval: self.interval,
            columns,
        }
    }

    /// The manifest that reproduces this dataset from its own frame.
    pub fn manifest(&self) -> JunctionManifest {
        JunctionManifest {
            junction_id: self.junction_id.clone(),
            inputs: self.inputs.iter().map(|c| c.sensor_id.clone()).collect(),
            output: self.output.sensor_id.clone(),
        }
    }

    /// Re-sample every column to a coarser interval by summation.
    pub fn aggregate(&self, target_interval: u32) -> Result<JunctionDataset> {
        let frame = aggregate(&self.to_frame(), target_interval)?;
        JunctionDataset::from_frame(&frame, &self.manifest())
    }

    /// The whole dataset as a single-segment view.
    pub fn full_view(&self) -> DatasetView {
        DatasetView::new(
            self.junction_id.clone(),
            self.interval,
            self.inputs.iter().map(|c| c.values.clone()).collect(),
            self.output.values.clone(),
            vec![0],
        )
        .expect("a dataset is always a valid view")
    }
}
