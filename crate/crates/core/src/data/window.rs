use std::ops::Range;

use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime};
use serde::{Deserialize, Serialize};

use super::{parse_timestamp, Column, JunctionDataset};
use crate::error::{Error, Result};

/// Half-open `[start, end)` interval. Serialised as `start..end`; see
/// [`TimeRange::from_str`](std::str::FromStr) for the accepted forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TimeRange {
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
}

impl TimeRange {
    pub fn new(start: NaiveDateTime, end: NaiveDateTime) -> Self {
        TimeRange { start, end }
    }

    pub fn overlaps(&self, other: &TimeRange) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// Sample indices of this range on the dataset's grid.
    pub fn to_indices(&self, dataset: &JunctionDataset) -> Result<Range<usize>> {
        let step = dataset.interval() as i64;
        let offset = |t: NaiveDateTime| -> Result<usize> {
            let minutes = (t - dataset.start_time()).num_minutes();
            if (t - dataset.start_time()).num_seconds() % 60 != 0 || minutes % step != 0 {
                return Err(Error::config(format!(
                    "{t} is not on the {step}-minute grid of `{}`",
                    dataset.junction_id()
                )));
            }
            if minutes < 0 || minutes / step > dataset.len() as i64 {
                return Err(Error::config(format!(
                    "{t} lies outside the data of `{}` ({} .. {})",
                    dataset.junction_id(),
                    dataset.start_time(),
                    dataset.end_time()
                )));
            }
            Ok((minutes / step) as usize)
        };
        Ok(offset(self.start)?..offset(self.end)?)
    }
}

/// `YYYY-MM-DD..YYYY-MM-DD` covers whole days, the last one included.
/// Timestamps with a time of day (`2017-08-28T06:00..2017-08-28T09:00`)
/// give an exclusive end.
impl std::str::FromStr for TimeRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config(format!("`{s}` is not a `start..end` range"));
        let (a, b) = s.trim().split_once("..").ok_or_else(bad)?;
        let day = |t: &str| NaiveDate::parse_from_str(t.trim(), "%Y-%m-%d").ok();
        let range = match (day(a), day(b)) {
            (Some(start), Some(last)) => TimeRange::new(
                start.and_time(NaiveTime::MIN),
                (last + Duration::days(1)).and_time(NaiveTime::MIN),
            ),
            _ => TimeRange::new(
                parse_timestamp(a).ok_or_else(bad)?,
                parse_timestamp(b).ok_or_else(bad)?,
            ),
        };
        if range.is_empty() {
            return Err(Error::config(format!("range `{s}` is empty")));
        }
        Ok(range)
    }
}

impl TryFrom<String> for TimeRange {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<TimeRange> for String {
    fn from(r: TimeRange) -> String {
        r.to_string()
    }
}

impl std::fmt::Display for TimeRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}..{}",
            self.start.format("%Y-%m-%dT%H:%M"),
            self.end.format("%Y-%m-%dT%H:%M")
        )
    }
}

/// Training ranges (several, to express gapped training) and one test range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub train_ranges: Vec<TimeRange>,
    pub test_range: TimeRange,
}

impl WindowSpec {
    pub fn new(train_ranges: Vec<TimeRange>, test_range: TimeRange) -> Self {
        WindowSpec {
            train_ranges,
            test_range,
        }
    }

    /// Checks the ranges and returns the train segments (sorted, touching
    /// ranges merged) and the test range as dataset indices.
    pub fn resolve(&self, dataset: &JunctionDataset) -> Result<(Vec<Range<usize>>, Range<usize>)> {
        if self.train_ranges.is_empty() {
            return Err(Error::config("window has no training range"));
        }
        if self.test_range.is_empty() {
            return Err(Error::config("test range is empty"));
        }
        let mut train = self.train_ranges.clone();
        train.sort();
        for r in &train {
            if r.is_empty() {
                return Err(Error::config(format!("training range {r} is empty")));
            }
            if r.overlaps(&self.test_range) {
                return Err(Error::config(format!(
                    "training range {r} overlaps test range {}",
                    self.test_range
                )));
            }
        }
        for pair in train.windows(2) {
            if pair[0].overlaps(&pair[1]) {
                return Err(Error::config(format!(
                    "training ranges {} and {} overlap",
                    pair[0], pair[1]
                )));
            }
        }

        let mut segments: Vec<Range<usize>> = Vec::new();
        for r in &train {
            let idx = r.to_indices(dataset)?;
            if idx.is_empty() {
                return Err(Error::config(format!(
                    "training range {r} holds no samples"
                )));
            }
            match segments.last_mut() {
                Some(last) if last.end == idx.start => last.end = idx.end,
                _ => segments.push(idx),
            }
        }
        let test = self.test_range.to_indices(dataset)?;
        if test.is_empty() {
            return Err(Error::config(format!(
                "test range {} holds no samples",
                self.test_range
            )));
        }
        Ok((segments, test))
    }

    /// Total training span from the first training sample to the last.
    pub fn train_span(&self) -> Option<TimeRange> {
        let start = self.train_ranges.iter().map(|r| r.start).min()?;
        let end = self.train_ranges.iter().map(|r| r.end).max()?;
        Some(TimeRange::new(start, end))
    }
}

/// Model-facing slice of a junction dataset.
///
/// Holds one or more contiguous segments laid end to end. `segment_starts`
/// records where each segment begins, so lagged evaluation can stop at a
/// seam instead of reading across it.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetView {
    junction_id: String,
    interval: u32,
    inputs: Vec<Vec<f64>>,
    output: Vec<f64>,
    segment_starts: Vec<usize>,
}

impl DatasetView {
    pub fn new(
        junction_id: impl Into<String>,
        interval: u32,
        inputs: Vec<Vec<f64>>,
        output: Vec<f64>,
        segment_starts: Vec<usize>,
    ) -> Result<Self> {
        let n = output.len();
        if inputs.iter().any(|c| c.len() != n) {
            return Err(Error::integrity("view columns differ in length"));
        }
        if n == 0 {
            return Err(Error::config("empty view"));
        }
        if segment_starts.first() != Some(&0)
            || segment_starts.windows(2).any(|w| w[0] >= w[1])
            || segment_starts.last().is_some_and(|&s| s >= n)
        {
            return Err(Error::integrity(format!(
                "invalid segment starts {segment_starts:?} for a view of {n} samples"
            )));
        }
        Ok(DatasetView {
            junction_id: junction_id.into(),
            interval,
            inputs,
            output,
            segment_starts,
        })
    }

    /// Single-segment view over raw columns, mostly for tests and synthetic data.
    pub fn from_columns(inputs: Vec<Vec<f64>>, output: Vec<f64>) -> Result<Self> {
        DatasetView::new("ad-hoc", 1, inputs, output, vec![0])
    }

    /// Concatenate the given index ranges of `dataset`, each one a segment.
    pub fn from_ranges(dataset: &JunctionDataset, ranges: &[Range<usize>]) -> Result<Self> {
        let gather = |col: &Column| -> Vec<f64> {
            ranges
                .iter()
                .flat_map(|r| col.values[r.clone()].iter().copied())
                .collect()
        };
        let mut starts = Vec::with_capacity(ranges.len());
        let mut at = 0;
        for r in ranges {
            starts.push(at);
            at += r.len();
        }
        DatasetView::new(
            dataset.junction_id(),
            dataset.interval(),
            dataset.inputs().iter().map(gather).collect(),
            gather(dataset.output()),
            starts,
        )
    }

    pub fn junction_id(&self) -> &str {
        &self.junction_id
    }

    pub fn interval(&self) -> u32 {
        self.interval
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn input(&self, arm: usize) -> Option<&[f64]> {
        self.inputs.get(arm).map(Vec::as_slice)
    }

    pub fn output(&self) -> &[f64] {
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

    pub fn segment_starts(&self) -> &[usize] {
        &self.segment_starts
    }

    /// Number of seams between segments.
    pub fn boundary_count(&self) -> usize {
        self.segment_starts.len() - 1
    }

    /// Same samples with zero-valued input arms appended up to `target_arity`.
    pub fn padded(&self, target_arity: usize) -> Result<DatasetView> {
        if self.arity() > target_arity {
            return Err(Error::config(format!(
                "cannot pad {} inputs down to {target_arity}",
                self.arity()
            )));
        }
        let mut out = self.clone();
        out.inputs.resize(target_arity, vec![0.0; self.len()]);
        Ok(out)
    }
}

/// Cut a dataset into a (possibly gapped) training view and a test view.
pub fn slice(dataset: &JunctionDataset, spec: &WindowSpec) -> Result<(DatasetView, DatasetView)> {
    let (train, test) = spec.resolve(dataset)?;
    Ok((
        DatasetView::from_ranges(dataset, &train)?,
        DatasetView::from_ranges(dataset, &[test])?,
    ))
}

/// Append all-zero input arms so the dataset has exactly `target_arity` inputs.
pub fn pad_inputs(dataset: &JunctionDataset, target_arity: usize) -> Result<JunctionDataset> {
    let arity = dataset.arity();
    if arity > target_arity {
        return Err(Error::config(format!(
            "junction `{}` has {arity} inputs, more than the target arity {target_arity}",
            dataset.junction_id()
        )));
    }
    let mut inputs = dataset.inputs().to_vec();
    for k in arity..target_arity {
        inputs.push(Column::new(
            format!("{}_pad{k}", dataset.junction_id()),
            vec![0.0; dataset.len()],
        ));
    }
    JunctionDataset::new(
        dataset.junction_id(),
        dataset.start_time(),
        dataset.interval(),
        inputs,
        dataset.output().clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> NaiveDateTime {
        parse_timestamp(s).unwrap()
    }

    /// Three weeks of daily samples (interval 20 min would also work; the
    /// grid spacing only matters for index arithmetic).
    fn dataset(arity: usize) -> JunctionDataset {
        let n = 21 * 72;
        let inputs = (0..arity)
            .map(|k| Column::new(format!("X{k}"), (0..n).map(|i| (i + k) as f64).collect()))
            .collect();
        JunctionDataset::new(
            "J",
            ts("2017-08-28T00:00"),
            20,
            inputs,
            Column::new("Y", (0..n).map(|i| i as f64).collect()),
        )
        .unwrap()
    }

    #[test]
    fn empty_test_range_rejected() {
        let d = dataset(2);
        let spec = WindowSpec::new(
            vec![TimeRange::new(d.start_time(), d.end_time())],
            TimeRange::new(d.end_time(), d.end_time()),
        );
        assert!(matches!(slice(&d, &spec), Err(Error::Config(_))));
    }

    #[test]
    fn gapped_training_records_one_boundary() {
        let d = dataset(2);
        let spec = WindowSpec::new(
            vec![
                TimeRange::new(ts("2017-08-28T00:00"), ts("2017-09-04T00:00")),
                TimeRange::new(ts("2017-09-11T00:00"), ts("2017-09-17T00:00")),
            ],
            TimeRange::new(ts("2017-09-17T00:00"), ts("2017-09-18T00:00")),
        );
        let (train, test) = slice(&d, &spec).unwrap();
        assert_eq!(train.boundary_count(), 1);
        assert_eq!(train.segment_starts(), &[0, 7 * 72]);
        assert_eq!(train.len(), 13 * 72);
        assert_eq!(train.output()[7 * 72], (14 * 72) as f64);
        assert_eq!(test.boundary_count(), 0);
        assert_eq!(test.len(), 72);
    }

    #[test]
    fn touching_ranges_merge() {
        let d = dataset(1);
        let spec = WindowSpec::new(
            vec![
                TimeRange::new(ts("2017-09-04T00:00"), ts("2017-09-11T00:00")),
                TimeRange::new(ts("2017-08-28T00:00"), ts("2017-09-04T00:00")),
            ],
            TimeRange::new(ts("2017-09-11T00:00"), ts("2017-09-18T00:00")),
        );
        let (train, _) = slice(&d, &spec).unwrap();
        assert_eq!(train.boundary_count(), 0);
        assert_eq!(train.len(), 14 * 72);
    }

    #[test]
    fn overlap_with_test_rejected() {
        let d = dataset(1);
        let spec = WindowSpec::new(
            vec![TimeRange::new(ts("2017-08-28T00:00"), ts("2017-09-05T00:00"))],
            TimeRange::new(ts("2017-09-04T00:00"), ts("2017-09-11T00:00")),
        );
        assert!(matches!(slice(&d, &spec), Err(Error::Config(_))));
    }

    #[test]
    fn off_grid_and_out_of_bounds_rejected() {
        let d = dataset(1);
        let off = WindowSpec::new(
            vec![TimeRange::new(ts("2017-08-28T00:05"), ts("2017-09-04T00:00"))],
            TimeRange::new(ts("2017-09-04T00:00"), ts("2017-09-05T00:00")),
        );
        assert!(matches!(slice(&d, &off), Err(Error::Config(_))));
        let outside = WindowSpec::new(
            vec![TimeRange::new(ts("2017-08-28T00:00"), ts("2017-09-04T00:00"))],
            TimeRange::new(ts("2017-09-17T00:00"), ts("2017-09-19T00:00")),
        );
        assert!(matches!(slice(&d, &outside), Err(Error::Config(_))));
    }

    #[test]
    fn padding_appends_zero_arms() {
        let d = dataset(4);
        let padded = pad_inputs(&d, 5).unwrap();
        assert_eq!(padded.arity(), 5);
        assert!(padded.inputs()[4].values.iter().all(|v| *v == 0.0));
        assert_eq!(&padded.inputs()[..4], d.inputs());

        let d5 = dataset(5);
        assert_eq!(pad_inputs(&d5, 5).unwrap(), d5);
        assert!(matches!(pad_inputs(&d5, 4), Err(Error::Config(_))));
    }

    #[test]
    fn range_strings() {
        let r: TimeRange = "2017-08-28..2017-09-17".parse().unwrap();
        assert_eq!(r, TimeRange::new(ts("2017-08-28T00:00"), ts("2017-09-18T00:00")));
        let r: TimeRange = "2017-08-28T06:00..2017-08-28T09:15".parse().unwrap();
        assert_eq!(r.end, ts("2017-08-28T09:15"));
        assert_eq!(r.to_string().parse::<TimeRange>().unwrap(), r);
        assert!("2017-08-28".parse::<TimeRange>().is_err());
        assert!("2017-09-02..2017-09-01".parse::<TimeRange>().is_err());
        assert!("2017-09-02..tomorrow".parse::<TimeRange>().is_err());
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(json, "\"2017-08-28T06:00..2017-08-28T09:15\"");
    }
}
