use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{Duration, NaiveDateTime, Timelike};

use super::{check_interval, Column, SeriesFrame};
use crate::error::{Error, Result};

/// Column mapping for long-format sensor CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub timestamp: String,
    pub sensor_id: String,
    pub count: String,
    /// Grid spacing of the timestamps, in minutes. Raw exports use 1.
    pub interval: u32,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            timestamp: "timestamp".into(),
            sensor_id: "sensor_id".into(),
            count: "count".into(),
            interval: 1,
        }
    }
}

impl CsvSchema {
    pub fn with_interval(interval: u32) -> Self {
        CsvSchema {
            interval,
            ..CsvSchema::default()
        }
    }
}

const TIMESTAMP_FORMATS: [&str; 4] = [
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M",
];

/// Parse an ISO-8601 local timestamp, with or without seconds.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    TIMESTAMP_FORMATS
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(s, fmt).ok())
}

/// Read long-format sensor rows into a frame with one column per sensor.
///
/// Holes in the grid become gap-masked placeholder zeros, as do empty count
/// cells. Columns appear in order of first appearance of each sensor.
pub fn ingest_csv<R: Read>(source: R, schema: &CsvSchema) -> Result<SeriesFrame> {
    check_interval(schema.interval)?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(source);

    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or(Error::Parse {
            line: 1,
            message: format!("missing column `{name}` in header"),
        })
    };
    let ts_idx = find(&schema.timestamp)?;
    let sensor_idx = find(&schema.sensor_id)?;
    let count_idx = find(&schema.count)?;

    let mut sensor_order: Vec<String> = Vec::new();
    let mut readings: BTreeMap<(NaiveDateTime, usize), Option<f64>> = BTreeMap::new();

    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let field = |idx: usize| {
            record.get(idx).ok_or_else(|| Error::Parse {
                line,
                message: format!("expected at least {} fields, got {}", idx + 1, record.len()),
            })
        };

        let raw_ts = field(ts_idx)?;
        let ts = parse_timestamp(raw_ts).ok_or_else(|| Error::Parse {
            line,
            message: format!("unparseable timestamp `{raw_ts}`"),
        })?;
        if ts.second() != 0 || ts.nanosecond() != 0 {
            return Err(Error::Parse {
                line,
                message: format!("timestamp `{raw_ts}` is not on a whole minute"),
            });
        }

        let sensor = field(sensor_idx)?;
        if sensor.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty sensor id".into(),
            });
        }
        let sensor_pos = match sensor_order.iter().position(|s| s == sensor) {
            Some(p) => p,
            None => {
                sensor_order.push(sensor.to_string());
                sensor_order.len() - 1
            }
        };

        let raw_count = field(count_idx)?;
        let count = if raw_count.is_empty() {
            None
        } else {
            let v: f64 = raw_count.parse().map_err(|_| Error::Parse {
                line,
                message: format!("count `{raw_count}` is not a number"),
            })?;
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Parse {
                    line,
                    message: format!("count `{raw_count}` must be a non-negative number"),
                });
            }
            Some(v)
        };

        if readings.insert((ts, sensor_pos), count).is_some() {
            return Err(Error::integrity(format!(
                "duplicate reading for sensor `{sensor}` at {ts} (line {line})"
            )));
        }
    }

    let (first, last) = match (readings.keys().next(), readings.keys().next_back()) {
        (Some(a), Some(b)) => (a.0, b.0),
        _ => return Err(Error::integrity("no data rows")),
    };
    let step = schema.interval as i64;
    let span = (last - first).num_minutes();
    let len = (span / step + 1) as usize;

    let mut values = vec![vec![0.0; len]; sensor_order.len()];
    let mut gaps = vec![vec![true; len]; sensor_order.len()];
    for ((ts, sensor), count) in readings {
        let offset = (ts - first).num_minutes();
        if offset % step != 0 {
            return Err(Error::integrity(format!(
                "timestamp {ts} is off the {step}-minute grid starting at {first}"
            )));
        }
        let idx = (offset / step) as usize;
        if let Some(v) = count {
            values[sensor][idx] = v;
            gaps[sensor][idx] = false;
        }
    }

    let columns = sensor_order
        .into_iter()
        .zip(values.into_iter().zip(gaps))
        .map(|(id, (v, g))| Column::with_gaps(id, v, g))
        .collect();
    SeriesFrame::new(first, schema.interval, columns)
}

/// Grid spacing of a long-format CSV: the largest allowed interval dividing
/// every distance between its timestamps.
pub fn detect_interval<R: Read>(source: R, timestamp_column: &str) -> Result<u32> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(source);
    let idx = reader
        .headers()?
        .iter()
        .position(|h| h == timestamp_column)
        .ok_or(Error::Parse {
            line: 1,
            message: format!("missing column `{timestamp_column}` in header"),
        })?;
    let mut first: Option<NaiveDateTime> = None;
    let mut step = 0i64;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            line: i + 2,
            message: e.to_string(),
        })?;
        let raw = record.get(idx).unwrap_or_default();
        let ts = parse_timestamp(raw).ok_or_else(|| Error::Parse {
            line: i + 2,
            message: format!("unparseable timestamp `{raw}`"),
        })?;
        let origin = *first.get_or_insert(ts);
        step = gcd(step, (ts - origin).num_minutes().abs());
    }
    if step == 0 {
        return Err(Error::integrity(
            "cannot infer the sampling interval from fewer than two distinct timestamps",
        ));
    }
    super::ALLOWED_INTERVALS
        .iter()
        .rev()
        .find(|i| step % **i as i64 == 0)
        .copied()
        .ok_or_else(|| Error::integrity(format!("timestamps are {step} minutes apart")))
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Write a frame back out in the long format [`ingest_csv`] reads.
///
/// Gap samples are emitted as empty count cells so a round trip preserves
/// the mask; values use the shortest exact decimal representation.
pub fn write_csv<W: Write>(frame: &SeriesFrame, sink: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(["timestamp", "sensor_id", "count"])?;
    for i in 0..frame.len() {
        let ts = (frame.start_time() + Duration::minutes(i as i64 * frame.interval() as i64))
            .format("%Y-%m-%dT%H:%M:%S")
            .to_string();
        for col in frame.columns() {
            let count = if col.gap_mask[i] {
                String::new()
            } else {
                format!("{}", col.values[i])
            };
            writer.write_record([ts.as_str(), col.sensor_id.as_str(), count.as_str()])?;
        }
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ingest(text: &str) -> Result<SeriesFrame> {
        ingest_csv(text.as_bytes(), &CsvSchema::default())
    }

    #[test]
    fn interval_detection() {
        let text = "timestamp,sensor_id,count\n\
                    2017-08-28T00:00,A,1\n2017-08-28T00:00,B,1\n\
                    2017-08-28T00:30,A,2\n2017-08-28T01:15,A,2\n";
        assert_eq!(detect_interval(text.as_bytes(), "timestamp").unwrap(), 15);
        let odd = "timestamp,sensor_id,count\n2017-08-28T00:00,A,1\n2017-08-28T00:07,A,1\n";
        assert_eq!(detect_interval(odd.as_bytes(), "timestamp").unwrap(), 1);
        let one = "timestamp,sensor_id,count\n2017-08-28T00:00,A,1\n";
        assert!(detect_interval(one.as_bytes(), "timestamp").is_err());
        assert!(detect_interval(one.as_bytes(), "time").is_err());
    }

    #[test]
    fn three_rows_no_gaps() {
        let frame = ingest(
            "timestamp,sensor_id,count\n\
             2017-08-28T00:00:00,A,4\n\
             2017-08-28T00:01:00,A,5\n\
             2017-08-28T00:02:00,A,6\n",
        )
        .unwrap();
        assert_eq!(frame.len(), 3);
        assert_eq!(frame.columns()[0].values, vec![4.0, 5.0, 6.0]);
        assert_eq!(frame.columns()[0].gap_count(), 0);
    }

    #[test]
    fn hole_in_grid_is_marked() {
        let frame = ingest(
            "timestamp,sensor_id,count\n\
             2017-08-28 00:02,A,6\n\
             2017-08-28 00:00,A,4\n",
        )
        .unwrap();
        assert_eq!(frame.len(), 3);
        assert_eq!(frame.columns()[0].gap_mask, vec![false, true, false]);
        assert_eq!(frame.columns()[0].values[2], 6.0);
    }

    #[test]
    fn empty_count_is_missing() {
        let frame = ingest(
            "timestamp,sensor_id,count\n\
             2017-08-28T00:00:00,A,1\n\
             2017-08-28T00:01:00,A,\n\
             2017-08-28T00:02:00,A,3\n",
        )
        .unwrap();
        assert_eq!(frame.columns()[0].gap_mask, vec![false, true, false]);
    }

    #[test]
    fn duplicate_reading_rejected() {
        let err = ingest(
            "timestamp,sensor_id,count\n\
             2017-08-28T00:00:00,A,1\n\
             2017-08-28T00:00:00,A,2\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Integrity(_)), "{err}");
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = ingest(
            "timestamp,sensor_id,count\n\
             2017-08-28T00:00:00,A,1\n\
             yesterday,A,2\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");

        let err = ingest("timestamp,sensor_id,count\n2017-08-28T00:00:00,A,-1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn several_sensors_share_grid() {
        let frame = ingest(
            "timestamp,sensor_id,count\n\
             2017-08-28T00:00:00,A,1\n\
             2017-08-28T00:00:00,B,7\n\
             2017-08-28T00:01:00,A,2\n",
        )
        .unwrap();
        assert_eq!(frame.columns().len(), 2);
        assert_eq!(frame.column("B").unwrap().gap_mask, vec![false, true]);
    }

    #[test]
    fn off_grid_timestamp_rejected() {
        let text = "timestamp,sensor_id,count\n\
                    2017-08-28T00:00:00,A,1\n\
                    2017-08-28T00:07:00,A,2\n";
        let err = ingest_csv(text.as_bytes(), &CsvSchema::with_interval(5)).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)), "{err}");
    }

    #[test]
    fn write_then_ingest_round_trips() {
        let start = parse_timestamp("2017-08-28T00:00").unwrap();
        let frame = SeriesFrame::new(
            start,
            15,
            vec![
                Column::with_gaps("A", vec![1.5, 0.0, 2.25], vec![false, true, false]),
                Column::new("B", vec![0.1, 1e-7, 12345.678]),
            ],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_csv(&frame, &mut buf).unwrap();
        let back = ingest_csv(buf.as_slice(), &CsvSchema::with_interval(15)).unwrap();
        assert_eq!(back, frame);
    }
}
