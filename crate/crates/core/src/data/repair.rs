use std::io::Write;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::{Column, SeriesFrame};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillMethod {
    /// Lagrange cubic through two valid samples on each side.
    Cubic,
    /// Straight line between the nearest valid sample on each side.
    Linear,
    /// Boundary gap: line through the two nearest valid samples, extended.
    LinearExtrapolation,
    /// Boundary gap next to a single valid sample.
    Constant,
}

impl FillMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            FillMethod::Cubic => "cubic",
            FillMethod::Linear => "linear",
            FillMethod::LinearExtrapolation => "linear_extrapolation",
            FillMethod::Constant => "constant",
        }
    }
}

/// One repaired gap run, as recorded in the gap report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapFill {
    pub sensor_id: String,
    pub gap_start: NaiveDateTime,
    pub gap_length: usize,
    pub fill_method: FillMethod,
}

/// Fill every gap, keeping the gap mask as provenance.
pub fn interpolate_gaps(frame: &SeriesFrame) -> Result<SeriesFrame> {
    repair(frame).map(|(frame, _)| frame)
}

/// Like [`interpolate_gaps`], also returning one [`GapFill`] per gap run.
pub fn repair(frame: &SeriesFrame) -> Result<(SeriesFrame, Vec<GapFill>)> {
    let mut report = Vec::new();
    let mut columns = Vec::with_capacity(frame.columns().len());
    for col in frame.columns() {
        let (values, fills) = repair_column(col)?;
        for (start, len, method) in fills {
            report.push(GapFill {
                sensor_id: col.sensor_id.clone(),
                gap_start: frame.time_at(start),
                gap_length: len,
                fill_method: method,
            });
        }
        columns.push(Column::with_gaps(
            col.sensor_id.clone(),
            values,
            col.gap_mask.clone(),
        ));
    }
    let repaired = SeriesFrame::new(frame.start_time(), frame.interval(), columns)?;
    Ok((repaired, report))
}

type Fill = (usize, usize, FillMethod);

fn repair_column(col: &Column) -> Result<(Vec<f64>, Vec<Fill>)> {
    let mut values = col.values.clone();
    let mask = &col.gap_mask;
    if mask.is_empty() {
        return Ok((values, Vec::new()));
    }
    if mask.iter().all(|g| *g) {
        return Err(Error::UnrecoverableColumn(col.sensor_id.clone()));
    }

    let mut fills = Vec::new();
    let mut i = 0;
    while i < mask.len() {
        if !mask[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < mask.len() && mask[i] {
            i += 1;
        }
        let end = i;

        let left: Vec<usize> = (0..start).rev().filter(|&j| !mask[j]).take(2).collect();
        let right: Vec<usize> = (end..mask.len()).filter(|&j| !mask[j]).take(2).collect();
        let point = |j: usize| (j as f64, col.values[j]);

        let method = match (left.len(), right.len()) {
            (2, 2) => FillMethod::Cubic,
            (l, r) if l >= 1 && r >= 1 => FillMethod::Linear,
            (2, 0) | (0, 2) => FillMethod::LinearExtrapolation,
            _ => FillMethod::Constant,
        };
        for (t, slot) in values.iter_mut().enumerate().take(end).skip(start) {
            let x = t as f64;
            let v = match method {
                FillMethod::Cubic => lagrange(
                    &[point(left[1]), point(left[0]), point(right[0]), point(right[1])],
                    x,
                ),
                FillMethod::Linear => line(point(left[0]), point(right[0]), x),
                FillMethod::LinearExtrapolation => {
                    let side = if left.len() == 2 { &left } else { &right };
                    line(point(side[0]), point(side[1]), x)
                }
                FillMethod::Constant => {
                    let j = left.first().or(right.first()).copied().unwrap_or(0);
                    col.values[j]
                }
            };
            *slot = v.max(0.0);
        }
        fills.push((start, end - start, method));
    }
    Ok((values, fills))
}

fn lagrange(points: &[(f64, f64)], x: f64) -> f64 {
    points
        .iter()
        .enumerate()
        .map(|(i, &(xi, yi))| {
            let basis: f64 = points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, &(xj, _))| (x - xj) / (xi - xj))
                .product();
            yi * basis
        })
        .sum()
}

fn line((x0, y0): (f64, f64), (x1, y1): (f64, f64), x: f64) -> f64 {
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Gap report CSV: `sensor_id,gap_start,gap_length,fill_method`.
pub fn write_gap_report<W: Write>(report: &[GapFill], sink: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(["sensor_id", "gap_start", "gap_length", "fill_method"])?;
    for fill in report {
        writer.write_record([
            fill.sensor_id.as_str(),
            &fill.gap_start.format("%Y-%m-%dT%H:%M:%S").to_string(),
            &fill.gap_length.to_string(),
            fill.fill_method.as_str(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_timestamp;

    const GAP: Option<f64> = None;

    fn frame(samples: &[Option<f64>]) -> SeriesFrame {
        let values = samples.iter().map(|s| s.unwrap_or(0.0)).collect();
        let mask = samples.iter().map(Option::is_none).collect();
        SeriesFrame::new(
            parse_timestamp("2017-08-28T00:00").unwrap(),
            1,
            vec![Column::with_gaps("A", values, mask)],
        )
        .unwrap()
    }

    fn filled(samples: &[Option<f64>]) -> Vec<f64> {
        interpolate_gaps(&frame(samples)).unwrap().columns()[0].values.clone()
    }

    /// Independent oracle: cubic coefficients from the 4x4 Vandermonde
    /// system, solved by Gaussian elimination, then evaluated by Horner.
    fn vandermonde_cubic(points: [(f64, f64); 4], x: f64) -> f64 {
        let mut m = [[0.0f64; 5]; 4];
        for (row, &(px, py)) in m.iter_mut().zip(points.iter()) {
            row[0] = 1.0;
            row[1] = px;
            row[2] = px * px;
            row[3] = px * px * px;
            row[4] = py;
        }
        for col in 0..4 {
            let pivot = (col..4)
                .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
                .unwrap();
            m.swap(col, pivot);
            for r in 0..4 {
                if r != col {
                    let f = m[r][col] / m[col][col];
                    for c in col..5 {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
        let coef: Vec<f64> = (0..4).map(|r| m[r][4] / m[r][r]).collect();
        ((coef[3] * x + coef[2]) * x + coef[1]) * x + coef[0]
    }

    #[test]
    fn collinear_neighbours_give_the_line() {
        assert_eq!(filled(&[Some(0.0), Some(1.0), GAP, Some(3.0), Some(4.0)])[2], 2.0);
    }

    #[test]
    fn cubic_samples_are_reproduced() {
        // t^3 sampled at t = 0, 1, 3, 4; the hole at t = 2 must read 8.
        let oracle = vandermonde_cubic([(0.0, 0.0), (1.0, 1.0), (3.0, 27.0), (4.0, 64.0)], 2.0);
        assert!((oracle - 8.0).abs() < 1e-9);
        let got = filled(&[Some(0.0), Some(1.0), GAP, Some(27.0), Some(64.0)])[2];
        assert!((got - oracle).abs() < 1e-9, "{got}");
    }

    #[test]
    fn negative_cubic_is_clamped() {
        // The cubic through (0,0), (1,1), (3,9), (4,64) evaluates to -4 at t = 2.
        let oracle = vandermonde_cubic([(0.0, 0.0), (1.0, 1.0), (3.0, 9.0), (4.0, 64.0)], 2.0);
        assert!((oracle + 4.0).abs() < 1e-9);
        assert_eq!(filled(&[Some(0.0), Some(1.0), GAP, Some(9.0), Some(64.0)])[2], 0.0);
    }

    #[test]
    fn boundary_gap_extrapolates_linearly() {
        assert_eq!(filled(&[GAP, Some(5.0), Some(6.0)])[0], 4.0);
        let (_, report) = repair(&frame(&[GAP, Some(5.0), Some(6.0)])).unwrap();
        assert_eq!(report[0].fill_method, FillMethod::LinearExtrapolation);
    }

    #[test]
    fn thin_flank_falls_back_to_linear() {
        let v = filled(&[Some(2.0), GAP, GAP, Some(8.0), Some(9.0), Some(1.0)]);
        assert_eq!(&v[1..3], &[4.0, 6.0]);
    }

    #[test]
    fn single_valid_sample_is_held() {
        assert_eq!(filled(&[GAP, GAP, Some(3.0)]), vec![3.0, 3.0, 3.0]);
    }

    #[test]
    fn empty_column_is_unrecoverable() {
        let err = interpolate_gaps(&frame(&[GAP, GAP])).unwrap_err();
        assert!(matches!(err, Error::UnrecoverableColumn(_)));
    }

    #[test]
    fn mask_is_preserved_and_report_written() {
        let f = frame(&[Some(1.0), GAP, GAP, Some(4.0), Some(5.0), GAP]);
        let (repaired, report) = repair(&f).unwrap();
        assert_eq!(repaired.columns()[0].gap_mask, f.columns()[0].gap_mask);
        assert_eq!(report.len(), 2);
        assert_eq!(report[0].gap_length, 2);
        let mut buf = Vec::new();
        write_gap_report(&report, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("sensor_id,gap_start,gap_length,fill_method\n"));
        assert!(text.contains("A,2017-08-28T00:01:00,2,linear"));
    }
}
