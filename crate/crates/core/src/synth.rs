//! Synthetic junctions with a known ground-truth formula.
//!
//! Each inflow arm is a base rate plus a daily sinusoid, a weekend step and
//! Gaussian noise, clamped at zero. The outflow is the ground-truth
//! expression evaluated over the arms plus Gaussian noise, also clamped.

use std::io::Write;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{check_interval, write_csv, Column, DatasetView, JunctionDataset};
use crate::error::{Error, Result};
use crate::expr::{evaluate_series, ExprTree};

/// Shape of one inflow arm, in vehicles per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmProfile {
    pub base: f64,
    pub daily_amplitude: f64,
    /// Phase of the daily sinusoid, as a fraction of a day.
    pub daily_phase: f64,
    /// Added on Saturdays and Sundays.
    pub weekend_offset: f64,
    pub noise_stdev: f64,
}

impl Default for ArmProfile {
    fn default() -> Self {
        ArmProfile {
            base: 20.0,
            daily_amplitude: 15.0,
            daily_phase: 0.0,
            weekend_offset: -5.0,
            noise_stdev: 4.0,
        }
    }
}

/// Level shift of the output from a given day on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeShift {
    pub from_day: usize,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthProfile {
    pub junction_id: String,
    /// Observed input arms.
    pub arity: usize,
    /// Extra arms that feed the ground truth but are not part of the
    /// dataset (an unmonitored inflow).
    #[serde(default)]
    pub hidden_arms: usize,
    pub days: usize,
    pub interval: u32,
    #[serde(default = "default_start")]
    pub start: NaiveDateTime,
    /// One entry per arm, observed then hidden; missing entries take
    /// staggered defaults.
    #[serde(default)]
    pub arms: Vec<ArmProfile>,
    /// Output noise.
    pub noise_stdev: f64,
    pub ground_truth: ExprTree,
    #[serde(default)]
    pub regime_shift: Option<RegimeShift>,
    pub seed: u64,
}

/// Monday 28 August 2017, 00:00.
fn default_start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2017, 8, 28)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap()
}

/// Arm `k` of the default layout: daily peaks staggered by three hours so
/// arms are not collinear.
pub fn default_arm(k: usize) -> ArmProfile {
    ArmProfile {
        daily_phase: k as f64 / 8.0,
        base: 20.0 - 2.0 * (k % 3) as f64,
        ..ArmProfile::default()
    }
}

impl SynthProfile {
    pub fn new(
        junction_id: impl Into<String>,
        arity: usize,
        days: usize,
        interval: u32,
        ground_truth: ExprTree,
        noise_stdev: f64,
        seed: u64,
    ) -> Self {
        SynthProfile {
            junction_id: junction_id.into(),
            arity,
            hidden_arms: 0,
            days,
            interval,
            start: default_start(),
            arms: Vec::new(),
            noise_stdev,
            ground_truth,
            regime_shift: None,
            seed,
        }
    }

    pub fn samples(&self) -> usize {
        self.days * 24 * 60 / self.interval as usize
    }

    fn arm(&self, k: usize) -> ArmProfile {
        self.arms.get(k).cloned().unwrap_or_else(|| default_arm(k))
    }

    pub fn validate(&self) -> Result<()> {
        check_interval(self.interval)?;
        if self.arity == 0 {
            return Err(Error::config("a synthetic junction needs at least one input"));
        }
        if self.samples() < 2 {
            return Err(Error::config("synthetic series must span at least two samples"));
        }
        let total = self.arity + self.hidden_arms;
        if let Some(k) = self.ground_truth.max_input() {
            if k >= total {
                return Err(Error::config(format!(
                    "ground truth reads x{k} but only {total} arms are generated"
                )));
            }
        }
        let noise_ok = |s: f64| s.is_finite() && s >= 0.0;
        if !noise_ok(self.noise_stdev) || !(0..total).all(|k| noise_ok(self.arm(k).noise_stdev)) {
            return Err(Error::config("noise standard deviations must be finite and ≥ 0"));
        }
        Ok(())
    }
}

/// Build the dataset. Deterministic in `profile.seed`.
pub fn generate(profile: &SynthProfile) -> Result<JunctionDataset> {
    profile.validate()?;
    let n = profile.samples();
    let total = profile.arity + profile.hidden_arms;
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let minutes = |t: usize| (t * profile.interval as usize) as f64;
    let is_weekend = |t: usize| {
        let when = profile.start + Duration::minutes(minutes(t) as i64);
        matches!(when.weekday(), Weekday::Sat | Weekday::Sun)
    };

    let arms: Vec<Vec<f64>> = (0..total)
        .map(|k| {
            let a = profile.arm(k);
            let noise = Normal::new(0.0, a.noise_stdev).expect("validated");
            (0..n)
                .map(|t| {
                    let day = minutes(t) / 1440.0;
                    let mut v = a.base
                        + a.daily_amplitude * (std::f64::consts::TAU * (day - a.daily_phase)).sin();
                    if is_weekend(t) {
                        v += a.weekend_offset;
                    }
                    (v + noise.sample(&mut rng)).max(0.0)
                })
                .collect()
        })
        .collect();

    let full = DatasetView::new(&profile.junction_id, profile.interval, arms, vec![0.0; n], vec![0])?;
    let truth = evaluate_series(&profile.ground_truth, &full)?;
    let noise = Normal::new(0.0, profile.noise_stdev).expect("validated");
    let samples_per_day = 1440 / profile.interval as usize;
    let y: Vec<f64> = truth
        .iter()
        .enumerate()
        .map(|(t, v)| {
            let mut v = v + noise.sample(&mut rng);
            if let Some(s) = profile.regime_shift {
                if t / samples_per_day >= s.from_day {
                    v += s.offset;
                }
            }
            v.max(0.0)
        })
        .collect();

    let id = &profile.junction_id;
    let inputs = full.inputs()[..profile.arity]
        .iter()
        .enumerate()
        .map(|(k, v)| Column::new(format!("{id}_x{k}"), v.clone()))
        .collect();
    JunctionDataset::new(
        id.clone(),
        profile.start,
        profile.interval,
        inputs,
        Column::new(format!("{id}_y"), y),
    )
}

/// Write the dataset in the ingest CSV format.
pub fn write_dataset_csv<W: Write>(dataset: &JunctionDataset, sink: W) -> Result<()> {
    write_csv(&dataset.to_frame(), sink)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ingest_csv, CsvSchema};
    use crate::expr::parse;

    fn profile(truth: &str, noise: f64) -> SynthProfile {
        SynthProfile::new("S", 3, 8, 15, parse(truth).unwrap(), noise, 42)
    }

    #[test]
    fn identity_output() {
        let d = generate(&profile("x0", 0.0)).unwrap();
        assert_eq!(d.output().values, d.inputs()[0].values);
        assert_eq!(d.len(), 8 * 96);
        assert_eq!(d.arity(), 3);
    }

    #[test]
    fn averaged_lag_output() {
        let d = generate(&profile("0.5 * x0 + 0.5 * lag(x0)", 0.0)).unwrap();
        let x = &d.inputs()[0].values;
        let y = &d.output().values;
        for t in 1..d.len() {
            assert!((y[t] - (x[t] + x[t - 1]) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_and_non_negative() {
        let p = profile("0.5 * x0 + 0.3 * lag(x0) + x1 - 30", 3.0);
        let a = generate(&p).unwrap();
        assert_eq!(a, generate(&p).unwrap());
        let mut q = p.clone();
        q.seed = 43;
        assert_ne!(a, generate(&q).unwrap());
        for c in a.inputs().iter().chain([a.output()]) {
            assert!(c.values.iter().all(|v| *v >= 0.0));
        }
        assert!(a.output().values.iter().any(|v| *v == 0.0));
    }

    #[test]
    fn noise_free_residual_is_zero() {
        let d = generate(&profile("0.5 * x0 + 0.3 * lag(x0) + x1 + 2", 0.0)).unwrap();
        let truth = evaluate_series(&parse("0.5 * x0 + 0.3 * lag(x0) + x1 + 2").unwrap(), &d.full_view()).unwrap();
        assert_eq!(truth, d.output().values);
    }

    #[test]
    fn weekends_are_quieter() {
        let mut p = profile("x0", 0.0);
        p.arms = vec![ArmProfile {
            noise_stdev: 0.0,
            daily_amplitude: 0.0,
            ..Default::default()
        }];
        let d = generate(&p).unwrap();
        // Starts on a Monday: day 5 is Saturday.
        let x = &d.inputs()[0].values;
        assert_eq!(x[0], 20.0);
        assert_eq!(x[5 * 96], 15.0);
        assert_eq!(x[7 * 96], 20.0);
    }

    #[test]
    fn hidden_arm_and_regime_shift() {
        let mut p = profile("x0 + x3", 0.0);
        assert!(generate(&p).is_err());
        p.hidden_arms = 1;
        let d = generate(&p).unwrap();
        assert_eq!(d.arity(), 3);
        let mut shifted = p.clone();
        shifted.regime_shift = Some(RegimeShift {
            from_day: 4,
            offset: 10.0,
        });
        let s = generate(&shifted).unwrap();
        assert_eq!(s.output().values[..4 * 96], d.output().values[..4 * 96]);
        assert_eq!(s.output().values[4 * 96], d.output().values[4 * 96] + 10.0);
    }

    #[test]
    fn csv_round_trip() {
        let d = generate(&profile("x0 + lag(x1)", 1.0)).unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&d, &mut buf).unwrap();
        let frame = ingest_csv(&buf[..], &CsvSchema::with_interval(15)).unwrap();
        let back = JunctionDataset::from_frame(&frame, &d.manifest()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn profile_from_toml() {
        let p: SynthProfile = toml::from_str(
            r#"
            junction_id = "T"
            arity = 2
            days = 7
            interval = 15
            noise_stdev = 1.0
            ground_truth = "0.5 * x0 + lag(x1)"
            seed = 1
            "#,
        )
        .unwrap();
        assert_eq!(p.start, default_start());
        assert_eq!(generate(&p).unwrap().len(), 7 * 96);
    }
}
