//! Error metrics, replication summaries and the two-sample significance test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Test-set accuracy of one model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rmse: f64,
    pub mae: f64,
    /// Population standard deviation of the absolute errors.
    pub stdev_abs_err: f64,
    /// Coefficient of determination; NaN when the actuals have no variance.
    pub r_squared: f64,
    pub n: usize,
}

impl EvalReport {
    pub fn has_r_squared(&self) -> bool {
        !self.r_squared.is_nan()
    }
}

/// Compare predictions against actuals sample by sample.
pub fn evaluate(pred: &[f64], actual: &[f64]) -> Result<EvalReport> {
    if pred.len() != actual.len() {
        return Err(Error::Evaluation(format!(
            "{} predictions for {} actual samples",
            pred.len(),
            actual.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::Evaluation("nothing to evaluate".into()));
    }
    let n = actual.len() as f64;
    let mut sse = 0.0;
    let mut sae = 0.0;
    for (p, a) in pred.iter().zip(actual) {
        let e = p - a;
        sse += e * e;
        sae += e.abs();
    }
    let mae = sae / n;
    let spread = pred
        .iter()
        .zip(actual)
        .map(|(p, a)| {
            let d = (p - a).abs() - mae;
            d * d
        })
        .sum::<f64>()
        / n;

    let mean = actual.iter().sum::<f64>() / n;
    let sst: f64 = actual.iter().map(|a| (a - mean) * (a - mean)).sum();
    let r_squared = if sst > 0.0 { 1.0 - sse / sst } else { f64::NAN };

    Ok(EvalReport {
        // Equal-magnitude errors can round the root an ulp below the mean.
        rmse: (sse / n).sqrt().max(mae),
        mae,
        stdev_abs_err: spread.sqrt(),
        r_squared,
        n: actual.len(),
    })
}

/// Mean ± confidence half-width over replicated runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub mean_rmse: f64,
    pub ci_rmse: f64,
    pub mean_mae: f64,
    pub ci_mae: f64,
    pub runs: usize,
    pub level: f64,
}

/// Two-sided Student-t confidence interval across run reports.
pub fn summarize_runs(reports: &[EvalReport], level: f64) -> Result<ReplicationSummary> {
    if reports.is_empty() {
        return Err(Error::config("cannot summarise zero runs"));
    }
    if !(0.0..1.0).contains(&level) || level == 0.0 {
        return Err(Error::config(format!("confidence level {level} outside (0, 1)")));
    }
    let rmse: Vec<f64> = reports.iter().map(|r| r.rmse).collect();
    let mae: Vec<f64> = reports.iter().map(|r| r.mae).collect();
    let (mean_rmse, ci_rmse) = mean_ci(&rmse, level);
    let (mean_mae, ci_mae) = mean_ci(&mae, level);
    Ok(ReplicationSummary {
        mean_rmse,
        ci_rmse,
        mean_mae,
        ci_mae,
        runs: reports.len(),
        level,
    })
}

/// Sample mean and the half-width `t(1 - (1-level)/2, n-1) * s / sqrt(n)`.
/// A single value has a zero-width interval.
pub fn mean_ci(values: &[f64], level: f64) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = sample_variance(values, mean);
    if var == 0.0 {
        return (mean, 0.0);
    }
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(1.0 - (1.0 - level) / 2.0);
    (mean, t * (var / n as f64).sqrt())
}

fn sample_variance(values: &[f64], mean: f64) -> f64 {
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (values.len() - 1) as f64
}

/// Two-sided p-value of Welch's unequal-variance t-test.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::config(
            "Welch's test needs at least two samples per set",
        ));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let ma = a.iter().sum::<f64>() / na;
    let mb = b.iter().sum::<f64>() / nb;
    let va = sample_variance(a, ma) / na;
    let vb = sample_variance(b, mb) / nb;
    let se2 = va + vb;
    if se2 == 0.0 {
        return Ok(if ma == mb { 1.0 } else { 0.0 });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    Ok((2.0 * dist.sf(t.abs())).min(1.0))
}
