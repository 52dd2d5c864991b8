//! Triple exponential smoothing with additive seasonality.
//!
//! ```text
//! ŷ_0 = y_0
//! ŷ_t = α(y_t − c_{t−L}) + (1 − α)(ŷ_{t−1} + b_{t−1})
//! b_t = β(y_t − y_{t−1}) + (1 − β) b_{t−1}
//! c_t = γ(y_t − ŷ_{t−1} − b_{t−1}) + (1 − γ) c_{t−L}
//! ```
//!
//! The one-step forecast for `t` is `ŷ_{t−1} + b_{t−1} + c_{t−L}`. With
//! `γ = 0` and a flat seasonal ring this is double smoothing; additionally
//! with `β = 0` and no initial trend it is single smoothing.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default grid resolution for [`hw_fit`].
pub const DEFAULT_GRID_STEP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HwParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Samples per season; one week at the dataset's interval.
    pub season_length: usize,
}

impl HwParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64, season_length: usize) -> Result<Self> {
        let p = HwParams {
            alpha,
            beta,
            gamma,
            season_length,
        };
        p.validate()?;
        Ok(p)
    }

    /// Season length of one week at `interval_minutes`.
    pub fn weekly_season(interval_minutes: u32) -> usize {
        (7 * 24 * 60 / interval_minutes) as usize
    }

    pub fn validate(&self) -> Result<()> {
        // α = 1 is accepted so the identity-tracking limit can be expressed;
        // the grid search never proposes it.
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        for (name, v) in [("beta", self.beta), ("gamma", self.gamma)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{name} {v} outside [0, 1]")));
            }
        }
        if self.season_length == 0 {
            return Err(Error::config("season length must be at least 1"));
        }
        Ok(())
    }
}

/// Smoother state after consuming a prefix of the series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HwState {
    pub level: f64,
    pub trend: f64,
    /// `seasonals[p]` is the latest seasonal component of phase `p`,
    /// where the phase of sample `t` is `t mod L`.
    pub seasonals: Vec<f64>,
    /// Index of the next sample to be forecast.
    pub next_index: usize,
    /// Last observation consumed; the trend update differences against it.
    pub last_obs: f64,
}

impl HwState {
    /// Consume observation `y` at `next_index`, returning the forecast that
    /// was made for it.
    fn update(&mut self, y: f64, p: &HwParams) -> f64 {
        let phase = self.next_index % self.seasonals.len();
        let c_old = self.seasonals[phase];
        let base = self.level + self.trend;
        let forecast = base + c_old;
        let level = p.alpha * (y - c_old) + (1.0 - p.alpha) * base;
        let trend = p.beta * (y - self.last_obs) + (1.0 - p.beta) * self.trend;
        self.seasonals[phase] = p.gamma * (y - base) + (1.0 - p.gamma) * c_old;
        self.level = level;
        self.trend = trend;
        self.last_obs = y;
        self.next_index += 1;
        forecast
    }
}

/// Starting trend and seasonal ring; the level always starts at `y_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HwInit {
    pub trend: f64,
    pub seasonals: Vec<f64>,
}

/// Season-averaged initial trend and per-phase mean deviations from each
/// full season's average.
pub fn initial_components(y: &[f64], season_length: usize) -> Result<HwInit> {
    let l = season_length;
    check_length(y, l)?;
    let trend = (0..l).map(|i| (y[i + l] - y[i]) / l as f64).sum::<f64>() / l as f64;
    let seasons = y.len() / l;
    let averages: Vec<f64> = (0..seasons)
        .map(|j| y[j * l..(j + 1) * l].iter().sum::<f64>() / l as f64)
        .collect();
    let seasonals = (0..l)
        .map(|i| {
            (0..seasons).map(|j| y[j * l + i] - averages[j]).sum::<f64>() / seasons as f64
        })
        .collect();
    Ok(HwInit { trend, seasonals })
}

fn check_length(y: &[f64], season_length: usize) -> Result<()> {
    let needed = 2 * season_length.max(1);
    if y.len() < needed {
        return Err(Error::InsufficientData {
            needed,
            got: y.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct HwFit {
    /// Smoothed level `ŷ_t`.
    pub level: Vec<f64>,
    /// One-step-ahead forecasts; `fitted[0]` is `y_0` (nothing to forecast from).
    pub fitted: Vec<f64>,
    pub state: HwState,
}

impl HwFit {
    /// RMSE of the one-step forecasts over `t >= 1`.
    pub fn one_step_rmse(&self, y: &[f64]) -> f64 {
        let n = y.len().saturating_sub(1).max(1) as f64;
        let sse: f64 = self.fitted[1..]
            .iter()
            .zip(&y[1..])
            .map(|(f, v)| (f - v) * (f - v))
            .sum();
        (sse / n).sqrt()
    }
}

/// Smooth `y` from the standard initialisation. Needs two full seasons.
pub fn hw_smooth(y: &[f64], params: &HwParams) -> Result<HwFit> {
    params.validate()?;
    let init = initial_components(y, params.season_length)?;
    hw_smooth_with_init(y, params, &init)
}

/// Smooth `y` from an explicit initial trend and seasonal ring.
pub fn hw_smooth_with_init(y: &[f64], params: &HwParams, init: &HwInit) -> Result<HwFit> {
    params.validate()?;
    if init.seasonals.len() != params.season_length {
        return Err(Error::config(format!(
            "{} initial seasonals for season length {}",
            init.seasonals.len(),
            params.season_length
        )));
    }
    if y.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let mut state = start_state(y[0], init);
    let mut level = Vec::with_capacity(y.len());
    let mut fitted = Vec::with_capacity(y.len());
    level.push(y[0]);
    fitted.push(y[0]);
    for &v in &y[1..] {
        fitted.push(state.update(v, params));
        level.push(state.level);
    }
    Ok(HwFit {
        level,
        fitted,
        state,
    })
}

fn start_state(y0: f64, init: &HwInit) -> HwState {
    HwState {
        level: y0,
        trend: init.trend,
        seasonals: init.seasonals.clone(),
        next_index: 1,
        last_obs: y0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForecastMode {
    /// Extrapolate from the final state without further observations.
    Frozen,
    /// One step ahead, folding each actual into the state before the next step.
    Rolling,
}

impl std::fmt::Display for ForecastMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ForecastMode::Frozen => "frozen",
            ForecastMode::Rolling => "rolling",
        })
    }
}

/// Predict the `horizon` samples following `state`.
pub fn hw_forecast(
    state: &HwState,
    params: &HwParams,
    horizon: usize,
    mode: ForecastMode,
    actuals: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let l = state.seasonals.len();
    if l == 0 {
        return Err(Error::config("state has an empty seasonal ring"));
    }
    match mode {
        ForecastMode::Frozen => Ok((0..horizon)
            .map(|i| {
                state.level
                    + (i + 1) as f64 * state.trend
                    + state.seasonals[(state.next_index + i) % l]
            })
            .collect()),
        ForecastMode::Rolling => {
            let actuals = actuals
                .filter(|a| a.len() >= horizon)
                .ok_or_else(|| {
                    Error::config(format!(
                        "rolling forecast of {horizon} samples needs as many actuals"
                    ))
                })?;
            params.validate()?;
            let mut s = state.clone();
            Ok(actuals[..horizon]
                .iter()
                .map(|&v| s.update(v, params))
                .collect())
        }
    }
}

/// Result of the parameter grid search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HwGridFit {
    pub params: HwParams,
    /// One-step RMSE over `t >= 1` at the chosen parameters.
    pub rmse: f64,
}

/// Grid-search `α ∈ {s, 2s, .., 1−s}` and `β, γ ∈ {0, s, .., 1}` for the
/// smallest one-step RMSE. Near-ties (relative 1e-12) keep the
/// lexicographically smallest `(α, β, γ)`.
pub fn hw_fit(y: &[f64], season_length: usize, grid_step: f64) -> Result<HwGridFit> {
    let steps = (1.0 / grid_step).round();
    if !(grid_step > 0.0 && grid_step < 1.0) || ((steps * grid_step) - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!(
            "grid step {grid_step} must divide 1 evenly"
        )));
    }
    let n = steps as usize;
    let init = initial_components(y, season_length)?;
    let level = |i: usize| i as f64 / n as f64;

    let cell = |a: usize, b: usize, g: usize| {
        let p = HwParams {
            alpha: level(a),
            beta: level(b),
            gamma: level(g),
            season_length,
        };
        (p, one_step_rmse(y, &p, &init))
    };
    let per_alpha: Vec<(HwParams, f64)> = (1..n)
        .into_par_iter()
        .map(|a| {
            let mut best = cell(a, 0, 0);
            for b in 0..=n {
                for g in 0..=n {
                    let c = cell(a, b, g);
                    if better(c.1, best.1) {
                        best = c;
                    }
                }
            }
            best
        })
        .collect();

    let mut best = per_alpha[0];
    for c in &per_alpha[1..] {
        if better(c.1, best.1) {
            best = *c;
        }
    }
    Ok(HwGridFit {
        params: best.0,
        rmse: best.1,
    })
}

fn better(candidate: f64, incumbent: f64) -> bool {
    if incumbent.is_nan() {
        return !candidate.is_nan();
    }
    candidate < incumbent - 1e-12 * (1.0 + incumbent)
}

fn one_step_rmse(y: &[f64], p: &HwParams, init: &HwInit) -> f64 {
    let mut s = start_state(y[0], init);
    let sse: f64 = y[1..]
        .iter()
        .map(|&v| {
            let e = s.update(v, p) - v;
            e * e
        })
        .sum();
    (sse / (y.len() - 1) as f64).sqrt()
}
