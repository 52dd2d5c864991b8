//! Comparison models: Holt-Winters smoothing and least-squares regression.
//!
//! Plain symbolic regression, the third baseline, is the GP engine run
//! without the `lag` operator and lives in [`crate::gp`].

mod holt_winters;
mod linear;

pub use holt_winters::{
    hw_fit, hw_forecast, hw_smooth, hw_smooth_with_init, initial_components, ForecastMode,
    HwFit, HwGridFit, HwInit, HwParams, HwState, DEFAULT_GRID_STEP,
};
pub use linear::{ols_fit, ols_predict, LinearModel};
