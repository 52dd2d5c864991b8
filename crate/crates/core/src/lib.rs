//! Lag-aware symbolic regression for road-junction traffic forecasting.
//!
//! The crate evolves expression trees over a junction's inflow sensors,
//! extended with a one-step `lag` operator so models can reach back into
//! the inflow history. Holt-Winters and least-squares baselines, a sensor
//! data pipeline, a synthetic traffic generator and a scenario harness are
//! provided alongside the evolutionary engine.
//!
//! Module map:
//!
//! - [`data`]: CSV ingest, gap repair, aggregation, windows and views.
//! - [`expr`]: the expression-tree genome and its evaluator.
//! - [`gp`]: the evolutionary engine.
//! - [`baselines`]: Holt-Winters and ordinary least squares.
//! - [`metrics`]: error metrics and replication statistics.
//! - [`synth`]: deterministic synthetic junctions.
//! - [`experiments`]: declarative scenarios and table emission.
//! - [`model`]: persisted model files.

pub mod baselines;
pub mod data;
pub mod error;
pub mod experiments;
pub mod expr;
pub mod gp;
pub mod metrics;
pub mod model;
pub mod synth;

pub use error::{Error, Result};
