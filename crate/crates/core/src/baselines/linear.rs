use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::DatasetView;
use crate::error::{Error, Result};
use crate::expr::ExprTree;

/// `y = Σ a_k x_k + intercept + ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Mean of the training residuals (≈ 0 for an exact solve).
    pub residual_mean: f64,
    /// Population standard deviation of the training residuals.
    pub residual_stdev: f64,
}

impl LinearModel {
    /// The model as an expression, so it can be stored like evolved ones.
    pub fn to_expr(&self) -> ExprTree {
        let mut acc = ExprTree::constant(self.intercept);
        for (k, &w) in self.weights.iter().enumerate().rev() {
            acc = ExprTree::constant(w) * ExprTree::input(k) + acc;
        }
        acc
    }
}

/// Least squares through the normal equations on centred data. A singular
/// system is retried with ridge `λ = 1e-8 · trace` and logged.
pub fn ols_fit(train: &DatasetView) -> Result<LinearModel> {
    let n = train.len();
    let k = train.arity();
    if n <= k + 1 {
        return Err(Error::InsufficientData {
            needed: k + 2,
            got: n,
        });
    }
    let y = train.output();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let x_mean: Vec<f64> = train.inputs().iter().map(|c| mean(c)).collect();
    let y_mean = mean(y);

    let mut gram = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    for i in 0..k {
        let xi = &train.inputs()[i];
        rhs[i] = xi
            .iter()
            .zip(y)
            .map(|(a, b)| (a - x_mean[i]) * (b - y_mean))
            .sum();
        for j in 0..=i {
            let xj = &train.inputs()[j];
            let s: f64 = xi
                .iter()
                .zip(xj)
                .map(|(a, b)| (a - x_mean[i]) * (b - x_mean[j]))
                .sum();
            gram[(i, j)] = s;
            gram[(j, i)] = s;
        }
    }

    let weights = match gram.clone().cholesky() {
        Some(ch) if well_conditioned(&ch.l()) => ch.solve(&rhs),
        _ => {
            let trace = gram.trace();
            log::warn!(
                "collinear inputs for `{}`; solving with a ridge term",
                train.junction_id()
            );
            if trace > 0.0 {
                let ridge = &gram + DMatrix::identity(k, k) * (1e-8 * trace);
                ridge
                    .cholesky()
                    .map(|ch| ch.solve(&rhs))
                    .ok_or_else(|| Error::Evaluation("normal equations are not solvable".into()))?
            } else {
                DVector::zeros(k)
            }
        }
    };
    let weights: Vec<f64> = weights.iter().copied().collect();
    let intercept = y_mean - weights.iter().zip(&x_mean).map(|(w, m)| w * m).sum::<f64>();

    let mut model = LinearModel {
        weights,
        intercept,
        residual_mean: 0.0,
        residual_stdev: 0.0,
    };
    let pred = ols_predict(&model, train)?;
    let resid: Vec<f64> = y.iter().zip(&pred).map(|(a, p)| a - p).collect();
    model.residual_mean = mean(&resid);
    model.residual_stdev = (resid
        .iter()
        .map(|r| (r - model.residual_mean).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    Ok(model)
}

/// A zero or vanishing pivot means the Cholesky factor is numerically singular.
fn well_conditioned(l: &DMatrix<f64>) -> bool {
    let diag: Vec<f64> = l.diagonal().iter().copied().collect();
    let max = diag.iter().copied().fold(0.0, f64::max);
    diag.iter().all(|d| d.is_finite() && *d > 1e-10 * max.max(f64::MIN_POSITIVE))
}

pub fn ols_predict(model: &LinearModel, view: &DatasetView) -> Result<Vec<f64>> {
    if model.weights.len() != view.arity() {
        return Err(Error::Evaluation(format!(
            "linear model has {} weights but `{}` has {} inputs",
            model.weights.len(),
            view.junction_id(),
            view.arity()
        )));
    }
    let mut out = vec![model.intercept; view.len()];
    for (w, col) in model.weights.iter().zip(view.inputs()) {
        for (o, x) in out.iter_mut().zip(col) {
            *o += w * x;
        }
    }
    Ok(out)
}
