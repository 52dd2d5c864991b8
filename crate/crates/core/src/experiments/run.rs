use std::collections::BTreeMap;

use chrono::Duration;
use rayon::prelude::*;
use serde::Serialize;

use super::{method_config, Experiment, HwSettings, Method, Scenario};
use crate::baselines::{hw_fit, hw_forecast, hw_smooth, ols_fit, HwParams};
use crate::data::{pad_inputs, DatasetView, JunctionDataset, TimeRange, WindowSpec};
use crate::error::{Error, Result};
use crate::expr::{evaluate_series, structure_stats};
use crate::gp::{evolve, GpConfig};
use crate::metrics::{evaluate, summarize_runs, welch_t, EvalReport};
use crate::model::FittedModel;

/// Models of one method trained on one window, scored on one test window.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub method: Method,
    /// Junction the test window was taken from.
    pub junction: String,
    /// Junction the models were trained on; differs only in transfer runs.
    pub train_junction: String,
    pub interval: u32,
    pub variant: String,
    pub window: WindowSpec,
    pub seed: u64,
    /// One model per run (the run's best); a single one for HW and LR.
    pub models: Vec<FittedModel>,
    /// Test report of each model, in the same order.
    pub reports: Vec<EvalReport>,
    /// Index of the selected model: lowest RMSE on the first test window
    /// its training was scored on.
    pub best: Option<usize>,
    pub note: String,
}

impl Cell {
    pub fn rmses(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.rmse).collect()
    }

    pub fn best_model(&self) -> Option<&FittedModel> {
        self.best.map(|i| &self.models[i])
    }

    pub fn best_report(&self) -> Option<&EvalReport> {
        self.best.map(|i| &self.reports[i])
    }

    pub fn mean_rmse(&self) -> f64 {
        mean(&self.rmses())
    }

    pub fn mean_mae(&self) -> f64 {
        mean(&self.reports.iter().map(|r| r.mae).collect::<Vec<_>>())
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// One line of `tables/results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub scenario: String,
    pub method: Method,
    pub junction: String,
    pub interval: u32,
    pub variant: String,
    pub train_window: String,
    pub test_window: String,
    pub seed: u64,
    pub runs: usize,
    pub rmse_mean: f64,
    pub rmse_ci: f64,
    pub mae_mean: f64,
    pub mae_ci: f64,
    pub best_rmse: f64,
    pub best_mae: f64,
    pub best_stdev: f64,
    pub best_r2: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PValueRow {
    pub method: Method,
    pub junction: String,
    pub interval: u32,
    pub variant_a: String,
    pub variant_b: String,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GappedRow {
    pub method: Method,
    pub junction: String,
    pub continuous_rmse: f64,
    pub gapped_rmse: f64,
    /// `gapped / continuous − 1`, on mean test RMSE.
    pub degradation: f64,
    pub p_value: Option<f64>,
}

/// `rmse[i][j]`: mean test RMSE of models trained on junction `i` and
/// tested on junction `j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferMatrix {
    pub method: Method,
    pub junctions: Vec<String>,
    pub rmse: Vec<Vec<f64>>,
    pub mae: Vec<Vec<f64>>,
}

/// Structure of the run-best models of one cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureRow {
    pub method: Method,
    pub junction: String,
    pub models: usize,
    /// Total occurrences of each input arm over all models.
    pub occurrences: Vec<usize>,
    /// Models containing each arm at least once.
    pub models_with: Vec<usize>,
    /// Models with a `lag` applied over each arm.
    pub models_lagging: Vec<usize>,
    pub lag_total: usize,
    pub node_count_hist: BTreeMap<usize, usize>,
    pub depth_hist: BTreeMap<usize, usize>,
    pub lag_count_hist: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShelfRow {
    pub method: Method,
    pub junction: String,
    pub near_rmse: f64,
    pub far_rmse: f64,
    /// `far_rmse − near_rmse`, on mean test RMSE.
    pub delta: f64,
    /// The near-selected model on each window.
    pub best_near_rmse: f64,
    pub best_far_rmse: f64,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    pub scenario: String,
    pub kind: &'static str,
    pub cells: Vec<Cell>,
    pub rows: Vec<ResultRow>,
    pub pvalues: Vec<PValueRow>,
    pub gapped: Vec<GappedRow>,
    pub transfer: Vec<TransferMatrix>,
    pub structure: Vec<StructureRow>,
    pub shelf: Vec<ShelfRow>,
}

impl ScenarioOutcome {
    pub fn cell(&self, method: Method, junction: &str, variant: &str) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.junction == junction && c.variant == variant)
    }
}

/// A scoring target: test window `test` of pool dataset `dataset`.
struct Target {
    dataset: usize,
    variant: String,
    test: TimeRange,
}

/// Train once, score on every target. The first target selects the best model.
struct Job {
    method: Method,
    dataset: usize,
    spec: WindowSpec,
    targets: Vec<Target>,
}

/// Run on the global rayon pool.
pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioOutcome> {
    scenario.validate()?;
    let datasets = scenario
        .datasets
        .iter()
        .map(|d| d.load())
        .collect::<Result<Vec<_>>>()?;
    let mut ids: Vec<&str> = datasets.iter().map(|d| d.junction_id()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::config("junction ids within a scenario must be unique"));
    }
    let (pool, jobs) = plan(scenario, datasets)?;
    let cells: Vec<Cell> = jobs
        .par_iter()
        .map(|job| run_job(scenario, &pool, job))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(summarise(scenario, &pool, cells))
}

/// Run on a dedicated pool of `jobs` workers (`None`: one per core).
/// Results do not depend on the worker count.
pub fn run_scenario_with_jobs(scenario: &Scenario, jobs: Option<usize>) -> Result<ScenarioOutcome> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Error::config("--jobs must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_scenario(scenario))
}

fn train_minus_gap(train: TimeRange, gap: Option<TimeRange>) -> Result<Vec<TimeRange>> {
    let Some(gap) = gap else {
        return Ok(vec![train]);
    };
    if gap.start < train.start || gap.end > train.end {
        return Err(Error::config(format!("gap {gap} is not inside training range {train}")));
    }
    let pieces: Vec<TimeRange> = [
        TimeRange::new(train.start, gap.start),
        TimeRange::new(gap.end, train.end),
    ]
    .into_iter()
    .filter(|r| !r.is_empty())
    .collect();
    if pieces.is_empty() {
        return Err(Error::config(format!("gap {gap} removes the whole training range")));
    }
    Ok(pieces)
}

fn plan(scenario: &Scenario, datasets: Vec<JunctionDataset>) -> Result<(Vec<JunctionDataset>, Vec<Job>)> {
    let n = datasets.len();
    let single = |dataset: usize, variant: &str, test: TimeRange| {
        vec![Target {
            dataset,
            variant: variant.to_string(),
            test,
        }]
    };
    let mut jobs = Vec::new();
    let mut push = |method, dataset, train: Vec<TimeRange>, targets: Vec<Target>| {
        jobs.push(Job {
            method,
            dataset,
            spec: WindowSpec::new(train, targets[0].test),
            targets,
        })
    };
    let pool = match &scenario.experiment {
        Experiment::GappedTraining { train, gap, test } => {
            let gapped = train_minus_gap(*train, *gap)?;
            for d in 0..n {
                for &m in &scenario.methods {
                    push(m, d, vec![*train], single(d, "continuous", *test));
                    push(m, d, gapped.clone(), single(d, "gapped", *test));
                }
            }
            datasets
        }
        Experiment::WindowLength { train_weeks, test } => {
            for d in 0..n {
                for &m in &scenario.methods {
                    for &w in train_weeks {
                        let start = test.start - Duration::weeks(w as i64);
                        let train = TimeRange::new(start, test.start);
                        push(m, d, vec![train], single(d, &format!("{w}w"), *test));
                    }
                }
            }
            datasets
        }
        Experiment::SamplingInterval { intervals, train, test } => {
            let mut pool = Vec::new();
            for dataset in &datasets {
                for &i in intervals {
                    pool.push(if i == dataset.interval() {
                        dataset.clone()
                    } else {
                        dataset.aggregate(i)?
                    });
                }
            }
            for d in 0..n {
                for &m in &scenario.methods {
                    for (k, &i) in intervals.iter().enumerate() {
                        let p = d * intervals.len() + k;
                        push(m, p, vec![*train], single(p, &format!("{i}min"), *test));
                    }
                }
            }
            pool
        }
        Experiment::TransferMatrix { train, test } => {
            let arity = datasets.iter().map(JunctionDataset::arity).max().unwrap_or(0);
            let pool = datasets
                .iter()
                .map(|d| pad_inputs(d, arity))
                .collect::<Result<Vec<_>>>()?;
            for &m in scenario.methods.iter().filter(|m| **m != Method::HoltWinters) {
                for d in 0..n {
                    let variant = format!("trained_on_{}", pool[d].junction_id());
                    let targets = std::iter::once(d)
                        .chain((0..n).filter(|j| *j != d))
                        .map(|j| Target {
                            dataset: j,
                            variant: variant.clone(),
                            test: *test,
                        })
                        .collect();
                    push(m, d, vec![*train], targets);
                }
            }
            if scenario.methods.contains(&Method::HoltWinters) {
                log::warn!("HW models only the output series; skipped in the transfer matrix");
            }
            pool
        }
        Experiment::StructureStats { train, test } => {
            for d in 0..n {
                for &m in &scenario.methods {
                    push(m, d, vec![*train], single(d, "native", *test));
                }
            }
            datasets
        }
        Experiment::ShelfLife {
            train,
            near_test,
            far_test,
        } => {
            for d in 0..n {
                for &m in &scenario.methods {
                    let targets = [("near", near_test), ("far", far_test)]
                        .into_iter()
                        .map(|(v, t)| Target {
                            dataset: d,
                            variant: v.to_string(),
                            test: *t,
                        })
                        .collect();
                    push(m, d, vec![*train], targets);
                }
            }
            datasets
        }
    };
    Ok((pool, jobs))
}

fn run_job(scenario: &Scenario, pool: &[JunctionDataset], job: &Job) -> Result<Vec<Cell>> {
    let train_set = &pool[job.dataset];
    let seed = scenario.effective_seed();
    let mut gp = scenario.gp.clone();
    gp.rng_seed = seed;
    let (models, note) = match fit_models(job.method, train_set, &job.spec, &gp, &scenario.hw) {
        Ok(models) => (models, String::new()),
        Err(e @ Error::InsufficientData { .. }) => {
            log::warn!(
                "{} on {} ({}): {e}",
                job.method,
                train_set.junction_id(),
                job.spec.train_ranges[0]
            );
            (Vec::new(), e.to_string())
        }
        Err(e) => return Err(e),
    };
    let mut best = None;
    let mut cells = Vec::with_capacity(job.targets.len());
    for target in &job.targets {
        let test_set = &pool[target.dataset];
        let reports = models
            .iter()
            .map(|m| score(m, test_set, target.test))
            .collect::<Result<Vec<_>>>()?;
        if best.is_none() {
            best = argmin(&reports);
        }
        cells.push(Cell {
            method: job.method,
            junction: test_set.junction_id().to_string(),
            train_junction: train_set.junction_id().to_string(),
            interval: test_set.interval(),
            variant: target.variant.clone(),
            window: WindowSpec::new(job.spec.train_ranges.clone(), target.test),
            seed,
            models: models.clone(),
            reports,
            best,
            note: note.clone(),
        });
    }
    Ok(cells)
}

/// Lowest RMSE; the earliest on ties. NaN reports are never selected.
fn argmin(reports: &[EvalReport]) -> Option<usize> {
    reports
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.rmse.is_nan())
        .min_by(|a, b| a.1.rmse.total_cmp(&b.1.rmse))
        .map(|(i, _)| i)
}

/// Train `method` on the training ranges of `spec`. GP methods yield one
/// model per run (seeds `gp.rng_seed + i`); SR drops `lag` from `gp`.
pub fn fit_models(
    method: Method,
    dataset: &JunctionDataset,
    spec: &WindowSpec,
    gp: &GpConfig,
    hw: &HwSettings,
) -> Result<Vec<FittedModel>> {
    let (segments, _) = spec.resolve(dataset)?;
    match method {
        Method::HoltWinters => {
            // The output series is continuous even when the inputs have a gap.
            let span = spec.train_span().expect("resolved window has training ranges");
            let idx = span.to_indices(dataset)?;
            let y = &dataset.output().values[idx.clone()];
            let season = HwParams::weekly_season(dataset.interval());
            let fit = hw_fit(y, season, hw.grid_step)?;
            let state = hw_smooth(y, &fit.params)?.state;
            Ok(vec![FittedModel::HoltWinters {
                params: fit.params,
                state,
                train_end: dataset.time_at(idx.end),
                mode: hw.forecast_mode,
            }])
        }
        Method::Linear => {
            let view = DatasetView::from_ranges(dataset, &segments)?;
            Ok(vec![FittedModel::Linear(ols_fit(&view)?)])
        }
        Method::Symbolic | Method::SymbolicLag => {
            let view = DatasetView::from_ranges(dataset, &segments)?;
            let config = method_config(gp, method)?;
            (0..config.runs)
                .into_par_iter()
                .map(|i| {
                    let mut c = config.clone();
                    c.rng_seed = config.rng_seed.wrapping_add(i as u64);
                    evolve(&c, &view).map(|run| FittedModel::Expr { tree: run.best_tree })
                })
                .collect()
        }
    }
}

/// Test-window report of a fitted model on `dataset`.
///
/// Holt-Winters forecasts continue from the end of its training series up
/// to the end of `test`; in rolling mode every actual in between is folded
/// in first.
pub fn score(model: &FittedModel, dataset: &JunctionDataset, test: TimeRange) -> Result<EvalReport> {
    let idx = test.to_indices(dataset)?;
    if idx.is_empty() {
        return Err(Error::config(format!("test range {test} holds no samples")));
    }
    match model {
        FittedModel::HoltWinters {
            params,
            state,
            train_end,
            mode,
        } => {
            let from = TimeRange::new(dataset.start_time(), *train_end)
                .to_indices(dataset)?
                .end;
            if idx.start < from {
                return Err(Error::config(format!(
                    "test range {test} starts before the end of HW training ({train_end})"
                )));
            }
            let y = &dataset.output().values;
            let horizon = idx.end - from;
            let forecast = hw_forecast(state, params, horizon, *mode, Some(&y[from..idx.end]))?;
            evaluate(&forecast[idx.start - from..], &y[idx])
        }
        other => {
            let tree = other.expression().expect("expression models");
            let view = DatasetView::from_ranges(dataset, &[idx])?;
            let pred = evaluate_series(&tree, &view)?;
            evaluate(&pred, view.output())
        }
    }
}

fn summarise(scenario: &Scenario, pool: &[JunctionDataset], cells: Vec<Cell>) -> ScenarioOutcome {
    let rows = cells.iter().map(|c| result_row(scenario, c)).collect();
    let pvalues = if matches!(
        scenario.experiment,
        Experiment::TransferMatrix { .. } | Experiment::StructureStats { .. }
    ) {
        Vec::new()
    } else {
        pairwise_pvalues(&cells)
    };
    let mut outcome = ScenarioOutcome {
        scenario: scenario.name.clone(),
        kind: scenario.experiment.kind(),
        rows,
        pvalues,
        gapped: Vec::new(),
        transfer: Vec::new(),
        structure: Vec::new(),
        shelf: Vec::new(),
        cells: Vec::new(),
    };
    match &scenario.experiment {
        Experiment::GappedTraining { .. } => {
            outcome.gapped = paired(&cells, "continuous", "gapped")
                .map(|(a, b)| GappedRow {
                    method: a.method,
                    junction: a.junction.clone(),
                    continuous_rmse: a.mean_rmse(),
                    gapped_rmse: b.mean_rmse(),
                    degradation: b.mean_rmse() / a.mean_rmse() - 1.0,
                    p_value: welch_t(&a.rmses(), &b.rmses()).ok(),
                })
                .collect();
        }
        Experiment::ShelfLife { .. } => {
            outcome.shelf = paired(&cells, "near", "far")
                .map(|(a, b)| ShelfRow {
                    method: a.method,
                    junction: a.junction.clone(),
                    near_rmse: a.mean_rmse(),
                    far_rmse: b.mean_rmse(),
                    delta: b.mean_rmse() - a.mean_rmse(),
                    best_near_rmse: a.best_report().map_or(f64::NAN, |r| r.rmse),
                    best_far_rmse: b.best_report().map_or(f64::NAN, |r| r.rmse),
                    p_value: welch_t(&a.rmses(), &b.rmses()).ok(),
                })
                .collect();
        }
        Experiment::TransferMatrix { .. } => {
            outcome.transfer = transfer_matrices(scenario, pool, &cells);
        }
        Experiment::StructureStats { .. } => {
            outcome.structure = cells
                .iter()
                .filter(|c| c.method != Method::HoltWinters)
                .map(|c| structure_row(c, pool_arity(pool, &c.junction)))
                .collect();
        }
        Experiment::WindowLength { .. } | Experiment::SamplingInterval { .. } => {}
    }
    outcome.cells = cells;
    outcome
}

fn pool_arity(pool: &[JunctionDataset], junction: &str) -> usize {
    pool.iter()
        .find(|d| d.junction_id() == junction)
        .map_or(0, JunctionDataset::arity)
}

fn result_row(scenario: &Scenario, c: &Cell) -> ResultRow {
    let summary = summarize_runs(&c.reports, scenario.confidence).ok();
    let best = c.best_report();
    let pick = |f: fn(&EvalReport) -> f64| best.map_or(f64::NAN, f);
    ResultRow {
        scenario: scenario.name.clone(),
        method: c.method,
        junction: c.junction.clone(),
        interval: c.interval,
        variant: c.variant.clone(),
        train_window: c
            .window
            .train_ranges
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("+"),
        test_window: c.window.test_range.to_string(),
        seed: c.seed,
        runs: c.reports.len(),
        rmse_mean: summary.as_ref().map_or(f64::NAN, |s| s.mean_rmse),
        rmse_ci: summary.as_ref().map_or(f64::NAN, |s| s.ci_rmse),
        mae_mean: summary.as_ref().map_or(f64::NAN, |s| s.mean_mae),
        mae_ci: summary.as_ref().map_or(f64::NAN, |s| s.ci_mae),
        best_rmse: pick(|r| r.rmse),
        best_mae: pick(|r| r.mae),
        best_stdev: pick(|r| r.stdev_abs_err),
        best_r2: pick(|r| r.r_squared),
        note: c.note.clone(),
    }
}

/// Welch p-values between every pair of variants of the same method on the
/// same junction, where both sides have at least two runs.
fn pairwise_pvalues(cells: &[Cell]) -> Vec<PValueRow> {
    let mut out = Vec::new();
    for (i, a) in cells.iter().enumerate() {
        for b in &cells[i + 1..] {
            if a.method != b.method || a.junction != b.junction || a.variant == b.variant {
                continue;
            }
            if let Ok(p) = welch_t(&a.rmses(), &b.rmses()) {
                out.push(PValueRow {
                    method: a.method,
                    junction: a.junction.clone(),
                    interval: a.interval,
                    variant_a: format!("{}@{}", a.variant, a.interval),
                    variant_b: format!("{}@{}", b.variant, b.interval),
                    p_value: p,
                });
            }
        }
    }
    out
}

fn paired<'a>(cells: &'a [Cell], a: &'a str, b: &'a str) -> impl Iterator<Item = (&'a Cell, &'a Cell)> {
    cells.iter().filter(move |c| c.variant == a).filter_map(move |x| {
        cells
            .iter()
            .find(|y| y.variant == b && y.method == x.method && y.junction == x.junction)
            .map(|y| (x, y))
    })
}

fn transfer_matrices(scenario: &Scenario, pool: &[JunctionDataset], cells: &[Cell]) -> Vec<TransferMatrix> {
    let junctions: Vec<String> = pool.iter().map(|d| d.junction_id().to_string()).collect();
    let n = junctions.len();
    scenario
        .methods
        .iter()
        .filter(|m| **m != Method::HoltWinters)
        .map(|&method| {
            let mut rmse = vec![vec![f64::NAN; n]; n];
            let mut mae = vec![vec![f64::NAN; n]; n];
            for c in cells.iter().filter(|c| c.method == method) {
                let i = junctions.iter().position(|j| *j == c.train_junction);
                let j = junctions.iter().position(|j| *j == c.junction);
                if let (Some(i), Some(j)) = (i, j) {
                    rmse[i][j] = c.mean_rmse();
                    mae[i][j] = c.mean_mae();
                }
            }
            TransferMatrix {
                method,
                junctions: junctions.clone(),
                rmse,
                mae,
            }
        })
        .collect()
}

fn structure_row(c: &Cell, arity: usize) -> StructureRow {
    let mut row = StructureRow {
        method: c.method,
        junction: c.junction.clone(),
        models: 0,
        occurrences: vec![0; arity],
        models_with: vec![0; arity],
        models_lagging: vec![0; arity],
        lag_total: 0,
        node_count_hist: BTreeMap::new(),
        depth_hist: BTreeMap::new(),
        lag_count_hist: BTreeMap::new(),
    };
    for tree in c.models.iter().filter_map(FittedModel::expression) {
        let s = structure_stats(&tree);
        row.models += 1;
        for k in 0..arity {
            let occ = s.occurrences(k);
            row.occurrences[k] += occ;
            row.models_with[k] += usize::from(occ > 0);
            row.models_lagging[k] += usize::from(tree.lags_input(k));
        }
        row.lag_total += s.lag_count;
        *row.node_count_hist.entry(s.node_count).or_default() += 1;
        *row.depth_hist.entry(s.depth).or_default() += 1;
        *row.lag_count_hist.entry(s.lag_count).or_default() += 1;
    }
    row
}
