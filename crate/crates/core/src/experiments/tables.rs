use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use super::{run::Cell, Method, Scenario, ScenarioOutcome};
use crate::error::Result;
use crate::model::{save_model, Sidecar};

/// Fixed six decimals so reruns compare byte for byte.
fn num(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:.6}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, num)
}

fn file_stem(parts: &[&str]) -> String {
    parts
        .iter()
        .map(|p| {
            p.chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
                .collect::<String>()
        })
        .collect::<Vec<_>>()
        .join("_")
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_writer(File::create(path)?))
}

/// Write every table, histogram and best model of `outcome` under `out_dir`,
/// plus the resolved manifest as `scenario.toml`.
pub fn write_outputs(scenario: &Scenario, outcome: &ScenarioOutcome, out_dir: &Path) -> Result<()> {
    let tables = out_dir.join("tables");
    let plots = out_dir.join("plots");
    let models = out_dir.join("models");
    for d in [&tables, &plots, &models] {
        std::fs::create_dir_all(d)?;
    }
    std::fs::write(out_dir.join("scenario.toml"), scenario.to_toml()?)?;

    let mut w = writer(&tables.join("results.csv"))?;
    w.write_record([
        "scenario", "method", "junction", "interval", "variant", "train_window", "test_window",
        "seed", "runs", "rmse_mean", "rmse_ci", "mae_mean", "mae_ci", "best_rmse", "best_mae",
        "best_stdev", "best_r2", "note",
    ])?;
    for r in &outcome.rows {
        w.write_record([
            r.scenario.clone(),
            r.method.to_string(),
            r.junction.clone(),
            r.interval.to_string(),
            r.variant.clone(),
            r.train_window.clone(),
            r.test_window.clone(),
            r.seed.to_string(),
            r.runs.to_string(),
            num(r.rmse_mean),
            num(r.rmse_ci),
            num(r.mae_mean),
            num(r.mae_ci),
            num(r.best_rmse),
            num(r.best_mae),
            num(r.best_stdev),
            num(r.best_r2),
            r.note.clone(),
        ])?;
    }
    w.flush()?;

    if !outcome.pvalues.is_empty() {
        let mut w = writer(&tables.join("pvalues.csv"))?;
        w.write_record(["method", "junction", "interval", "variant_a", "variant_b", "p_value"])?;
        for p in &outcome.pvalues {
            w.write_record([
                p.method.to_string(),
                p.junction.clone(),
                p.interval.to_string(),
                p.variant_a.clone(),
                p.variant_b.clone(),
                num(p.p_value),
            ])?;
        }
        w.flush()?;
    }

    if !outcome.gapped.is_empty() {
        let mut w = writer(&tables.join("gapped.csv"))?;
        w.write_record(["method", "junction", "continuous_rmse", "gapped_rmse", "degradation", "p_value"])?;
        for g in &outcome.gapped {
            w.write_record([
                g.method.to_string(),
                g.junction.clone(),
                num(g.continuous_rmse),
                num(g.gapped_rmse),
                num(g.degradation),
                opt(g.p_value),
            ])?;
        }
        w.flush()?;
    }

    for m in &outcome.transfer {
        for (metric, grid) in [("rmse", &m.rmse), ("mae", &m.mae)] {
            let mut w = writer(&tables.join(format!("transfer_{metric}_{}.csv", m.method)))?;
            let mut head = vec!["train\\test".to_string()];
            head.extend(m.junctions.iter().cloned());
            w.write_record(&head)?;
            for (j, row) in m.junctions.iter().zip(grid) {
                let mut rec = vec![j.clone()];
                rec.extend(row.iter().map(|v| num(*v)));
                w.write_record(&rec)?;
            }
            w.flush()?;
        }
    }

    if !outcome.structure.is_empty() {
        let arity = outcome.structure.iter().map(|s| s.occurrences.len()).max().unwrap_or(0);
        let mut w = writer(&tables.join("structure_inputs.csv"))?;
        let mut head: Vec<String> = ["method", "junction", "models", "lag_total"].map(String::from).to_vec();
        for prefix in ["occ", "models_with", "models_lagging"] {
            head.extend((0..arity).map(|k| format!("{prefix}_x{k}")));
        }
        w.write_record(&head)?;
        for s in &outcome.structure {
            let mut rec = vec![
                s.method.to_string(),
                s.junction.clone(),
                s.models.to_string(),
                s.lag_total.to_string(),
            ];
            for v in [&s.occurrences, &s.models_with, &s.models_lagging] {
                rec.extend((0..arity).map(|k| v.get(k).copied().unwrap_or(0).to_string()));
            }
            w.write_record(&rec)?;
            for (name, hist) in [
                ("node_count", &s.node_count_hist),
                ("depth", &s.depth_hist),
                ("lag_count", &s.lag_count_hist),
            ] {
                let stem = file_stem(&[&s.junction, s.method.code(), name]);
                write_hist(&plots.join(format!("{stem}.dat")), name, hist)?;
            }
        }
        w.flush()?;
    }

    if !outcome.shelf.is_empty() {
        let mut w = writer(&tables.join("shelf_life.csv"))?;
        w.write_record([
            "method", "junction", "near_rmse", "far_rmse", "delta", "best_near_rmse", "best_far_rmse", "p_value",
        ])?;
        for s in &outcome.shelf {
            w.write_record([
                s.method.to_string(),
                s.junction.clone(),
                num(s.near_rmse),
                num(s.far_rmse),
                num(s.delta),
                num(s.best_near_rmse),
                num(s.best_far_rmse),
                opt(s.p_value),
            ])?;
        }
        w.flush()?;
    }

    for cell in &outcome.cells {
        write_best_model(scenario, cell, &models)?;
    }
    Ok(())
}

fn write_hist(path: &Path, name: &str, hist: &BTreeMap<usize, usize>) -> Result<()> {
    let mut text = format!("# {name} models\n");
    for (x, y) in hist {
        let _ = writeln!(text, "{x} {y}");
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn write_best_model(scenario: &Scenario, cell: &Cell, dir: &Path) -> Result<()> {
    let (Some(model), Some(report)) = (cell.best_model(), cell.best_report()) else {
        return Ok(());
    };
    let stem = file_stem(&[&cell.junction, cell.method.code(), &cell.variant, &cell.interval.to_string()]);
    let sidecar = Sidecar {
        junction_id: cell.train_junction.clone(),
        interval: cell.interval,
        method: cell.method.to_string(),
        train_window: cell.window.train_ranges.clone(),
        test_window: Some(cell.window.test_range),
        metrics: Some(report.clone()),
        seed: Some(match cell.method {
            Method::Symbolic | Method::SymbolicLag => {
                scenario.effective_seed().wrapping_add(cell.best.unwrap_or(0) as u64)
            }
            _ => scenario.effective_seed(),
        }),
        model: model.clone(),
    };
    save_model(&dir.join(format!("{stem}.sl")), &sidecar)
}
