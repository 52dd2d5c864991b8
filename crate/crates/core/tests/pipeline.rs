use lagsr::experiments::{run_scenario, run_scenario_with_jobs, write_outputs, Method, Scenario};

const SMALL_GP: &str = "[gp]\nruns = 4\npopulation_size = 150\ngenerations = 6\n";

fn dataset(id: &str, seed: u64, extra: &str) -> String {
    format!(
        "[[datasets]]\nsource = \"synth\"\njunction_id = \"{id}\"\narity = 3\ndays = 28\ninterval = 15\n\
         noise_stdev = 1.0\nground_truth = \"0.5 * x0 + 0.3 * lag(x0) + 1.0 * x1 + 2\"\nseed = {seed}\n{extra}\n"
    )
}

fn scenario(head: &str, experiment: &str, datasets: &[String]) -> Scenario {
    let text = format!("{head}\nseed = 3\n{SMALL_GP}\n[experiment]\n{experiment}\n{}", datasets.concat());
    Scenario::from_toml(&text).unwrap()
}

#[test]
fn no_gap_gives_identical_arms() {
    let s = scenario(
        "name = \"g\"\nmethods = [\"HW\", \"LR\", \"SL\"]",
        "kind = \"gapped_training\"\ntrain = \"2017-08-28..2017-09-17\"\ntest = \"2017-09-18..2017-09-24\"",
        &[dataset("G", 1, "")],
    );
    let out = run_scenario(&s).unwrap();
    assert_eq!(out.gapped.len(), 3);
    for g in &out.gapped {
        assert_eq!(g.continuous_rmse, g.gapped_rmse, "{}", g.method);
        assert_eq!(g.degradation, 0.0);
        if let Some(p) = g.p_value {
            assert_eq!(p, 1.0);
        }
    }
}

#[test]
fn holt_winters_ignores_input_gaps() {
    let s = scenario(
        "name = \"g\"\nmethods = [\"HW\", \"LR\"]",
        "kind = \"gapped_training\"\ntrain = \"2017-08-28..2017-09-17\"\n\
         gap = \"2017-09-04T00:00..2017-09-09T16:00\"\ntest = \"2017-09-18..2017-09-24\"",
        &[dataset("G", 1, "")],
    );
    let out = run_scenario(&s).unwrap();
    let hw = out.gapped.iter().find(|g| g.method == Method::HoltWinters).unwrap();
    assert_eq!(hw.continuous_rmse, hw.gapped_rmse);
    let lr = out.gapped.iter().find(|g| g.method == Method::Linear).unwrap();
    assert!(lr.degradation.abs() < 0.05, "{}", lr.degradation);
}

#[test]
fn transfer_degrades_most_for_the_hidden_arm() {
    let s = scenario(
        "name = \"t\"\nmethods = [\"LR\"]",
        "kind = \"transfer_matrix\"\ntrain = \"2017-08-28..2017-09-17\"\ntest = \"2017-09-18..2017-09-24\"",
        &[
            dataset("T1", 11, ""),
            dataset("T2", 12, ""),
            "[[datasets]]\nsource = \"synth\"\njunction_id = \"T3\"\narity = 3\nhidden_arms = 1\ndays = 28\n\
             interval = 15\nnoise_stdev = 1.0\nground_truth = \"0.5 * x0 + 0.3 * lag(x0) + 1.0 * x1 + 0.8 * x3 + 2\"\n\
             seed = 13\n"
                .to_string(),
        ],
    );
    let out = run_scenario(&s).unwrap();
    let m = &out.transfer[0];
    assert_eq!(m.junctions, ["T1", "T2", "T3"]);
    let r = &m.rmse;
    // Twins transfer at roughly their native error.
    assert!((r[0][1] / r[1][1] - 1.0).abs() < 0.1, "{r:?}");
    assert!((r[1][0] / r[0][0] - 1.0).abs() < 0.1, "{r:?}");
    // Anything crossing to or from T3 is the worst cell of its row or column.
    assert!(r[0][2] > 2.0 * r[0][0] && r[1][2] > 2.0 * r[1][1], "{r:?}");
    assert!(r[2][0] > 2.0 * r[0][0] && r[2][1] > 2.0 * r[1][1], "{r:?}");
}

#[test]
fn shelf_life_detects_a_regime_shift() {
    let shelf = |id: &str, extra: &str| {
        format!(
            "[[datasets]]\nsource = \"synth\"\njunction_id = \"{id}\"\narity = 3\ndays = 98\ninterval = 15\n\
             noise_stdev = 1.0\nground_truth = \"0.5 * x0 + 0.3 * lag(x0) + 1.0 * x1 + 2\"\nseed = 4\n{extra}\n"
        )
    };
    let s = scenario(
        "name = \"s\"\nmethods = [\"LR\"]",
        "kind = \"shelf_life\"\ntrain = \"2017-08-28..2017-09-17\"\nnear_test = \"2017-09-18..2017-09-24\"\n\
         far_test = \"2017-11-27..2017-12-03\"",
        &[
            shelf("R1", ""),
            shelf("R2", "[datasets.regime_shift]\nfrom_day = 56\noffset = 8.0"),
        ],
    );
    let out = run_scenario(&s).unwrap();
    let stable = out.shelf.iter().find(|r| r.junction == "R1").unwrap();
    let shifted = out.shelf.iter().find(|r| r.junction == "R2").unwrap();
    assert!(stable.delta.abs() < 0.3, "{}", stable.delta);
    assert!(shifted.delta > 4.0, "{}", shifted.delta);
}

#[test]
fn parallelism_does_not_change_results() {
    let s = scenario(
        "name = \"w\"\nmethods = [\"LR\", \"SL\"]",
        "kind = \"window_length\"\ntrain_weeks = [1, 2]\ntest = \"2017-09-18..2017-09-24\"",
        &[dataset("W", 2, "")],
    );
    let serial = run_scenario_with_jobs(&s, Some(1)).unwrap();
    let parallel = run_scenario_with_jobs(&s, Some(4)).unwrap();
    assert_eq!(serial.rows.len(), 4);
    for (a, b) in serial.cells.iter().zip(&parallel.cells) {
        assert_eq!(a.rmses(), b.rmses());
        assert_eq!(a.best, b.best);
    }
}

#[test]
fn outputs_are_written() {
    let s = scenario(
        "name = \"l\"\nmethods = [\"SL\"]",
        "kind = \"structure_stats\"\ntrain = \"2017-08-28..2017-09-17\"\ntest = \"2017-09-18..2017-09-24\"",
        &[dataset("L", 5, "")],
    );
    let out = run_scenario(&s).unwrap();
    assert_eq!(out.structure[0].models, 4);
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&s, &out, dir.path()).unwrap();
    for f in [
        "scenario.toml",
        "tables/results.csv",
        "tables/structure_inputs.csv",
        "plots/L_SL_depth.dat",
        "plots/L_SL_node_count.dat",
        "plots/L_SL_lag_count.dat",
        "models/L_SL_native_15.sl",
    ] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let back = Scenario::from_toml(&std::fs::read_to_string(dir.path().join("scenario.toml")).unwrap()).unwrap();
    assert_eq!(back.name, s.name);
}
