use std::path::Path;
use std::process::{Command, Output};

fn lagsr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lagsr"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

#[test]
fn usage_errors_exit_1_and_runtime_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(lagsr(d, &["--help"]).status.code(), Some(0));
    assert_eq!(lagsr(d, &["bogus"]).status.code(), Some(1));
    // --test is required.
    assert_eq!(lagsr(d, &["train", "--junction", "A", "--train", "2017-08-28..2017-09-03"]).status.code(), Some(1));
    // No data source given.
    let o = lagsr(
        d,
        &["train", "--junction", "A", "--train", "2017-08-28..2017-09-03", "--test", "2017-09-04..2017-09-05"],
    );
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
    // A missing file is a runtime failure.
    let o = lagsr(d, &["scenario", "does-not-exist.toml"]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
}

#[test]
fn synth_train_inspect_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = lagsr(d, &["--out-dir", "data", "synth", "--junction", "S", "--days", "14"]);
    assert!(o.status.success(), "{}", text(&o));
    for f in ["S.csv", "S.manifest.toml", "S.profile.toml", "run.json"] {
        assert!(d.join("data").join(f).is_file(), "{f}");
    }
    let run: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("data/run.json")).unwrap()).unwrap();
    assert_eq!(run["invocation"]["command"], "synth");

    let data = ["--csv", "data/S.csv", "--manifest", "data/S.manifest.toml"];
    let mut train = vec!["--seed", "7", "train"];
    train.extend(data);
    train.extend([
        "--junction", "S", "--train", "2017-08-28..2017-09-03", "--test", "2017-09-04..2017-09-06",
        "--method", "SL", "--runs", "3", "--population", "100", "--generations", "5",
    ]);
    let o = lagsr(d, &train);
    assert!(o.status.success(), "{}", text(&o));
    assert!(d.join("out/models/S_SL.sl").is_file());
    let eval = std::fs::read_to_string(d.join("out/tables/eval.csv")).unwrap();
    assert_eq!(eval.lines().count(), 2, "{eval}");

    let o = lagsr(d, &["inspect", "out/models/S_SL.sl"]);
    assert!(o.status.success(), "{}", text(&o));
    assert!(text(&o).contains("depth"));

    let mut evaluate = vec!["evaluate", "out/models/S_SL.sl"];
    evaluate.extend(data);
    evaluate.extend(["--test", "2017-09-07..2017-09-10"]);
    let o = lagsr(d, &evaluate);
    assert!(o.status.success(), "{}", text(&o));
    assert!(d.join("out/tables/evaluate.csv").is_file());
}

#[test]
fn train_is_reproducible_from_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(lagsr(d, &["--out-dir", "data", "synth", "--days", "10"]).status.success());
    let run = |out: &str| {
        let o = lagsr(
            d,
            &[
                "--seed", "3", "--out-dir", out, "train", "--csv", "data/S.csv", "--manifest", "data/S.manifest.toml",
                "--junction", "S", "--train", "2017-08-28..2017-09-01", "--test", "2017-09-02..2017-09-03",
                "--runs", "2", "--population", "80", "--generations", "4",
            ],
        );
        assert!(o.status.success(), "{}", text(&o));
        (
            std::fs::read(d.join(out).join("models/S_SL.sl")).unwrap(),
            std::fs::read(d.join(out).join("tables/eval.csv")).unwrap(),
        )
    };
    assert_eq!(run("a"), run("b"));
}
