use std::path::Path;
use std::process::{Command, Output};

fn swe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swe"))
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth(out: &Path) -> Output {
    swe(&[
        "--out",
        out.to_str().unwrap(),
        "synth",
        "--n",
        "8",
        "--m",
        "30",
        "--seasons",
        "4",
        "--seed",
        "7",
    ])
}

#[test]
fn gradcheck_tiny_passes() {
    let o = swe(&["gradcheck", "--tiny"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let last = stdout.lines().last().unwrap();
    let err: f64 = last
        .strip_prefix("max rel error ")
        .and_then(|s| s.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(err < 1e-4, "{last}");
}

#[test]
fn synth_twice_gives_identical_cache() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(synth(&a).status.success());
    let first = std::fs::read(a.join("dataset.json")).unwrap();
    assert!(synth(&a).status.success());
    assert!(synth(&b).status.success());
    assert_eq!(std::fs::read(a.join("dataset.json")).unwrap(), first);
    assert_eq!(std::fs::read(b.join("dataset.json")).unwrap(), first);
    for f in ["data/stations.csv", "data/daily.csv"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn evaluate_without_predictions_names_the_input() {
    let dir = tempfile::tempdir().unwrap();
    let o = swe(&["--out", dir.path().to_str().unwrap(), "evaluate"]);
    assert!(!o.status.success());
    let msg = stderr(&o);
    assert_eq!(msg.trim_end().lines().count(), 1, "{msg}");
    assert!(msg.contains("ensemble.predictions.csv"), "{msg}");
}

#[test]
fn bad_flags_fail_with_one_line() {
    for args in [
        &["--bogus"][..],
        &["--model", "forest", "train"],
        &["train", "--epochs", "many"],
    ] {
        let o = swe(args);
        assert!(!o.status.success(), "{args:?}");
        assert_eq!(stderr(&o).trim_end().lines().count(), 1, "{args:?}");
    }
    assert_eq!(
        swe_cli::run(["swe", "prepare", "--stations", "nope.csv"]),
        1
    );
}

#[test]
fn ensemble_needs_both_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert!(synth(dir.path()).status.success());
    let o = swe(&["--out", out, "--model", "spatial", "--epochs", "1", "train"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = swe(&["--out", out, "predict"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("temporal checkpoint"), "{}", stderr(&o));
    assert!(!dir.path().join("spatial.predictions.csv").exists());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    let out = dir.path().join("run");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"schema_version": 1, "seed": 5, "gamma_window": 2, "out": {:?}}}"#,
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let code = swe_cli::run([
        "swe",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "6",
        "--scheduler-factor",
        "1",
        "synth",
        "--n",
        "4",
        "--m",
        "20",
        "--seasons",
        "2",
    ]);
    assert_eq!(code, 0);
    let echoed: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("synth.config.json")).unwrap()).unwrap();
    assert_eq!(echoed["seed"], 6);
    assert_eq!(echoed["gamma_window"], 2);
    assert_eq!(echoed["synth"]["n_stations"], 4);
    assert_eq!(echoed["schema_version"], 1);
    assert_eq!(echoed["train"]["scheduler_factor"], 1.0);
}

#[test]
fn full_pipeline_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert!(synth(dir.path()).status.success());
    let run = |args: &[&str]| {
        let mut all = vec!["--out", out];
        all.extend_from_slice(args);
        let o = swe(&all);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        o
    };
    run(&["--epochs", "2", "train"]);
    run(&["--model", "lr", "train"]);
    let ck = std::fs::read(dir.path().join("temporal.ckpt.json")).unwrap();
    run(&["predict"]);
    run(&["--model", "lr", "predict"]);
    run(&["evaluate"]);
    let report = std::fs::read(dir.path().join("report/report.json")).unwrap();
    let table = String::from_utf8(run(&["report"]).stdout).unwrap();
    for model in ["spatial", "temporal", "ensemble", "lr"] {
        assert!(table.contains(model), "{table}");
    }

    run(&["--epochs", "2", "train"]);
    run(&["predict"]);
    run(&["evaluate"]);
    assert_eq!(
        std::fs::read(dir.path().join("temporal.ckpt.json")).unwrap(),
        ck
    );
    assert_eq!(
        std::fs::read(dir.path().join("report/report.json")).unwrap(),
        report
    );
}
