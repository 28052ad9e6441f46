use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn crlearn(args: &[&str], cwd: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_crlearn"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn fit_reports_uniform_probabilities_for_the_mean() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("y.csv"), "y\n1\n2\n3\n").unwrap();
    fs::write(dir.path().join("c.json"), r#"{"moment_model": "mean"}"#).unwrap();
    let out = crlearn(
        &[
            "fit", "--config", "c.json", "--data", "y.csv", "--out", "res", "--gamma", "1",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = read_json(&dir.path().join("res/contrast.json"));
    assert!((report["beta"][0].as_f64().unwrap() - 2.0).abs() < 1e-8);
    for p in report["pi"].as_array().unwrap() {
        assert!((p.as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-10);
    }
    let resolved = read_json(&dir.path().join("res/resolved-config.json"));
    assert_eq!(resolved["mode"], "fit");
    assert_eq!(resolved["cr"]["gamma"], 1.0);
}

#[test]
fn errors_exit_nonzero_with_a_category() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.csv"), "1\nabc\n3\n").unwrap();
    let out = crlearn(&["fit", "--data", "bad.csv", "--out", "res"], dir.path());
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "parse");
    assert!(err["message"].as_str().unwrap().contains('2'));

    let out = crlearn(&["fit", "--out", "res"], dir.path());
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "invalid_config");

    fs::write(dir.path().join("c.json"), r#"{"unknown_key": 1}"#).unwrap();
    let out = crlearn(&["fit", "--config", "c.json"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn simulate_then_summarize_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = crlearn(
        &[
            "simulate", "--theta", "1.5,1.0", "--n", "40", "--seed", "5", "--out", "sim",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let data = dir.path().join("sim/simulated.csv");
    assert_eq!(fs::read_to_string(&data).unwrap().lines().count(), 41);

    fs::write(
        dir.path().join("c.json"),
        r#"{"theta_bounds": {"lower": [-5, 0.1], "upper": [5, 5]}}"#,
    )
    .unwrap();
    let args = [
        "summarize",
        "--config",
        "c.json",
        "--data",
        "sim/simulated.csv",
        "--theta",
        "1.4,1.1",
        "--seed",
        "2",
        "--out",
        "sum",
    ];
    let a = crlearn(&args, dir.path());
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let first = fs::read_to_string(dir.path().join("sum/summary.json")).unwrap();
    assert!(crlearn(&args, dir.path()).status.success());
    let second = fs::read_to_string(dir.path().join("sum/summary.json")).unwrap();
    assert_eq!(first, second);
    let v: Value = serde_json::from_str(&first).unwrap();
    assert!(v["statistic"]["value"].as_f64().unwrap().is_finite());
}
