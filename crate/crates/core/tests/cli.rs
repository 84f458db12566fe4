use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gdln(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gdln")).args(args).output().expect("run gdln")
}

fn out_dir(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn dataset_writes_inputs_of_the_expected_shape() {
    let dir = tempfile::tempdir().unwrap();
    let o = out_dir(dir.path(), "ctx");
    assert!(gdln(&["dataset", "--preset", "context3", "--out", &o]).status.success());
    let inputs = fs::read_to_string(dir.path().join("ctx/inputs.csv")).unwrap();
    let rows: Vec<&str> = inputs.lines().filter(|l| !l.is_empty()).collect();
    assert_eq!(rows.len(), 11);
    assert!(rows.iter().all(|r| r.split(',').count() == 24));
    assert!(fs::metadata(dir.path().join("ctx/metadata.json")).is_ok());

    let bad = gdln(&["dataset", "--preset", "nope", "--out", &o]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("unknown preset"));
}

#[test]
fn seeded_runs_are_byte_identical_and_zero_epochs_gives_a_header() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, z) = (out_dir(dir.path(), "a"), out_dir(dir.path(), "b"), out_dir(dir.path(), "z"));
    for o in [&a, &b] {
        assert!(gdln(&["run", "--preset", "xor", "--seed", "9", "--set", "epochs=200", "--out", o]).status.success());
    }
    let ta = fs::read(dir.path().join("a/trajectory.csv")).unwrap();
    assert_eq!(ta, fs::read(dir.path().join("b/trajectory.csv")).unwrap());
    assert_eq!(String::from_utf8_lossy(&ta).lines().count(), 202);

    assert!(gdln(&["run", "--preset", "xor", "--set", "epochs=0", "--out", &z]).status.success());
    assert_eq!(fs::read_to_string(dir.path().join("z/trajectory.csv")).unwrap(), "epoch,loss,source,run_id\n");

    let same = gdln(&["compare", &format!("{a}/trajectory.csv"), &format!("{b}/trajectory.csv")]);
    assert_eq!(String::from_utf8_lossy(&same.stdout).trim(), "0");
}

#[test]
fn config_file_overrides_and_analytic_curves() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "preset = xor\nmodel = analytic\n\n[overrides]\ntask = xor(0.5)\nepochs = 50\n").unwrap();
    let o = out_dir(dir.path(), "an");
    let run = gdln(&["run", "--config", cfg.to_str().unwrap(), "--out", &o]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let csv = fs::read_to_string(dir.path().join("an/trajectory.csv")).unwrap();
    assert!(csv.lines().any(|l| l.ends_with(",analytic,linear_gating")));
    assert!(csv.lines().any(|l| l.ends_with(",analytic,xor_gating")));
    assert_eq!(csv.lines().count(), 1 + 2 * 51);
    assert!(fs::read_to_string(dir.path().join("an/config.txt")).unwrap().contains("model = analytic"));
}

#[test]
fn divergence_and_failed_checks_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = out_dir(dir.path(), "d");
    let run = gdln(&["run", "--preset", "xor", "--set", "learning_rate=50", "--out", &o]);
    assert_eq!(run.status.code(), Some(2));
    let ok = gdln(&["verify", "--preset", "context3", "--draws", "50"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
}

#[test]
fn reproduce_bundle_is_self_contained() {
    let dir = tempfile::tempdir().unwrap();
    let o = out_dir(dir.path(), "fig2");
    let run = gdln(&["reproduce", "fig2", "--set", "seeds=0", "--out", &o]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    for f in ["config.txt", "relu.csv", "summary.json"] {
        assert!(dir.path().join("fig2").join(f).exists(), "{f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fig2/summary.json")).unwrap()).unwrap();
    let kink = summary["analytic_kink"].as_f64().unwrap();
    assert!((0.7..=0.95).contains(&kink), "{kink}");
}
