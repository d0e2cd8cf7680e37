use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn eegsiam(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eegsiam"))
        .args(args)
        .current_dir(cwd)
        .env_remove("EEGSIAM_OUT")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn synth(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--cases", "4", "--controls", "4", "--seed", "7", "--out", "data"];
    args.extend_from_slice(extra);
    ok(&eegsiam(dir, &args));
}

#[test]
fn synth_writes_manifest_and_one_csv_per_subject() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), &["--duration-s", "10"]);
    let data = tmp.path().join("data");
    let csvs = fs::read_dir(&data)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "csv"))
        .count();
    assert_eq!(csvs, 8);
    assert!(data.join("manifest.json").exists());
    assert!(data.join("run_manifest.json").exists());
    let entries: Vec<serde_json::Value> =
        serde_json::from_str(&fs::read_to_string(data.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(entries.len(), 8);
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = eegsiam(tmp.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(eegsiam(tmp.path(), &["synth", "--bogus"]).status.code(), Some(1));
    assert_eq!(eegsiam(tmp.path(), &["run", "--pipeline", "FFT-kNN"]).status.code(), Some(1));
    assert_eq!(eegsiam(tmp.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_two_with_a_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let out = eegsiam(tmp.path(), &["run", "--pipeline", "FFT-kNN", "--manifest", "missing.json", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error:") && err.contains("missing.json"), "{err}");
}

#[test]
fn invalid_parameters_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), &["--duration-s", "10"]);
    let out = eegsiam(
        tmp.path(),
        &["run", "--pipeline", "FFT-NOPE", "--manifest", "data/manifest.json", "--out", "o"],
    );
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn pairs_stats_prints_the_pair_count() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), &["--duration-s", "4"]);
    let out = eegsiam(tmp.path(), &["pairs", "stats", "--manifest", "data/manifest.json"]);
    ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().next(), Some("O = 448"));
}

#[test]
fn run_is_byte_reproducible_and_stays_inside_out() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), &["--duration-s", "12", "--channels", "2"]);
    let before: Vec<_> = fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    let run = |out: &str| {
        ok(&eegsiam(
            tmp.path(),
            &[
                "run", "--pipeline", "DSTFT-SNN-kNN", "--manifest", "data/manifest.json", "--epochs", "2",
                "--max-freq-hz", "30", "--seed", "1", "--out", out,
            ],
        ))
    };
    run("a");
    run("b");
    let mut after: Vec<_> = fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    after.retain(|n| !before.contains(n));
    after.sort();
    assert_eq!(after, vec!["a", "b"]);
    for f in ["report.json", "report.txt", "folds.csv", "run_manifest.json", "features.csv", "loss_trace.csv"] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between identical runs");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("a/run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seed"], 1);
    assert_eq!(manifest["config"]["net"]["epochs"], 2);

    ok(&eegsiam(tmp.path(), &["report", "a", "b", "--out", "combined"]));
    let table = fs::read_to_string(tmp.path().join("combined/report.txt")).unwrap();
    assert_eq!(table.lines().filter(|l| l.starts_with("DSTFT-SNN-kNN")).count(), 2);
}
