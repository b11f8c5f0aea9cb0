use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mploc::io::{EmpiricalCurve, RunManifest};

fn mploc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mploc"))
        .args(args)
        .current_dir(dir)
        .env_remove("MPLOC_OUT")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

/// Every file in `dir` except manifests, sorted by name.
fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| !p.to_string_lossy().ends_with(".manifest.json"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn descent_selftest_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = mploc(
        &[
            "descent-selftest",
            "--instances",
            "1000",
            "--seed",
            "7",
            "--out",
            "o",
        ],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let lines = fs::read_to_string(tmp.path().join("o/descent-selftest.trials.jsonl")).unwrap();
    assert!(lines.is_empty(), "no counterexamples expected");
}

#[test]
fn strong_disorder_ds_has_no_hits() {
    let tmp = tempfile::tempdir().unwrap();
    let out = mploc(
        &[
            "ds", "--n", "2", "--k", "0", "--g", "1000", "--trials", "1000", "--out", "o",
        ],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let curve = EmpiricalCurve::from_csv(&fs::read_to_string(tmp.path().join("o/ds.csv")).unwrap())
        .unwrap();
    assert_eq!(curve.abscissae, vec![1000.0]);
    assert_eq!(curve.estimates, vec![0.0]);
}

#[test]
fn documented_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(
        code(&mploc(&["wegner", "--config", "missing.toml"], dir)),
        3
    );

    fs::write(dir.join("bad.toml"), "no_such_key = 1\n").unwrap();
    assert_eq!(code(&mploc(&["wegner", "--config", "bad.toml"], dir)), 3);
    fs::write(dir.join("broken.toml"), "trials = [\n").unwrap();
    assert_eq!(code(&mploc(&["trace", "--config", "broken.toml"], dir)), 3);
    assert_eq!(code(&mploc(&["decay", "--set", "trials=0"], dir)), 3);

    assert_eq!(
        code(&mploc(&["wegner", "--separation", "8", "--out", "o"], dir)),
        4
    );
    assert_eq!(code(&mploc(&["frobnicate"], dir)), 2);
    assert_eq!(code(&mploc(&["replay", "nowhere.json"], dir)), 3);

    // At weak disorder both cubes are singular almost surely, far above the bound.
    let weak = mploc(
        &[
            "ds", "--k", "0", "--g", "1", "--trials", "20", "--set", "l0=3", "--out", "weak",
        ],
        dir,
    );
    assert_eq!(code(&weak), 1, "{}", String::from_utf8_lossy(&weak.stderr));
    assert!(String::from_utf8_lossy(&weak.stderr).contains("offending seeds"));
    assert!(dir.join("weak/ds.csv").exists());
}

#[test]
fn csv_round_trips_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = mploc(
        &["wegner", "--trials", "500", "--seed", "3", "--out", "o"],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(tmp.path().join("o/wegner.csv")).unwrap();
    let curve = EmpiricalCurve::from_csv(&text).unwrap();
    assert_eq!(curve.len(), 20);
    assert_eq!(curve.to_csv(), text);
}

#[test]
fn output_directory_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_mploc"))
        .args(["trace", "--trials", "5", "--radii", "1,2"])
        .current_dir(tmp.path())
        .env("MPLOC_OUT", "from-env")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("from-env/trace.csv").exists());
}

#[test]
fn replay_reproduces_outputs_across_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let runs: [&[&str]; 7] = [
        &["wegner", "--trials", "300", "--set", "s_points=6"],
        &["ds", "--trials", "30", "--g", "1,8", "--set", "l0=4"],
        &["trace", "--trials", "20", "--radii", "1,2,3"],
        &[
            "decay",
            "--trials",
            "4",
            "--radius",
            "5",
            "--set",
            "g=4.0",
            "--set",
            "decay_resamples=100",
        ],
        &[
            "dynamics",
            "--trials",
            "4",
            "--radius",
            "8",
            "--set",
            "g=8.0",
            "--set",
            "boundary_tolerance=1e-3",
        ],
        &["gri-selftest", "--geometries", "12"],
        &["descent-selftest", "--instances", "40"],
    ];
    for (i, args) in runs.iter().enumerate() {
        let first = format!("first{i}");
        let mut full: Vec<&str> = args.to_vec();
        full.extend(["--workers", "1", "--seed", "11", "--out", &first]);
        let out = mploc(&full, dir);
        assert!(
            code(&out) <= 1,
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let manifest_path = dir.join(&first).join(format!("{}.manifest.json", args[0]));
        let manifest =
            RunManifest::from_json(&fs::read_to_string(&manifest_path).unwrap()).unwrap();
        assert_eq!(manifest.command, args[0]);
        assert_eq!(manifest.master_seed, 11);
        assert!(manifest.outputs.iter().all(|o| dir.join(&o.path).exists()));

        for workers in ["2", "4"] {
            let again = format!("again{i}w{workers}");
            let rerun = mploc(
                &[
                    "replay",
                    manifest_path.to_str().unwrap(),
                    "--workers",
                    workers,
                    "--out",
                    &again,
                ],
                dir,
            );
            assert_eq!(code(&rerun), code(&out), "{args:?}");
            assert_eq!(
                outputs(&dir.join(&first)),
                outputs(&dir.join(&again)),
                "{args:?} with {workers} workers"
            );
        }
    }
}
