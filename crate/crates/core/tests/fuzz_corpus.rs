//! Replays the checked-in fuzz seeds through the same entry points as the fuzz targets.

use std::fs;
use std::path::PathBuf;

use mploc::config::{ExperimentConfig, FlatConfig};
use mploc::field::FieldSample;
use mploc::hamiltonian::parse_matrix_market;
use mploc::io::{EmpiricalCurve, RunManifest};

fn seeds(target: &str) -> Vec<(PathBuf, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| {
            let text = fs::read_to_string(&p).unwrap();
            (p, text)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn config_seeds_parse() {
    for (path, text) in seeds("config") {
        let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
        let overrides = [first.to_string()];
        FlatConfig::parse(rest, &overrides).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        ExperimentConfig::parse(rest, &overrides)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}

#[test]
fn matrix_market_seeds_parse() {
    for (path, text) in seeds("matrix_market") {
        parse_matrix_market(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}

#[test]
fn field_seeds_round_trip() {
    for (path, text) in seeds("field_json") {
        let field =
            FieldSample::from_json(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(
            FieldSample::from_json(&field.to_json().unwrap()).unwrap(),
            field
        );
    }
}

#[test]
fn curve_seeds_round_trip() {
    for (path, text) in seeds("curve_csv") {
        let curve =
            EmpiricalCurve::from_csv(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(curve.to_csv(), text);
    }
}

#[test]
fn manifest_seeds_parse() {
    for (path, text) in seeds("manifest_json") {
        RunManifest::from_json(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}
