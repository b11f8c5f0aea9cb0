//! Experiment artifacts: curve CSV files, JSON-lines trial logs, metadata
//! headers and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::FlatConfig;
use crate::error::{Error, Result};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const CURVE_HEADER: &str = "abscissa,estimate,ci_lower,ci_upper,ci_half_width,bound";

/// Estimates with confidence limits and a reference curve, one row per
/// abscissa. Intervals are stored by their endpoints since exact binomial
/// intervals are asymmetric.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCurve {
    pub abscissae: Vec<f64>,
    pub estimates: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub bound_values: Vec<f64>,
}

impl EmpiricalCurve {
    pub fn push(&mut self, x: f64, estimate: f64, lo: f64, hi: f64, bound: f64) {
        self.abscissae.push(x);
        self.estimates.push(estimate);
        self.ci_lower.push(lo);
        self.ci_upper.push(hi);
        self.bound_values.push(bound);
    }

    pub fn len(&self) -> usize {
        self.abscissae.len()
    }

    pub fn is_empty(&self) -> bool {
        self.abscissae.is_empty()
    }

    pub fn ci_half_widths(&self) -> Vec<f64> {
        self.ci_lower
            .iter()
            .zip(&self.ci_upper)
            .map(|(lo, hi)| 0.5 * (hi - lo))
            .collect()
    }

    /// Equal lengths and `lo ≤ estimate ≤ hi` wherever all three are numbers.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if [
            &self.estimates,
            &self.ci_lower,
            &self.ci_upper,
            &self.bound_values,
        ]
        .iter()
        .any(|v| v.len() != n)
        {
            return Err(Error::invariant("curve columns differ in length"));
        }
        for i in 0..n {
            let (lo, e, hi) = (self.ci_lower[i], self.estimates[i], self.ci_upper[i]);
            if !lo.is_nan() && !e.is_nan() && !hi.is_nan() && !(lo <= e && e <= hi) {
                return Err(Error::invariant(format!(
                    "row {i}: estimate {e} outside its interval [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    /// Rows where the upper confidence limit exceeds the bound.
    pub fn dominance_failures(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| !(self.ci_upper[i] <= self.bound_values[i]))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CURVE_HEADER);
        out.push('\n');
        let half = self.ci_half_widths();
        for i in 0..self.len() {
            let _ = writeln!(
                out,
                "{:?},{:?},{:?},{:?},{:?},{:?}",
                self.abscissae[i],
                self.estimates[i],
                self.ci_lower[i],
                self.ci_upper[i],
                half[i],
                self.bound_values[i]
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim_end_matches('\r') == CURVE_HEADER => {}
            _ => return Err(Error::parse(1, format!("expected header {CURVE_HEADER:?}"))),
        }
        let mut curve = EmpiricalCurve::default();
        for (i, line) in lines {
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(Error::parse(
                    i + 1,
                    format!("expected 6 fields, got {}", fields.len()),
                ));
            }
            let mut v = [0.0f64; 6];
            for (slot, f) in v.iter_mut().zip(&fields) {
                *slot = f
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::parse(i + 1, format!("{f:?}: {e}")))?;
            }
            let half = 0.5 * (v[3] - v[2]);
            if half.to_bits() != v[4].to_bits() && !(half.is_nan() && v[4].is_nan()) {
                return Err(Error::parse(
                    i + 1,
                    "ci_half_width disagrees with the interval",
                ));
            }
            curve.push(v[0], v[1], v[2], v[3], v[5]);
        }
        Ok(curve)
    }
}

/// Serialize records as one JSON object per line.
pub fn to_json_lines<T: Serialize>(records: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn from_json_lines<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(i + 1, e.to_string())))
        .collect()
}

/// Serde adapter writing non-finite floats as the strings `"inf"`,
/// `"-inf"` and `"nan"`, which plain JSON cannot carry.
pub mod lenient_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Tag(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Tag(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a number: {other:?}"))),
            },
        }
    }
}

/// Header written next to every output: the parameters that determine it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub experiment: String,
    pub code_version: String,
    pub parameters: FlatConfig,
    pub notes: Vec<String>,
}

impl Metadata {
    /// Worker count and output location do not affect results and are
    /// blanked so that metadata is identical across re-runs.
    pub fn new(experiment: &str, config: &FlatConfig, notes: Vec<String>) -> Self {
        let mut parameters = config.clone();
        let defaults = FlatConfig::default();
        parameters.workers = defaults.workers;
        parameters.output = defaults.output;
        Self {
            experiment: experiment.to_string(),
            code_version: CODE_VERSION.to_string(),
            parameters,
            notes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    pub name: String,
    pub path: PathBuf,
}

/// Everything needed to re-run a command bit-identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    pub code_version: String,
    /// The full effective configuration as a flat TOML document.
    pub config: String,
    pub master_seed: u64,
    pub workers: usize,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub outputs: Vec<OutputFile>,
}

impl RunManifest {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: RunManifest = serde_json::from_str(text)?;
        FlatConfig::parse(&m.config, &[])?;
        Ok(m)
    }
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Collects named files under one directory.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<OutputFile>,
}

impl OutputDir {
    pub fn create(root: impl AsRef<Path>) -> Result<Self> {
        fs::create_dir_all(root.as_ref())?;
        Ok(Self {
            root: root.as_ref().to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.root.join(name);
        fs::write(&path, contents)?;
        self.written.push(OutputFile {
            name: name.to_string(),
            path: path.clone(),
        });
        Ok(path)
    }

    pub fn written(&self) -> &[OutputFile] {
        &self.written
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EmpiricalCurve {
        let mut c = EmpiricalCurve::default();
        c.push(1e-3, 0.0, 0.0, 0.000_368_8, 0.1);
        c.push(0.1, 0.25, 0.2, 0.3, f64::INFINITY);
        c.push(1.0, 1.0, 0.999, 1.0, f64::NAN);
        c
    }

    fn same(a: &EmpiricalCurve, b: &EmpiricalCurve) -> bool {
        let eq = |x: &[f64], y: &[f64]| {
            x.len() == y.len() && x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits())
        };
        eq(&a.abscissae, &b.abscissae)
            && eq(&a.estimates, &b.estimates)
            && eq(&a.ci_lower, &b.ci_lower)
            && eq(&a.ci_upper, &b.ci_upper)
            && eq(&a.bound_values, &b.bound_values)
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let c = sample();
        c.validate().unwrap();
        let back = EmpiricalCurve::from_csv(&c.to_csv()).unwrap();
        assert!(same(&c, &back));
        assert_eq!(c.dominance_failures(), vec![2]);
    }

    #[test]
    fn csv_rejects_garbage() {
        assert!(EmpiricalCurve::from_csv("").is_err());
        assert!(EmpiricalCurve::from_csv("x,y\n1,2").is_err());
        let h = CURVE_HEADER;
        assert!(EmpiricalCurve::from_csv(&format!("{h}\n1,2,3")).is_err());
        assert!(EmpiricalCurve::from_csv(&format!("{h}\n1,a,0,1,0.5,1")).is_err());
        assert!(EmpiricalCurve::from_csv(&format!("{h}\n1,0.5,0,1,0.4,1")).is_err());
        assert!(EmpiricalCurve::from_csv(&format!("{h}\n1,0.5,0,1,0.5,1\n")).is_ok());
    }

    #[test]
    fn validation_catches_bad_rows() {
        let mut c = sample();
        c.estimates[1] = 0.9;
        assert!(c.validate().is_err());
        c.bound_values.pop();
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_lines_round_trip() {
        let rows = vec![(1u64, 0.5f64), (2, -1.0)];
        let text = to_json_lines(&rows).unwrap();
        assert_eq!(text.lines().count(), 2);
        let back: Vec<(u64, f64)> = from_json_lines(&text).unwrap();
        assert_eq!(back, rows);
        assert!(from_json_lines::<(u64, f64)>("[1, 2]\nnope").is_err());
    }

    #[test]
    fn manifest_round_trip_and_metadata_blanking() {
        let mut flat = FlatConfig::default();
        flat.workers = 4;
        flat.output = "/tmp/run".into();
        let meta = Metadata::new("wegner", &flat, vec![]);
        assert_eq!(meta.parameters.workers, 0);
        assert_eq!(meta.parameters, FlatConfig::default());
        let m = RunManifest {
            command: "wegner".into(),
            code_version: CODE_VERSION.into(),
            config: flat.to_toml().unwrap(),
            master_seed: 3,
            workers: 4,
            started_unix: 1,
            finished_unix: 2,
            outputs: vec![OutputFile {
                name: "curve.csv".into(),
                path: "/tmp/run/curve.csv".into(),
            }],
        };
        assert_eq!(RunManifest::from_json(&m.to_json().unwrap()).unwrap(), m);
        assert!(RunManifest::from_json("{}").is_err());
    }

    #[test]
    fn non_finite_floats_survive_json() {
        #[derive(Serialize, Deserialize)]
        struct R {
            #[serde(with = "lenient_f64")]
            v: f64,
        }
        for v in [1.5, f64::INFINITY, f64::NEG_INFINITY] {
            let text = serde_json::to_string(&R { v }).unwrap();
            assert_eq!(serde_json::from_str::<R>(&text).unwrap().v, v);
        }
        let nan = serde_json::to_string(&R { v: f64::NAN }).unwrap();
        assert_eq!(nan, r#"{"v":"nan"}"#);
        assert!(serde_json::from_str::<R>(&nan).unwrap().v.is_nan());
        assert!(serde_json::from_str::<R>(r#"{"v":"big"}"#).is_err());
    }

    #[test]
    fn output_dir_tracks_files() {
        let tmp = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(tmp.path().join("nested")).unwrap();
        let p = out.write("a.txt", "hi").unwrap();
        assert_eq!(fs::read_to_string(p).unwrap(), "hi");
        assert_eq!(out.written().len(), 1);
    }
}
