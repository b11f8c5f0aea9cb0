//! Flat key-value experiment configuration.
//!
//! A config file is a TOML document with only top-level keys; every key is
//! optional and falls back to the default listed in [`FlatConfig`]. Unknown
//! keys are rejected. Command-line overrides are `key=value` strings whose
//! value is parsed as a TOML literal (bare words are taken as strings).

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::Eta;
use crate::field::FieldDistribution;
use crate::hamiltonian::{InteractionNorm, ModelSpec};
use crate::msa::ScaleLadder;
use crate::spectral::Interval;

/// Every recognized key with its default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlatConfig {
    // model
    pub particles: usize,
    pub dim: usize,
    pub g: f64,
    /// `"gaussian"` or `"uniform"`.
    pub distribution: String,
    pub field_mean: f64,
    pub field_variance: f64,
    pub field_lo: f64,
    pub field_hi: f64,
    /// `U2(0), …, U2(r0)`.
    pub interaction: Vec<f64>,
    /// `"max"` or `"l1"`.
    pub interaction_norm: String,
    pub hopping: bool,
    // ladder
    pub l0: u32,
    pub alpha: f64,
    pub m: f64,
    pub p: f64,
    pub energy_lo: f64,
    pub energy_hi: f64,
    pub k_max: usize,
    pub beta: f64,
    // run
    pub trials: usize,
    pub seed: u64,
    /// Worker threads; 0 picks the machine default.
    pub workers: usize,
    pub energy_spacing: Option<f64>,
    pub output: PathBuf,
    // wegner
    pub wegner_l1: u32,
    pub wegner_l2: u32,
    pub wegner_separation: Option<i64>,
    pub s_min: f64,
    pub s_max: f64,
    pub s_points: usize,
    pub s_grid: Option<Vec<f64>>,
    // ds
    pub ds_k: usize,
    pub ds_n: Option<usize>,
    pub ds_separation: Option<i64>,
    pub g_values: Vec<f64>,
    pub ds_events: bool,
    // trace
    pub trace_radii: Vec<u32>,
    pub trace_kappa: f64,
    pub trace_c: f64,
    pub trace_b_prime: f64,
    // decay and center counts
    pub decay_radius: u32,
    pub decay_resamples: usize,
    // dynamics
    pub dynamics_radius: u32,
    pub dynamics_s: f64,
    /// `"indicator"` (of `[energy_lo, energy_hi]`) or `"zero"`.
    pub dynamics_eta: String,
    pub dynamics_k_radius: u32,
    pub boundary_tolerance: f64,
    // self-tests
    pub descent_instances: usize,
    pub gri_geometries: usize,
}

impl Default for FlatConfig {
    fn default() -> Self {
        Self {
            particles: 2,
            dim: 1,
            g: 1.0,
            distribution: "gaussian".into(),
            field_mean: 0.0,
            field_variance: 1.0,
            field_lo: 0.0,
            field_hi: 1.0,
            interaction: vec![1.0],
            interaction_norm: "max".into(),
            hopping: true,
            l0: 8,
            alpha: 1.5,
            m: 0.1,
            p: 1.0,
            energy_lo: -1.0,
            energy_hi: 1.0,
            k_max: 2,
            beta: 0.5,
            trials: 1000,
            seed: 0,
            workers: 0,
            energy_spacing: None,
            output: PathBuf::from("out"),
            wegner_l1: 2,
            wegner_l2: 2,
            wegner_separation: None,
            s_min: 1e-3,
            s_max: 1.0,
            s_points: 20,
            s_grid: None,
            ds_k: 0,
            ds_n: None,
            ds_separation: None,
            g_values: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            ds_events: false,
            trace_radii: vec![1, 2, 3, 4, 5, 6],
            trace_kappa: 1.0,
            trace_c: 1.0,
            trace_b_prime: 1.0,
            decay_radius: 12,
            decay_resamples: 2000,
            dynamics_radius: 12,
            dynamics_s: 2.0,
            dynamics_eta: "indicator".into(),
            dynamics_k_radius: 0,
            boundary_tolerance: 1e-6,
            descent_instances: 1000,
            gri_geometries: 200,
        }
    }
}

fn parse_override_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

impl FlatConfig {
    /// Parse a document and apply `key=value` overrides in order.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            table.insert(key.trim().to_string(), parse_override_value(value.trim()));
        }
        if let Some((key, value)) = table.iter().find(|(_, v)| v.is_table()) {
            return Err(Error::Config(format!(
                "key {key:?} holds a table {value}; the format is flat"
            )));
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn build(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::from_flat(self.clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WegnerParams {
    pub l1: u32,
    pub l2: u32,
    pub separation: Option<i64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DsParams {
    pub k: usize,
    pub n: usize,
    pub separation: Option<i64>,
    pub g_values: Vec<f64>,
    pub events: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceParams {
    pub radii: Vec<u32>,
    pub kappa: f64,
    pub c: f64,
    pub b_prime: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsParams {
    pub radius: u32,
    pub s: f64,
    pub eta: Eta,
    pub k_radius: u32,
    pub boundary_tolerance: f64,
}

/// Validated configuration handed to the experiments.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub spec: ModelSpec,
    pub ladder: ScaleLadder,
    pub trials: usize,
    pub master_seed: u64,
    pub workers: usize,
    pub energy_spacing: Option<f64>,
    pub s_grid: Vec<f64>,
    pub output: PathBuf,
    pub wegner: WegnerParams,
    pub ds: DsParams,
    pub trace: TraceParams,
    pub decay_radius: u32,
    pub decay_resamples: usize,
    pub dynamics: DynamicsParams,
    pub descent_instances: usize,
    pub gri_geometries: usize,
    flat: FlatConfig,
}

/// `points` values spaced evenly in `ln s` over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) || points == 0 {
        return Err(Error::Config(format!(
            "log grid needs 0 < lo <= hi and points > 0, got [{lo}, {hi}] x {points}"
        )));
    }
    if points == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..points)
        .map(|i| {
            if i == 0 {
                lo
            } else if i + 1 == points {
                hi
            } else {
                (a + (b - a) * i as f64 / (points - 1) as f64).exp()
            }
        })
        .collect())
}

impl ExperimentConfig {
    pub fn from_flat(flat: FlatConfig) -> Result<Self> {
        let f = &flat;
        let cfg = |m: String| Error::Config(m);
        let distribution = match f.distribution.as_str() {
            "gaussian" => FieldDistribution::Gaussian {
                mean: f.field_mean,
                variance: f.field_variance,
            },
            "uniform" => FieldDistribution::Uniform {
                lo: f.field_lo,
                hi: f.field_hi,
            },
            other => return Err(cfg(format!("unknown distribution {other:?}"))),
        };
        let norm = match f.interaction_norm.as_str() {
            "max" => InteractionNorm::Max,
            "l1" => InteractionNorm::L1,
            other => return Err(cfg(format!("unknown interaction_norm {other:?}"))),
        };
        let mut spec = ModelSpec::new(f.particles, f.dim, f.g, distribution)
            .with_interaction(f.interaction.clone());
        spec.interaction_norm = norm;
        if !f.hopping {
            spec = spec.without_hopping();
        }
        spec.validate().map_err(|e| cfg(e.to_string()))?;

        let mut ladder = ScaleLadder::new(f.l0, f.m, f.p, Interval::new(f.energy_lo, f.energy_hi));
        ladder.alpha = f.alpha;
        ladder.k_max = f.k_max;
        ladder.beta = f.beta;
        ladder.validate().map_err(|e| cfg(e.to_string()))?;
        if f.energy_lo > f.energy_hi {
            return Err(cfg(format!(
                "energy_lo {} exceeds energy_hi {}",
                f.energy_lo, f.energy_hi
            )));
        }

        if f.trials == 0 {
            return Err(cfg("trials must be at least 1".into()));
        }
        if let Some(h) = f.energy_spacing {
            if !(h > 0.0 && h.is_finite()) {
                return Err(cfg(format!("energy_spacing must be positive, got {h}")));
            }
        }
        let s_grid = match &f.s_grid {
            Some(grid) => {
                if grid.is_empty() || grid.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
                    return Err(cfg("s_grid needs finite non-negative values".into()));
                }
                grid.clone()
            }
            None => log_grid(f.s_min, f.s_max, f.s_points)?,
        };
        let ds_n = f.ds_n.unwrap_or(f.particles);
        if ds_n == 0 || ds_n > f.particles {
            return Err(cfg(format!(
                "ds_n must lie in 1..={}, got {ds_n}",
                f.particles
            )));
        }
        if f.ds_k > f.k_max {
            return Err(cfg(format!("ds_k {} exceeds k_max {}", f.ds_k, f.k_max)));
        }
        if f.g_values.is_empty() || f.g_values.iter().any(|g| !g.is_finite()) {
            return Err(cfg("g_values needs finite entries".into()));
        }
        if f.trace_radii.is_empty() {
            return Err(cfg("trace_radii must not be empty".into()));
        }
        if !(f.trace_kappa > 0.0 && f.trace_c > 0.0 && f.trace_b_prime >= 0.0) {
            return Err(cfg(
                "trace_kappa and trace_c must be positive, trace_b_prime non-negative".into(),
            ));
        }
        if f.decay_resamples == 0 {
            return Err(cfg("decay_resamples must be at least 1".into()));
        }
        if !(f.dynamics_s >= 0.0 && f.dynamics_s.is_finite()) {
            return Err(cfg(format!(
                "dynamics_s must be finite and >= 0, got {}",
                f.dynamics_s
            )));
        }
        let eta = match f.dynamics_eta.as_str() {
            "indicator" => Eta::indicator(Interval::new(f.energy_lo, f.energy_hi)),
            "zero" => Eta::Zero,
            other => {
                return Err(cfg(format!(
                    "dynamics_eta must be \"indicator\" or \"zero\", got {other:?}"
                )))
            }
        };
        if f.dynamics_k_radius >= f.dynamics_radius {
            return Err(cfg(
                "dynamics_k_radius must be smaller than dynamics_radius".into(),
            ));
        }
        if !(f.boundary_tolerance > 0.0) {
            return Err(cfg("boundary_tolerance must be positive".into()));
        }
        Ok(Self {
            spec,
            ladder,
            trials: f.trials,
            master_seed: f.seed,
            workers: f.workers,
            energy_spacing: f.energy_spacing,
            s_grid,
            output: f.output.clone(),
            wegner: WegnerParams {
                l1: f.wegner_l1,
                l2: f.wegner_l2,
                separation: f.wegner_separation,
            },
            ds: DsParams {
                k: f.ds_k,
                n: ds_n,
                separation: f.ds_separation,
                g_values: f.g_values.clone(),
                events: f.ds_events,
            },
            trace: TraceParams {
                radii: f.trace_radii.clone(),
                kappa: f.trace_kappa,
                c: f.trace_c,
                b_prime: f.trace_b_prime,
            },
            decay_radius: f.decay_radius,
            decay_resamples: f.decay_resamples,
            dynamics: DynamicsParams {
                radius: f.dynamics_radius,
                s: f.dynamics_s,
                eta,
                k_radius: f.dynamics_k_radius,
                boundary_tolerance: f.boundary_tolerance,
            },
            descent_instances: f.descent_instances,
            gri_geometries: f.gri_geometries,
            flat,
        })
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        FlatConfig::parse(text, overrides)?.build()
    }

    pub fn flat(&self) -> &FlatConfig {
        &self.flat
    }

    /// Non-fatal findings, e.g. a ladder exponent below the admissible range.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let (n, d) = (self.spec.particles, self.spec.dim);
        let s = self.dynamics.s;
        if !self.ladder.p_admissible(n, d, s) {
            out.push(format!(
                "p = {} is below the admissibility threshold {} for N={n}, d={d}, s={s}",
                self.ladder.p,
                self.ladder.p_threshold(n, d, s)
            ));
        }
        out
    }

    /// The same configuration with the disorder strength replaced.
    pub fn with_g(&self, g: f64) -> Self {
        let mut flat = self.flat.clone();
        flat.g = g;
        let mut out = self.clone();
        out.spec.g = g;
        out.flat = flat;
        out
    }
}
