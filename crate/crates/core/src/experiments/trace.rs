use serde::{Deserialize, Serialize};

use super::{frequency_row, lines, run_trials, Artifacts};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::field::{cube_sites, sample_field};
use crate::hamiltonian::assemble;
use crate::io::EmpiricalCurve;
use crate::lattice::{Configuration, Cube};
use crate::spectral::{eigenvalues, projection_trace};
use crate::stats::{loglog_fit, mean, LinearFit};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceTrial {
    pub radius: u32,
    pub trial: usize,
    pub seed: u64,
    pub trace: usize,
    pub dimension: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceOutcome {
    /// Exceedance frequency of `tr P_I > C L^{κNd}` against `L^{−B'}`.
    pub curve: EmpiricalCurve,
    pub mean_traces: Vec<f64>,
    /// `ln(mean trace)` against `ln(2L+1)`; the slope measures the growth
    /// exponent in the side length.
    pub growth: Option<LinearFit>,
    pub trials: Vec<TraceTrial>,
}

/// Trace of the spectral projector onto `I` for cubes about the origin.
pub fn trace_growth_experiment(cfg: &ExperimentConfig, kappa: f64, c: f64) -> Result<TraceOutcome> {
    let spec = &cfg.spec;
    let nd = (spec.particles * spec.dim) as f64;
    let interval = cfg.ladder.interval;
    let mut curve = EmpiricalCurve::default();
    let mut mean_traces = Vec::new();
    let mut all = Vec::new();
    for &radius in &cfg.trace.radii {
        let cube = Cube::new(Configuration::origin(spec.particles, spec.dim), radius);
        let sites = cube_sites(&cube);
        let trials = run_trials(cfg.workers, cfg.master_seed, cfg.trials, |trial, seed| {
            let field = sample_field(&sites, &spec.distribution, seed)?;
            let eigs = eigenvalues(&assemble(&cube, &field, spec)?)?;
            Ok(TraceTrial {
                radius,
                trial,
                seed,
                trace: projection_trace(&eigs, &interval),
                dimension: cube.len(),
            })
        })?;
        let threshold = c * f64::from(radius).powf(kappa * nd);
        let hits = trials.iter().filter(|t| t.trace as f64 > threshold).count() as u64;
        let (est, lo, hi) = frequency_row(hits, trials.len() as u64)?;
        let bound = f64::from(radius).powf(-cfg.trace.b_prime).min(1.0);
        curve.push(f64::from(radius), est, lo, hi, bound);
        mean_traces.push(mean(
            &trials.iter().map(|t| t.trace as f64).collect::<Vec<_>>(),
        ));
        all.extend(trials);
    }
    let sides: Vec<f64> = cfg
        .trace
        .radii
        .iter()
        .map(|&r| f64::from(2 * r + 1))
        .collect();
    let growth = if mean_traces.iter().all(|&t| t > 0.0) {
        loglog_fit(&sides, &mean_traces).ok()
    } else {
        None
    };
    Ok(TraceOutcome {
        curve,
        mean_traces,
        growth,
        trials: all,
    })
}

impl Artifacts for TraceOutcome {
    fn experiment(&self) -> &'static str {
        "trace"
    }

    fn curves(&self) -> Vec<(String, &EmpiricalCurve)> {
        vec![("trace".into(), &self.curve)]
    }

    fn trial_lines(&self) -> Result<String> {
        lines(&self.trials)
    }

    fn notes(&self) -> Vec<String> {
        let mut notes = vec![format!("mean traces by radius: {:?}", self.mean_traces)];
        if let Some(fit) = &self.growth {
            notes.push(format!(
                "log-log slope of mean trace against side length: {:.4} (r^2 = {:.4})",
                fit.slope, fit.r_squared
            ));
        }
        notes
    }

    fn failures(&self) -> Vec<String> {
        self.trials
            .iter()
            .filter(|t| t.trace > t.dimension)
            .map(|t| {
                format!(
                    "trial {} radius {}: trace {} exceeds dimension {}",
                    t.trial, t.radius, t.trace, t.dimension
                )
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whole_spectrum_and_empty_window() {
        let cfg = ExperimentConfig::parse(
            "trials = 5\nenergy_lo = -100.0\nenergy_hi = 100.0\ntrace_radii = [1, 2, 3]",
            &[],
        )
        .unwrap();
        let out = trace_growth_experiment(&cfg, 1.0, 1.0).unwrap();
        assert!(out.trials.iter().all(|t| t.trace == t.dimension));
        // With C = 9, C·L^{2} >= (2L+1)^2 for every L >= 1: no exceedance.
        let out = trace_growth_experiment(&cfg, 1.0, 9.0).unwrap();
        assert!(out.curve.estimates.iter().all(|&e| e == 0.0));

        let empty = ExperimentConfig::parse("trials = 3\nenergy_lo = 1.0\nenergy_hi = 0.5", &[]);
        assert!(empty.is_err());
        let point = ExperimentConfig::parse(
            "trials = 3\nenergy_lo = 50.0\nenergy_hi = 50.0\ntrace_radii = [1, 2]",
            &[],
        )
        .unwrap();
        let out = trace_growth_experiment(&point, 1.0, 1.0).unwrap();
        assert!(out.trials.iter().all(|t| t.trace == 0));
        assert!(out.growth.is_none());
    }

    #[test]
    fn bounded_potential_trace_grows_with_volume() {
        let cfg = ExperimentConfig::parse(
            "trials = 4\ndistribution = \"uniform\"\nfield_lo = 0.0\nfield_hi = 1.0\nenergy_lo = -1.0\nenergy_hi = 1.0\ntrace_radii = [2, 3, 4, 6]",
            &[],
        )
        .unwrap();
        let out = trace_growth_experiment(&cfg, 1.0, 1.0).unwrap();
        let fit = out.growth.unwrap();
        assert!((fit.slope - 2.0).abs() < 0.4, "{fit:?}");
    }
}
