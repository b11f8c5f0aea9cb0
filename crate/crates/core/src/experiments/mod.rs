//! Monte-Carlo experiments.
//!
//! Every trial draws its own seed from the master seed and its index, so a
//! trial's result does not depend on which worker runs it. Results are
//! gathered in index order and folded sequentially, which makes every
//! output independent of the worker count.

mod decay;
mod ds;
mod dynamics;
mod selftest;
mod trace;
mod wegner;

pub use decay::{
    center_count_check, decay_experiment, fit_decay, CenterCount, DecayOutcome, DecayRecord,
};
pub use ds::{
    double_resonance, ds_bound, ds_experiment, event_report, DsOutcome, DsTrial, EventReport,
    EventTrial,
};
pub use dynamics::{
    dynamics_experiment, dynamics_trial, DynamicsOutcome, DynamicsTrial, Eta, PARTITION_TOLERANCE,
};
pub use selftest::{
    free_path_defect, gri_selftest, mean_fluctuation_check, GriCase, GriSummary,
    MeanFluctuationRow, MeanFluctuationSummary, FREE_PATH_TOLERANCE, GRI_TOLERANCE,
    INVERSE_TOLERANCE,
};
pub use trace::{trace_growth_experiment, TraceOutcome, TraceTrial};
pub use wegner::{wegner_experiment, WegnerOutcome, WegnerTrial};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::io::{to_json_lines, EmpiricalCurve, Metadata};
use crate::lattice::{Configuration, Cube};
use crate::rng::trial_seed;
use crate::stats::clopper_pearson;

/// Confidence level used for every interval the experiments report.
pub const CONFIDENCE: f64 = 0.95;

/// Run `trials` independent tasks on `workers` threads (0 = default) and
/// return their results in index order. The first failing index wins.
pub fn run_trials<T, F>(workers: usize, master_seed: u64, trials: usize, task: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, u64) -> Result<T> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<T>> = pool.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|i| task(i, trial_seed(master_seed, i as u64)))
            .collect()
    });
    results.into_iter().collect()
}

/// Empirical frequency `hits/trials` with its exact interval.
pub fn frequency_row(hits: u64, trials: u64) -> Result<(f64, f64, f64)> {
    let ci = clopper_pearson(hits, trials, CONFIDENCE)?;
    Ok((hits as f64 / trials as f64, ci.lo, ci.hi))
}

/// The origin and the configuration with every coordinate equal to `offset`;
/// for such a pair the symmetrized distance equals `offset`.
pub fn diagonal_pair(particles: usize, dim: usize, radius: u32, offset: i64) -> (Cube, Cube) {
    let a = Cube::new(Configuration::origin(particles, dim), radius);
    let b = Cube::new(
        Configuration::new(vec![offset; particles * dim], particles, dim).expect("shape matches"),
        radius,
    );
    (a, b)
}

/// A named file produced by an experiment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

/// Files making up an experiment's output: metadata header, curve CSVs and
/// per-trial JSON lines.
pub trait Artifacts {
    fn experiment(&self) -> &'static str;

    fn curves(&self) -> Vec<(String, &EmpiricalCurve)> {
        Vec::new()
    }

    fn trial_lines(&self) -> Result<String>;

    fn notes(&self) -> Vec<String> {
        Vec::new()
    }

    /// Human-readable failures of the experiment's built-in checks.
    fn failures(&self) -> Vec<String> {
        Vec::new()
    }

    fn artifacts(&self, cfg: &ExperimentConfig) -> Result<Vec<Artifact>> {
        let name = self.experiment();
        let meta = Metadata::new(name, cfg.flat(), self.notes());
        let mut out = vec![Artifact {
            name: format!("{name}.meta.json"),
            contents: serde_json::to_string_pretty(&meta)? + "\n",
        }];
        for (label, curve) in self.curves() {
            out.push(Artifact {
                name: format!("{label}.csv"),
                contents: curve.to_csv(),
            });
        }
        out.push(Artifact {
            name: format!("{name}.trials.jsonl"),
            contents: self.trial_lines()?,
        });
        Ok(out)
    }
}

pub(crate) fn lines<T: Serialize>(rows: &[T]) -> Result<String> {
    to_json_lines(rows)
}
