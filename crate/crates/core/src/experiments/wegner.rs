use serde::{Deserialize, Serialize};

use super::{diagonal_pair, frequency_row, lines, run_trials, Artifacts};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::field::{cubes_sites, sample_field};
use crate::hamiltonian::assemble;
use crate::io::EmpiricalCurve;
use crate::lattice::sym_dist;
use crate::spectral::{eigenvalues, spectral_distance};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WegnerTrial {
    pub trial: usize,
    pub seed: u64,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WegnerOutcome {
    pub curve: EmpiricalCurve,
    pub trials: Vec<WegnerTrial>,
    pub sizes: (usize, usize),
    pub separation: i64,
    /// Seeds of trials counted at an abscissa where dominance fails.
    pub offending_seeds: Vec<u64>,
}

impl WegnerOutcome {
    pub fn dominated(&self) -> bool {
        self.curve.dominance_failures().is_empty()
    }
}

/// Frequency of `dist(σ', σ'') ≤ s` for two cubes of radii `l1`, `l2`
/// centered at `d_S`-distance `separation`, against `|C'||C''| ν_L(2s)`.
pub fn wegner_experiment(
    cfg: &ExperimentConfig,
    l1: u32,
    l2: u32,
    separation: Option<i64>,
) -> Result<WegnerOutcome> {
    let spec = &cfg.spec;
    let (n, d) = (spec.particles, spec.dim);
    let l = l1.max(l2);
    let needed = 2 * n as i64 * l as i64;
    let separation = separation.unwrap_or(needed + 1);
    let (a, _) = diagonal_pair(n, d, l1, 0);
    let (_, b) = diagonal_pair(n, d, l2, separation);
    if sym_dist(a.center(), b.center())? <= needed {
        return Err(Error::geometry(format!(
            "centers at symmetrized distance {separation} are not more than 2NL = {needed} apart"
        )));
    }
    let modulus = spec.distribution.mean_modulus(d, spec.g).ok_or_else(|| {
        Error::invalid("the two-volume bound needs a closed-form continuity modulus")
    })?;
    let sites = cubes_sites(&[a.clone(), b.clone()]);
    let trials = run_trials(cfg.workers, cfg.master_seed, cfg.trials, |trial, seed| {
        let field = sample_field(&sites, &spec.distribution, seed)?;
        let ea = eigenvalues(&assemble(&a, &field, spec)?)?;
        let eb = eigenvalues(&assemble(&b, &field, spec)?)?;
        Ok(WegnerTrial {
            trial,
            seed,
            distance: spectral_distance(&ea, &eb)?,
        })
    })?;

    let sizes = (a.len(), b.len());
    let volume = (sizes.0 * sizes.1) as f64;
    let mut sorted: Vec<f64> = trials.iter().map(|t| t.distance).collect();
    sorted.sort_by(f64::total_cmp);
    let mut curve = EmpiricalCurve::default();
    let mut worst_s: Option<f64> = None;
    for &s in &cfg.s_grid {
        let hits = sorted.partition_point(|&x| x <= s) as u64;
        let (est, lo, hi) = frequency_row(hits, trials.len() as u64)?;
        let bound = volume * modulus.eval(l, 2.0 * s);
        if !(hi <= bound) {
            worst_s = Some(worst_s.map_or(s, |w: f64| w.max(s)));
        }
        curve.push(s, est, lo, hi, bound);
    }
    let offending_seeds = match worst_s {
        Some(s) => trials
            .iter()
            .filter(|t| t.distance <= s)
            .map(|t| t.seed)
            .collect(),
        None => Vec::new(),
    };
    Ok(WegnerOutcome {
        curve,
        trials,
        sizes,
        separation,
        offending_seeds,
    })
}

impl Artifacts for WegnerOutcome {
    fn experiment(&self) -> &'static str {
        "wegner"
    }

    fn curves(&self) -> Vec<(String, &EmpiricalCurve)> {
        vec![("wegner".into(), &self.curve)]
    }

    fn trial_lines(&self) -> Result<String> {
        lines(&self.trials)
    }

    fn notes(&self) -> Vec<String> {
        vec![format!(
            "cube sizes {} and {}, centers at symmetrized distance {}",
            self.sizes.0, self.sizes.1, self.separation
        )]
    }

    fn failures(&self) -> Vec<String> {
        let rows = self.curve.dominance_failures();
        if rows.is_empty() {
            return Vec::new();
        }
        let s: Vec<f64> = rows.iter().map(|&i| self.curve.abscissae[i]).collect();
        vec![format!(
            "upper confidence limit exceeds the bound at s = {s:?}; offending seeds {:?}",
            self.offending_seeds
        )]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(extra: &str) -> ExperimentConfig {
        ExperimentConfig::parse(&format!("trials = 200\nseed = 4\n{extra}"), &[]).unwrap()
    }

    #[test]
    fn zero_and_huge_s() {
        let c = cfg("s_grid = [0.0, 100.0]");
        let out = wegner_experiment(&c, 2, 2, None).unwrap();
        assert_eq!(out.curve.estimates, vec![0.0, 1.0]);
        assert_eq!(out.curve.bound_values[0], 0.0);
        assert!(out.curve.bound_values[1] >= 1.0);
        assert_eq!(out.sizes, (25, 25));
        assert_eq!(out.separation, 9);
        out.curve.validate().unwrap();
    }

    #[test]
    fn separation_hypothesis_is_enforced() {
        let c = cfg("");
        assert!(matches!(
            wegner_experiment(&c, 2, 2, Some(8)),
            Err(Error::Geometry(_))
        ));
        let u = cfg("distribution = \"uniform\"");
        assert!(wegner_experiment(&u, 1, 1, None).is_err());
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let mut c = cfg("");
        c.trials = 40;
        c.workers = 1;
        let one = wegner_experiment(&c, 1, 2, None).unwrap();
        c.workers = 3;
        let three = wegner_experiment(&c, 1, 2, None).unwrap();
        assert_eq!(one, three);
    }
}
