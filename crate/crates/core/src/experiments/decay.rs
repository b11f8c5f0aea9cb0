use serde::{Deserialize, Serialize};

use super::{lines, run_trials, Artifacts, CONFIDENCE};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::field::{cube_sites, sample_field};
use crate::hamiltonian::assemble;
use crate::io::lenient_f64;
use crate::lattice::{max_dist, max_norm, Configuration, Cube};
use crate::rng::derive_seed;
use crate::spectral::eigendecompose;
use crate::stats::{bootstrap_median_ci, linear_fit, median, ConfidenceInterval};

/// Envelope values below this fraction of the peak are numerical noise and
/// end the fitted tail.
pub const DECAY_FLOOR: f64 = 1e-12;

/// Relative tolerance for ties between maximizers of `|Ψ|`.
const TIE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayRecord {
    pub trial: usize,
    pub seed: u64,
    pub index: usize,
    pub energy: f64,
    pub center: Vec<i64>,
    /// Fitted decay rate; `+∞` when the eigenfunction vanishes one step
    /// away from its center.
    #[serde(with = "lenient_f64")]
    pub rate: f64,
    pub max_amplitude: f64,
}

/// Localization center and fitted decay rate of one eigenfunction.
///
/// The center is the maximizer of `|Ψ|` closest to the origin (first in
/// cube order among equals). The rate is minus the least-squares slope of
/// `ln max_{‖x−c‖=r} |Ψ(x)|` against `r`, over radii up to where this
/// envelope first drops below `DECAY_FLOOR` times the peak.
pub fn fit_decay(cube: &Cube, psi: &[f64]) -> (Vec<i64>, f64) {
    let peak = psi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rank = cube.rank();
    let mut x = vec![0i64; rank];
    let mut center: Option<(i64, Vec<i64>)> = None;
    for (i, v) in psi.iter().enumerate() {
        if v.abs() >= peak * (1.0 - TIE) {
            cube.coords_at(i, &mut x);
            let norm = max_norm(&x);
            if center.as_ref().is_none_or(|(n, _)| norm < *n) {
                center = Some((norm, x.clone()));
            }
        }
    }
    let center = center.map(|c| c.1).unwrap_or_else(|| vec![0; rank]);
    let mut envelope = vec![0.0f64; 2 * cube.radius() as usize + 1];
    for (i, v) in psi.iter().enumerate() {
        cube.coords_at(i, &mut x);
        let r = max_dist(&x, &center) as usize;
        envelope[r] = envelope[r].max(v.abs());
    }
    let floor = DECAY_FLOOR * peak;
    let tail: Vec<f64> = envelope
        .iter()
        .copied()
        .take_while(|&e| e >= floor && e > 0.0)
        .collect();
    if tail.len() < 2 {
        return (center, f64::INFINITY);
    }
    let rs: Vec<f64> = (0..tail.len()).map(|r| r as f64).collect();
    let logs: Vec<f64> = tail.iter().map(|e| e.ln()).collect();
    let fit = linear_fit(&rs, &logs).expect("at least two distinct radii");
    (center, -fit.slope)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterCount {
    pub j: usize,
    /// `L_{j+1}`.
    pub radius: u32,
    pub mean_count: f64,
    pub max_count: usize,
    pub dimension: usize,
    /// `L_{j+1}^{ακd}`, the growth shape the counts are compared with.
    pub shape: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayOutcome {
    pub radius: u32,
    pub dimension: usize,
    pub records: Vec<DecayRecord>,
    #[serde(with = "lenient_f64")]
    pub median_rate: f64,
    pub median_ci: Option<ConfidenceInterval>,
    pub center_counts: Vec<CenterCount>,
    /// Trials whose counts decreased with `j`.
    pub non_monotone_trials: Vec<usize>,
}

/// Eigenfunctions with energy in `I` of `H` on `C_R(0)`, one disorder
/// realization per trial.
pub fn decay_experiment(cfg: &ExperimentConfig) -> Result<DecayOutcome> {
    let spec = &cfg.spec;
    let cube = Cube::new(
        Configuration::origin(spec.particles, spec.dim),
        cfg.decay_radius,
    );
    let sites = cube_sites(&cube);
    let interval = cfg.ladder.interval;
    let per_trial = run_trials(cfg.workers, cfg.master_seed, cfg.trials, |trial, seed| {
        let field = sample_field(&sites, &spec.distribution, seed)?;
        let sd = eigendecompose(&assemble(&cube, &field, spec)?)?;
        let vectors = sd.eigenvectors();
        let mut out = Vec::new();
        for (index, &energy) in sd.eigenvalues().iter().enumerate() {
            if !interval.contains(energy) {
                continue;
            }
            let psi: Vec<f64> = vectors.column(index).iter().copied().collect();
            let (center, rate) = fit_decay(&cube, &psi);
            let max_amplitude = psi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            out.push(DecayRecord {
                trial,
                seed,
                index,
                energy,
                center,
                rate,
                max_amplitude,
            });
        }
        Ok(out)
    })?;
    let records: Vec<DecayRecord> = per_trial.into_iter().flatten().collect();
    let rates: Vec<f64> = records.iter().map(|r| r.rate).collect();
    let median_rate = median(&rates).unwrap_or(f64::NAN);
    let median_ci = if rates.is_empty() {
        None
    } else {
        Some(bootstrap_median_ci(
            &rates,
            cfg.decay_resamples,
            CONFIDENCE,
            derive_seed(cfg.master_seed, 0xdeca),
        )?)
    };
    let (center_counts, non_monotone_trials) = center_count_check(cfg, &cube, &records)?;
    Ok(DecayOutcome {
        radius: cfg.decay_radius,
        dimension: cube.len(),
        records,
        median_rate,
        median_ci,
        center_counts,
        non_monotone_trials,
    })
}

/// Count eigenfunction centers inside `C_{L_{j+1}}(0)` for every `j` with
/// `L_{j+1}` on the ladder, per trial. Returns the summaries and the trials
/// whose counts fail to be non-decreasing in `j`.
pub fn center_count_check(
    cfg: &ExperimentConfig,
    cube: &Cube,
    records: &[DecayRecord],
) -> Result<(Vec<CenterCount>, Vec<usize>)> {
    let scales = cfg.ladder.scales()?;
    let kappa = cfg.trace.kappa;
    let d = cfg.spec.dim as f64;
    let mut per_trial = vec![Vec::new(); cfg.trials];
    let mut summaries = Vec::new();
    for (j, &radius) in scales.iter().skip(1).enumerate() {
        let mut counts = vec![0usize; cfg.trials];
        for r in records {
            if max_norm(&r.center) <= i64::from(radius) {
                counts[r.trial] += 1;
            }
        }
        for (t, &c) in counts.iter().enumerate() {
            per_trial[t].push(c);
        }
        summaries.push(CenterCount {
            j,
            radius,
            mean_count: counts.iter().sum::<usize>() as f64 / cfg.trials as f64,
            max_count: counts.iter().copied().max().unwrap_or(0),
            dimension: cube.len(),
            shape: f64::from(radius).powf(cfg.ladder.alpha * kappa * d),
        });
    }
    let bad = per_trial
        .iter()
        .enumerate()
        .filter(|(_, c)| c.windows(2).any(|w| w[1] < w[0]))
        .map(|(t, _)| t)
        .collect();
    Ok((summaries, bad))
}

impl Artifacts for DecayOutcome {
    fn experiment(&self) -> &'static str {
        "decay"
    }

    fn trial_lines(&self) -> Result<String> {
        let mut text = lines(&self.records)?;
        text.push_str(&lines(&self.center_counts)?);
        Ok(text)
    }

    fn notes(&self) -> Vec<String> {
        let ci = match &self.median_ci {
            Some(ci) => format!("[{:?}, {:?}]", ci.lo, ci.hi),
            None => "none".into(),
        };
        vec![format!(
            "cube radius {} (dimension {}), {} eigenfunctions, median rate {:?}, 95% bootstrap interval {ci}",
            self.radius,
            self.dimension,
            self.records.len(),
            self.median_rate
        )]
    }

    fn failures(&self) -> Vec<String> {
        self.non_monotone_trials
            .iter()
            .map(|t| format!("trial {t}: center counts decrease with the scale index"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(l: u32) -> Cube {
        Cube::new(Configuration::point(vec![0]), l)
    }

    #[test]
    fn exponential_profile_is_recovered() {
        let cube = line(10);
        let psi: Vec<f64> = (-10i64..=10)
            .map(|x| (-0.7 * (x - 3).abs() as f64).exp())
            .collect();
        let (center, rate) = fit_decay(&cube, &psi);
        assert_eq!(center, vec![3]);
        assert!((rate - 0.7).abs() < 1e-12);
    }

    #[test]
    fn delta_function_gives_infinite_rate() {
        let cube = line(4);
        let mut psi = vec![0.0; 9];
        psi[6] = -1.0;
        assert_eq!(fit_decay(&cube, &psi), (vec![2], f64::INFINITY));
    }

    #[test]
    fn ties_pick_the_maximizer_nearest_the_origin() {
        let cube = line(5);
        let mut psi = vec![0.1; 11];
        psi[1] = 1.0;
        psi[7] = -1.0;
        assert_eq!(fit_decay(&cube, &psi).0, vec![2]);
    }

    #[test]
    fn suppressed_hopping_gives_deltas() {
        let cfg = ExperimentConfig::parse(
            "trials = 2\nhopping = false\ndecay_radius = 3\ng = 1.0",
            &[],
        )
        .unwrap();
        let out = decay_experiment(&cfg).unwrap();
        assert!(!out.records.is_empty());
        assert!(out.records.iter().all(|r| r.rate == f64::INFINITY));
        assert_eq!(out.median_rate, f64::INFINITY);
    }

    #[test]
    fn whole_spectrum_counts_equal_dimension() {
        let cfg = ExperimentConfig::parse(
            "trials = 2\ndecay_radius = 4\nl0 = 4\nk_max = 3\nenergy_lo = -200.0\nenergy_hi = 200.0",
            &[],
        )
        .unwrap();
        let out = decay_experiment(&cfg).unwrap();
        assert_eq!(out.records.len(), 2 * 81);
        assert!(out.non_monotone_trials.is_empty());
        let last = out.center_counts.last().unwrap();
        assert!(last.radius >= 4);
        assert_eq!(last.max_count, 81);
        assert_eq!(last.mean_count, 81.0);

        let below = ExperimentConfig::parse(
            "trials = 1\ndecay_radius = 3\nenergy_lo = -90.0\nenergy_hi = -80.0",
            &[],
        )
        .unwrap();
        let out = decay_experiment(&below).unwrap();
        assert!(out.records.is_empty());
        assert!(out.center_counts.iter().all(|c| c.max_count == 0));
        assert!(out.median_ci.is_none());
    }

    #[test]
    fn records_round_trip_through_json() {
        let r = DecayRecord {
            trial: 0,
            seed: 1,
            index: 2,
            energy: 0.5,
            center: vec![1, -1],
            rate: f64::INFINITY,
            max_amplitude: 1.0,
        };
        let back: DecayRecord = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
