use serde::{Deserialize, Serialize};

use super::{diagonal_pair, frequency_row, lines, run_trials, Artifacts, CONFIDENCE};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::field::{cubes_sites, sample_field};
use crate::io::EmpiricalCurve;
use crate::lattice::sym_dist;
use crate::msa::{
    classify_interactive, count_k, double_singular_energy, is_tunneling, CubeClass, ScanContext,
};
use crate::spectral::Interval;
use crate::stats::{cochran_armitage, TrendTest};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DsTrial {
    pub g: f64,
    pub trial: usize,
    pub seed: u64,
    /// Smallest grid energy at which both cubes are singular.
    pub energy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DsOutcome {
    pub k: usize,
    pub n: usize,
    pub radius: u32,
    pub separation: i64,
    pub curve: EmpiricalCurve,
    pub trend: TrendTest,
    pub trials: Vec<DsTrial>,
    pub events: Option<EventReport>,
}

impl DsOutcome {
    pub fn hits_at(&self, g: f64) -> usize {
        self.trials
            .iter()
            .filter(|t| t.g == g && t.energy.is_some())
            .count()
    }
}

/// `L^{−p·2^{N−n+1}}`.
pub fn ds_bound(l: u32, p: f64, n: usize, total: usize) -> f64 {
    let exponent = p * 2f64.powi((total - n + 1) as i32);
    f64::from(l).powf(-exponent)
}

/// Whether some `E ∈ I` lies within `delta` (strictly) of both spectra.
pub fn double_resonance(a: &[f64], b: &[f64], delta: f64, interval: &Interval) -> bool {
    if interval.is_empty() {
        return false;
    }
    let mut j0 = 0;
    for &x in a {
        while j0 < b.len() && b[j0] <= x - 2.0 * delta {
            j0 += 1;
        }
        for &y in b[j0..].iter().take_while(|&&y| y < x + 2.0 * delta) {
            let lo = x.max(y) - delta;
            let hi = x.min(y) + delta;
            if lo < interval.hi && hi > interval.lo {
                return true;
            }
        }
    }
    false
}

fn pair_for(
    cfg: &ExperimentConfig,
    k: usize,
    n: usize,
    separation: Option<i64>,
) -> Result<(crate::lattice::Cube, crate::lattice::Cube, i64)> {
    let l = cfg.ladder.scale(k)?;
    let needed = 2 * n as i64 * i64::from(l);
    let separation = separation.unwrap_or(needed + i64::from(l));
    let (a, b) = diagonal_pair(n, cfg.spec.dim, l, separation);
    if sym_dist(a.center(), b.center())? <= needed {
        return Err(Error::geometry(format!(
            "cubes of radius {l} need centers more than {needed} apart, got {separation}"
        )));
    }
    Ok((a, b, separation))
}

/// Probability that two distant `n`-particle cubes of radius `L_k` are both
/// singular at a common grid energy, for each configured disorder strength.
pub fn ds_experiment(cfg: &ExperimentConfig, k: usize, n: usize) -> Result<DsOutcome> {
    if n == 0 || n > cfg.spec.particles {
        return Err(Error::invalid(format!(
            "n must lie in 1..={}",
            cfg.spec.particles
        )));
    }
    let (a, b, separation) = pair_for(cfg, k, n, cfg.ds.separation)?;
    let l = a.radius();
    let sites = cubes_sites(&[a.clone(), b.clone()]);
    let mut gs = cfg.ds.g_values.clone();
    gs.sort_by(f64::total_cmp);
    gs.dedup();
    let total = cfg.spec.particles;
    let bound = ds_bound(l, cfg.ladder.p, n, total);
    let mut curve = EmpiricalCurve::default();
    let mut all = Vec::new();
    let mut hits = Vec::new();
    for &g in &gs {
        let spec = cfg.spec.clone();
        let spec = crate::hamiltonian::ModelSpec { g, ..spec };
        let trials = run_trials(cfg.workers, cfg.master_seed, cfg.trials, |trial, seed| {
            let field = sample_field(&sites, &spec.distribution, seed)?;
            let ctx = ScanContext {
                field: &field,
                spec: &spec,
                ladder: &cfg.ladder,
                spacing: cfg.energy_spacing,
            };
            Ok(DsTrial {
                g,
                trial,
                seed,
                energy: double_singular_energy(&a, &b, &ctx)?,
            })
        })?;
        let h = trials.iter().filter(|t| t.energy.is_some()).count() as u64;
        let (est, lo, hi) = frequency_row(h, trials.len() as u64)?;
        curve.push(g, est, lo, hi, bound);
        hits.push(h);
        all.extend(trials);
    }
    let scores: Vec<f64> = (0..gs.len()).map(|i| i as f64).collect();
    let trend = cochran_armitage(&hits, &vec![cfg.trials as u64; gs.len()], &scores)?;
    let events = if cfg.ds.events {
        Some(event_report(cfg, k, n)?)
    } else {
        None
    };
    Ok(DsOutcome {
        k,
        n,
        radius: l,
        separation,
        curve,
        trend,
        trials: all,
        events,
    })
}

impl Artifacts for DsOutcome {
    fn experiment(&self) -> &'static str {
        "ds"
    }

    fn curves(&self) -> Vec<(String, &EmpiricalCurve)> {
        let mut out = vec![("ds".to_string(), &self.curve)];
        if let Some(ev) = &self.events {
            out.push(("ds_events".to_string(), &ev.curve));
        }
        out
    }

    fn trial_lines(&self) -> Result<String> {
        let mut text = lines(&self.trials)?;
        if let Some(ev) = &self.events {
            text.push_str(&lines(&ev.trials)?);
        }
        Ok(text)
    }

    fn notes(&self) -> Vec<String> {
        let mut notes = vec![
            "existence of a singular energy is decided on a finite grid; frequencies are lower bounds of the continuum event".to_string(),
            format!(
                "cubes of radius {} centered at the origin and at symmetrized distance {}; trend z = {:.4}, p(increasing) = {:.4}",
                self.radius, self.separation, self.trend.z, self.trend.p_increasing
            ),
        ];
        if let Some(ev) = &self.events {
            notes.push(format!("event rows: {}", EventReport::ROWS.join(", ")));
            notes.push(format!(
                "{} double-singular trials had none of the listed events",
                ev.unexplained
            ));
        }
        notes
    }

    fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        for i in self.curve.dominance_failures() {
            let g = self.curve.abscissae[i];
            let seeds: Vec<u64> = self
                .trials
                .iter()
                .filter(|t| t.g == g && t.energy.is_some())
                .map(|t| t.seed)
                .collect();
            out.push(format!(
                "g = {g:?}: upper confidence limit {:?} exceeds the bound {:?}; offending seeds {seeds:?}",
                self.curve.ci_upper[i], self.curve.bound_values[i]
            ));
        }
        if !self.trend.non_increasing(CONFIDENCE) {
            out.push(format!(
                "increasing trend in g is significant (p = {:.4})",
                self.trend.p_increasing
            ));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventTrial {
    pub trial: usize,
    pub seed: u64,
    pub double_singular: bool,
    pub double_resonant: bool,
    pub counts_a: (usize, usize),
    pub counts_b: (usize, usize),
    pub tunneling: bool,
}

impl EventTrial {
    fn crowded(counts: (usize, usize)) -> bool {
        counts.1 >= 4 || counts.0 >= 2
    }

    pub fn explained(&self) -> bool {
        self.double_resonant
            || Self::crowded(self.counts_a)
            || Self::crowded(self.counts_b)
            || self.tunneling
    }
}

/// Frequencies of the events through which a double singularity at scale
/// `k` must pass, against the budget `¼ L_k^{−2p}` of each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventReport {
    pub k: usize,
    /// Row `i` is event `ROWS[i]`; the abscissa is the row index.
    pub curve: EmpiricalCurve,
    pub trials: Vec<EventTrial>,
    pub unexplained: usize,
}

impl EventReport {
    pub const ROWS: [&'static str; 5] = [
        "double singular",
        "double resonance",
        "first cube crowded (K_FI >= 4 or K_PI >= 2)",
        "second cube crowded (K_FI >= 4 or K_PI >= 2)",
        "tunneling",
    ];
}

/// Tabulate the induction events for the scale-`k` pair used by
/// [`ds_experiment`]. Needs `k ≥ 1` so that sub-cubes exist.
pub fn event_report(cfg: &ExperimentConfig, k: usize, n: usize) -> Result<EventReport> {
    if k == 0 {
        return Err(Error::Config("the event report needs ds_k >= 1".into()));
    }
    let (a, b, _) = pair_for(cfg, k, n, cfg.ds.separation)?;
    let l = a.radius();
    let delta = (-f64::from(l).powf(cfg.ladder.beta)).exp();
    let sites = cubes_sites(&[a.clone(), b.clone()]);
    let spec = &cfg.spec;
    let r0 = spec.range();
    let trials = run_trials(cfg.workers, cfg.master_seed, cfg.trials, |trial, seed| {
        let field = sample_field(&sites, &spec.distribution, seed)?;
        let ctx = ScanContext {
            field: &field,
            spec,
            ladder: &cfg.ladder,
            spacing: cfg.energy_spacing,
        };
        let pa = ctx.probe(&a)?;
        let pb = ctx.probe(&b)?;
        let counts = |c: &crate::lattice::Cube| -> Result<(usize, usize)> {
            Ok((
                count_k(c, &ctx, k - 1, CubeClass::Partial)?,
                count_k(c, &ctx, k - 1, CubeClass::Full)?,
            ))
        };
        let tunnels = |c: &crate::lattice::Cube| -> Result<bool> {
            if classify_interactive(c, r0).is_partial() {
                crate::msa::is_partially_tunneling(c, &ctx, k)
            } else {
                is_tunneling(c, &ctx, k)
            }
        };
        Ok(EventTrial {
            trial,
            seed,
            double_singular: double_singular_energy(&a, &b, &ctx)?.is_some(),
            double_resonant: double_resonance(
                pa.eigenvalues(),
                pb.eigenvalues(),
                delta,
                &cfg.ladder.interval,
            ),
            counts_a: counts(&a)?,
            counts_b: counts(&b)?,
            tunneling: tunnels(&a)? || tunnels(&b)?,
        })
    })?;
    let budget = 0.25 * f64::from(l).powf(-2.0 * cfg.ladder.p);
    let t = trials.len() as u64;
    let tally = |f: &dyn Fn(&EventTrial) -> bool| trials.iter().filter(|x| f(x)).count() as u64;
    let rows = [
        tally(&|x| x.double_singular),
        tally(&|x| x.double_resonant),
        tally(&|x| EventTrial::crowded(x.counts_a)),
        tally(&|x| EventTrial::crowded(x.counts_b)),
        tally(&|x| x.tunneling),
    ];
    let mut curve = EmpiricalCurve::default();
    for (i, &h) in rows.iter().enumerate() {
        let (est, lo, hi) = frequency_row(h, t)?;
        let row_bound = if i == 0 {
            ds_bound(l, cfg.ladder.p, n, spec.particles)
        } else {
            budget
        };
        curve.push(i as f64, est, lo, hi, row_bound);
    }
    let unexplained = trials
        .iter()
        .filter(|x| x.double_singular && !x.explained())
        .count();
    Ok(EventReport {
        k,
        curve,
        trials,
        unexplained,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_exponents_order_across_particle_counts() {
        for total in 1..=4 {
            for n in 1..total {
                assert!(ds_bound(8, 1.5, n, total) <= ds_bound(8, 1.5, n + 1, total));
            }
        }
        assert_eq!(ds_bound(4, 1.0, 2, 2), 1.0 / 16.0);
    }

    #[test]
    fn double_resonance_cases() {
        let i = Interval::new(-1.0, 1.0);
        assert!(double_resonance(&[0.0], &[0.15], 0.1, &i));
        assert!(!double_resonance(&[0.0], &[0.2], 0.1, &i));
        // The shared window (1.05, 1.1) lies outside I.
        assert!(!double_resonance(&[1.15], &[1.2], 0.1, &i));
        assert!(double_resonance(&[1.05], &[1.08], 0.1, &i));
        assert!(!double_resonance(
            &[0.0],
            &[0.0],
            0.1,
            &Interval::new(1.0, 0.0)
        ));
        assert!(double_resonance(&[-3.0, 0.5, 2.0], &[-1.0, 0.55], 0.05, &i));
    }

    #[test]
    fn strong_disorder_limit_has_no_hits() {
        let cfg = ExperimentConfig::parse("trials = 30\ng_values = [1000.0]\nl0 = 4", &[]).unwrap();
        let out = ds_experiment(&cfg, 0, 2).unwrap();
        assert_eq!(out.hits_at(1000.0), 0);
        assert_eq!(out.separation, 20);
    }

    #[test]
    fn empty_interval_gives_zero() {
        let cfg = ExperimentConfig::parse(
            "trials = 10\ng_values = [0.5]\nl0 = 4\nenergy_lo = 0.3\nenergy_hi = 0.3",
            &[],
        )
        .unwrap();
        let out = ds_experiment(&cfg, 0, 2).unwrap();
        assert_eq!(out.curve.estimates, vec![0.0]);
    }

    #[test]
    fn infeasible_geometry_and_event_scale() {
        let cfg = ExperimentConfig::parse("trials = 2\nds_separation = 16\nl0 = 4", &[]).unwrap();
        assert!(matches!(ds_experiment(&cfg, 0, 2), Err(Error::Geometry(_))));
        let cfg = ExperimentConfig::parse("trials = 2\nl0 = 4", &[]).unwrap();
        assert!(event_report(&cfg, 0, 2).is_err());
    }

    #[test]
    fn single_particle_event_report_runs() {
        let cfg = ExperimentConfig::parse(
            "trials = 3\nparticles = 1\nl0 = 3\nk_max = 2\ng = 0.5\nds_k = 1\nm = 0.2",
            &[],
        )
        .unwrap();
        let rep = event_report(&cfg, 1, 1).unwrap();
        assert_eq!(rep.trials.len(), 3);
        assert_eq!(rep.curve.len(), EventReport::ROWS.len());
        rep.curve.validate().unwrap();
        let singular = rep.trials.iter().filter(|t| t.double_singular).count();
        assert!(rep.unexplained <= singular);
        assert_eq!(rep.curve.estimates[0], singular as f64 / 3.0);
    }
}
