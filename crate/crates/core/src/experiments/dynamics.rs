use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{lines, run_trials, Artifacts, CONFIDENCE};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::field::{cube_sites, sample_field};
use crate::hamiltonian::assemble;
use crate::lattice::{Configuration, Cube};
use crate::spectral::{correlator_column, eigendecompose, Interval};
use crate::stats::{mean, variance, ConfidenceInterval};

/// Relative tolerance of the partition-of-space identity for the annulus
/// decomposition.
pub const PARTITION_TOLERANCE: f64 = 1e-10;

/// Spectral cut-off applied to `H`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Eta {
    Zero,
    Indicator { lo: f64, hi: f64 },
}

impl Eta {
    pub fn indicator(interval: Interval) -> Self {
        Eta::Indicator {
            lo: interval.lo,
            hi: interval.hi,
        }
    }

    pub fn eval(&self, e: f64) -> f64 {
        match *self {
            Eta::Zero => 0.0,
            Eta::Indicator { lo, hi } => f64::from(u8::from(lo <= e && e <= hi)),
        }
    }

    fn support_within(&self, interval: &Interval) -> bool {
        match *self {
            Eta::Zero => true,
            Eta::Indicator { lo, hi } => interval.contains_interval(&Interval::new(lo, hi)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsTrial {
    pub trial: usize,
    pub seed: u64,
    /// `‖X^s η(H) 1_K‖`.
    pub norm: f64,
    /// `‖X^s η(H) 1_K‖²_HS`, which the annuli partition.
    pub hs_squared: f64,
    /// Hilbert–Schmidt² contribution of each sphere `‖x‖ = r`, `r = 0..=R`.
    pub annuli: Vec<f64>,
    /// `‖1_{∂⁻} η(H) 1_K‖_HS`.
    pub boundary_weight: f64,
}

impl DynamicsTrial {
    pub fn partition_defect(&self) -> f64 {
        let sum: f64 = self.annuli.iter().sum();
        (sum - self.hs_squared).abs() / self.hs_squared.max(1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsOutcome {
    pub radius: u32,
    pub k_radius: u32,
    pub s: f64,
    pub eta: Eta,
    pub estimate: f64,
    /// Normal-approximation interval for the mean.
    pub ci: ConfidenceInterval,
    pub annulus_means: Vec<f64>,
    /// Trial mean of the boundary weight; must stay below the tolerance.
    pub mean_boundary_weight: f64,
    pub max_boundary_weight: f64,
    /// Trials whose own boundary weight reaches the tolerance.
    pub flagged_trials: Vec<usize>,
    pub max_partition_defect: f64,
    pub trials: Vec<DynamicsTrial>,
}

/// One realization of `X^s η(H) 1_K` on `cube`, with `K = C_{k_radius}(0)`.
pub fn dynamics_trial(
    cfg: &ExperimentConfig,
    cube: &Cube,
    k: &Cube,
    eta: &Eta,
    s: f64,
    trial: usize,
    seed: u64,
) -> Result<DynamicsTrial> {
    let spec = &cfg.spec;
    let field = sample_field(&cube_sites(cube), &spec.distribution, seed)?;
    let sd = eigendecompose(&assemble(cube, &field, spec)?)?;
    let n = cube.len();
    let mut m = DMatrix::<f64>::zeros(n, k.len());
    let mut boundary_sq = 0.0;
    let boundary = cube.inner_boundary_indices();
    let mut weights = vec![0.0; n];
    let mut rings = vec![0usize; n];
    let mut x = vec![0i64; cube.rank()];
    for (i, (w, ring)) in weights.iter_mut().zip(&mut rings).enumerate() {
        cube.coords_at(i, &mut x);
        let r = crate::lattice::max_norm(&x);
        *ring = r as usize;
        *w = if s == 0.0 { 1.0 } else { (r as f64).powf(s) };
    }
    for (j, y) in k.points().iter().enumerate() {
        let col = correlator_column(&sd, |e| eta.eval(e), y.coords())?;
        boundary_sq += boundary.iter().map(|&b| col[b] * col[b]).sum::<f64>();
        for i in 0..n {
            m[(i, j)] = weights[i] * col[i];
        }
    }
    let mut annuli = vec![0.0; cube.radius() as usize + 1];
    for i in 0..n {
        annuli[rings[i]] += m.row(i).norm_squared();
    }
    let hs_squared = m.norm_squared();
    let norm = if k.len() == 1 {
        m.norm()
    } else {
        m.singular_values().max()
    };
    Ok(DynamicsTrial {
        trial,
        seed,
        norm,
        hs_squared,
        annuli,
        boundary_weight: boundary_sq.sqrt(),
    })
}

/// Monte-Carlo estimate of `E‖X^s η(H) 1_K‖` on `C_R(0)` with
/// `K = C_{k_radius}(0)`, where `(X ψ)(x) = ‖x‖ ψ(x)`.
pub fn dynamics_experiment(
    cfg: &ExperimentConfig,
    radius: u32,
    k_radius: u32,
    eta: &Eta,
    s: f64,
) -> Result<DynamicsOutcome> {
    if !eta.support_within(&cfg.ladder.interval) {
        return Err(Error::invalid(
            "the support of η must lie inside the energy interval I",
        ));
    }
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::invalid(format!(
            "moment exponent s = {s} must be finite and non-negative"
        )));
    }
    if k_radius >= radius {
        return Err(Error::geometry(format!(
            "K = C_{k_radius}(0) must sit strictly inside the simulation cube C_{radius}(0)"
        )));
    }
    let origin = Configuration::origin(cfg.spec.particles, cfg.spec.dim);
    let cube = Cube::new(origin.clone(), radius);
    let k = Cube::new(origin, k_radius);
    let trials = run_trials(cfg.workers, cfg.master_seed, cfg.trials, |trial, seed| {
        dynamics_trial(cfg, &cube, &k, eta, s, trial, seed)
    })?;

    let max_partition_defect = trials
        .iter()
        .map(DynamicsTrial::partition_defect)
        .fold(0.0, f64::max);
    if max_partition_defect > PARTITION_TOLERANCE {
        return Err(Error::invariant(format!(
            "annulus contributions miss the Hilbert-Schmidt norm by {max_partition_defect:e}"
        )));
    }
    let weights: Vec<f64> = trials.iter().map(|t| t.boundary_weight).collect();
    let mean_boundary_weight = mean(&weights);
    let max_boundary_weight = weights.iter().copied().fold(0.0, f64::max);
    let tolerance = cfg.dynamics.boundary_tolerance;
    if !(mean_boundary_weight < tolerance) {
        return Err(Error::BoundaryWeight {
            weight: mean_boundary_weight,
            tolerance,
        });
    }
    let flagged_trials = trials
        .iter()
        .filter(|t| t.boundary_weight >= tolerance)
        .map(|t| t.trial)
        .collect();
    let norms: Vec<f64> = trials.iter().map(|t| t.norm).collect();
    let estimate = mean(&norms);
    let half = if norms.len() > 1 {
        normal_quantile() * (variance(&norms) / norms.len() as f64).sqrt()
    } else {
        f64::INFINITY
    };
    let mut annulus_means = vec![0.0; radius as usize + 1];
    for t in &trials {
        for (a, v) in annulus_means.iter_mut().zip(&t.annuli) {
            *a += v / trials.len() as f64;
        }
    }
    Ok(DynamicsOutcome {
        radius,
        k_radius,
        s,
        eta: *eta,
        estimate,
        ci: ConfidenceInterval {
            lo: estimate - half,
            hi: estimate + half,
            level: CONFIDENCE,
        },
        annulus_means,
        mean_boundary_weight,
        max_boundary_weight,
        flagged_trials,
        max_partition_defect,
        trials,
    })
}

fn normal_quantile() -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().inverse_cdf(0.5 + CONFIDENCE / 2.0)
}

impl Artifacts for DynamicsOutcome {
    fn experiment(&self) -> &'static str {
        "dynamics"
    }

    fn trial_lines(&self) -> Result<String> {
        lines(&self.trials)
    }

    fn notes(&self) -> Vec<String> {
        vec![
            format!(
                "cube radius {}, K radius {}, s = {:?}, eta {:?}: estimate {:?}, 95% interval [{:?}, {:?}]",
                self.radius, self.k_radius, self.s, self.eta, self.estimate, self.ci.lo, self.ci.hi
            ),
            format!("mean Hilbert-Schmidt contribution by sphere radius: {:?}", self.annulus_means),
            format!(
                "boundary weight mean {:e}, largest {:e}, trials at or above tolerance {:?}",
                self.mean_boundary_weight, self.max_boundary_weight, self.flagged_trials
            ),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(extra: &str) -> ExperimentConfig {
        ExperimentConfig::parse(&format!("trials = 6\nseed = 3\ng = 8.0\n{extra}"), &[]).unwrap()
    }

    #[test]
    fn zero_cutoff_gives_zero() {
        let c = cfg("");
        let out = dynamics_experiment(&c, 4, 0, &Eta::Zero, 2.0).unwrap();
        assert_eq!(out.estimate, 0.0);
        assert!(out
            .trials
            .iter()
            .all(|t| t.norm == 0.0 && t.boundary_weight == 0.0));
    }

    #[test]
    fn full_projector_contracts() {
        let c = cfg("energy_lo = -1000.0\nenergy_hi = 1000.0");
        let eta = Eta::indicator(c.ladder.interval);
        let out = dynamics_experiment(&c, 3, 0, &eta, 0.0).unwrap();
        for t in &out.trials {
            assert!(t.norm <= 1.0 + 1e-12);
            assert!((t.norm - 1.0).abs() < 1e-10);
        }
        // s = 0 weights every point by 1, including the origin.
        assert!((out.annulus_means[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn annuli_partition_the_norm() {
        let c = cfg("energy_lo = -1000.0\nenergy_hi = 1000.0\nboundary_tolerance = 10.0");
        let eta = Eta::indicator(Interval::new(-3.0, 3.0));
        let out = dynamics_experiment(&c, 3, 1, &eta, 1.5).unwrap();
        assert!(out.max_partition_defect <= PARTITION_TOLERANCE);
        for t in &out.trials {
            assert!(t.norm * t.norm <= t.hs_squared * (1.0 + 1e-12));
        }
    }

    #[test]
    fn preconditions_are_checked() {
        let c = cfg("");
        let wide = Eta::indicator(Interval::new(-5.0, 5.0));
        assert!(dynamics_experiment(&c, 4, 0, &wide, 1.0).is_err());
        assert!(matches!(
            dynamics_experiment(&c, 2, 2, &Eta::Zero, 1.0),
            Err(Error::Geometry(_))
        ));
        let weak = ExperimentConfig::parse(
            "trials = 2\ng = 0.0\nenergy_lo = -1000.0\nenergy_hi = 1000.0",
            &[],
        )
        .unwrap();
        let eta = Eta::indicator(Interval::new(-1.0, 1.0));
        assert!(matches!(
            dynamics_experiment(&weak, 3, 0, &eta, 2.0),
            Err(Error::BoundaryWeight { .. })
        ));
    }
}
