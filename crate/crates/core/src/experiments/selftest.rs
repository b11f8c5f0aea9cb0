use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{lines, run_trials, Artifacts};
use crate::descent::SelftestSummary;
use crate::error::Result;
use crate::field::{cube_sites, decompose, sample_field, FieldDistribution, Site};
use crate::hamiltonian::{assemble, ModelSpec};
use crate::lattice::{Configuration, Cube};
use crate::rng::{derive_seed, rng_from_seed, trial_seed};
use crate::spectral::{
    eigendecompose, eigenvalues, gri_eigenfunction_residual, gri_residual_with, resolvent_direct,
};
use crate::stats::{correlation, mean, variance};

pub const GRI_TOLERANCE: f64 = 1e-8;
pub const FREE_PATH_TOLERANCE: f64 = 1e-10;
pub const INVERSE_TOLERANCE: f64 = 1e-8;

/// Energies closer than this to either spectrum are redrawn.
const ENERGY_MARGIN: f64 = 1e-3;

/// `(N, d, largest outer radius)` for the random geometries.
const SHAPES: [(usize, usize, u32); 5] = [(1, 1, 8), (1, 2, 5), (2, 1, 5), (2, 2, 2), (3, 1, 2)];

/// Largest free-path length checked against `2cos(πk/(n+1))`.
const FREE_PATH_MAX_RADIUS: u32 = 12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GriCase {
    pub index: usize,
    pub seed: u64,
    pub particles: usize,
    pub dim: usize,
    pub outer: Cube,
    pub inner: Cube,
    pub x: Vec<i64>,
    pub y: Vec<i64>,
    pub energy: f64,
    pub resolvent_residual: f64,
    /// `None` when the chosen eigenvalue is too close to the inner spectrum.
    pub eigenfunction_residual: Option<f64>,
    pub inverse_defect: f64,
}

impl GriCase {
    pub fn passed(&self) -> bool {
        self.resolvent_residual < GRI_TOLERANCE
            && self
                .eigenfunction_residual
                .is_none_or(|r| r < GRI_TOLERANCE)
            && self.inverse_defect < INVERSE_TOLERANCE
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GriSummary {
    pub cases: Vec<GriCase>,
    pub max_resolvent_residual: f64,
    pub max_eigenfunction_residual: f64,
    pub eigenfunction_skipped: usize,
    pub max_inverse_defect: f64,
    pub max_free_path_defect: f64,
}

impl GriSummary {
    pub fn passed(&self) -> bool {
        self.cases.iter().all(GriCase::passed) && self.max_free_path_defect < FREE_PATH_TOLERANCE
    }
}

fn random_point<R: Rng>(rng: &mut R, cube: &Cube) -> Vec<i64> {
    let mut x = vec![0i64; cube.rank()];
    cube.coords_at(rng.random_range(0..cube.len()), &mut x);
    x
}

fn gri_case(index: usize, seed: u64) -> Result<GriCase> {
    let mut rng = rng_from_seed(seed);
    let (particles, dim, cap) = SHAPES[rng.random_range(0..SHAPES.len())];
    let rank = particles * dim;
    let g = rng.random_range(0.5..4.0);
    let interaction: Vec<f64> = (0..rng.random_range(0..3))
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let spec = ModelSpec::new(particles, dim, g, FieldDistribution::standard_gaussian())
        .with_interaction(interaction);

    let outer_radius = rng.random_range(1..=cap);
    let center: Vec<i64> = (0..rank).map(|_| rng.random_range(-3..=3)).collect();
    let outer = Cube::new(
        Configuration::new(center.clone(), particles, dim)?,
        outer_radius,
    );
    let inner_radius = rng.random_range(0..outer_radius);
    let slack = i64::from(outer_radius - inner_radius - 1);
    let inner_center: Vec<i64> = center
        .iter()
        .map(|c| c + rng.random_range(-slack..=slack))
        .collect();
    let inner = Cube::new(
        Configuration::new(inner_center, particles, dim)?,
        inner_radius,
    );

    let x = random_point(&mut rng, &inner);
    let y = loop {
        let y = random_point(&mut rng, &outer);
        if !inner.contains(&y) {
            break y;
        }
    };

    let field = sample_field(
        &cube_sites(&outer),
        &spec.distribution,
        derive_seed(seed, 1),
    )?;
    let op = assemble(&outer, &field, &spec)?;
    let big = eigendecompose(&op)?;
    let small = eigendecompose(&op.restrict(&inner)?)?;
    let span = 2.0 * rank as f64 + 4.0 * g + 2.0;
    let energy = loop {
        let e = rng.random_range(-span..span);
        if big.distance_to(e) > ENERGY_MARGIN && small.distance_to(e) > ENERGY_MARGIN {
            break e;
        }
    };
    let resolvent_residual = gri_residual_with(&big, &small, energy, &x, &y)?;

    let k = rng.random_range(0..big.len());
    let eigenfunction_residual = if small.distance_to(big.eigenvalues()[k]) > ENERGY_MARGIN {
        Some(gri_eigenfunction_residual(&big, &small, k, &x)?)
    } else {
        None
    };

    let all: Vec<usize> = (0..big.len()).collect();
    let spectral = big.green_block(energy, &all, &all)?;
    let direct = resolvent_direct(&op, energy)?;
    let inverse_defect = (spectral - direct).amax();

    Ok(GriCase {
        index,
        seed,
        particles,
        dim,
        outer,
        inner,
        x,
        y,
        energy,
        resolvent_residual,
        eigenfunction_residual,
        inverse_defect,
    })
}

/// Largest deviation of the free single-particle path spectrum from
/// `2cos(πk/(n+1))` over path lengths `n = 1, 3, …, 2·12+1`.
pub fn free_path_defect() -> Result<f64> {
    let spec = ModelSpec::new(1, 1, 0.0, FieldDistribution::standard_gaussian());
    let mut worst = 0.0f64;
    for radius in 0..=FREE_PATH_MAX_RADIUS {
        let cube = Cube::new(Configuration::point(vec![0]), radius);
        let field = sample_field(&cube_sites(&cube), &spec.distribution, 0)?;
        let eigs = eigenvalues(&assemble(&cube, &field, &spec)?)?;
        let n = cube.len();
        let mut exact: Vec<f64> = (1..=n)
            .map(|k| 2.0 * (std::f64::consts::PI * k as f64 / (n + 1) as f64).cos())
            .collect();
        exact.sort_by(f64::total_cmp);
        for (a, b) in eigs.iter().zip(&exact) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

/// Exact-identity suite on `geometries` random valid geometries.
pub fn gri_selftest(master_seed: u64, geometries: usize, workers: usize) -> Result<GriSummary> {
    let cases = run_trials(workers, master_seed, geometries, gri_case)?;
    let fold = |f: &dyn Fn(&GriCase) -> f64| cases.iter().map(f).fold(0.0, f64::max);
    Ok(GriSummary {
        max_resolvent_residual: fold(&|c| c.resolvent_residual),
        max_eigenfunction_residual: fold(&|c| c.eigenfunction_residual.unwrap_or(0.0)),
        eigenfunction_skipped: cases
            .iter()
            .filter(|c| c.eigenfunction_residual.is_none())
            .count(),
        max_inverse_defect: fold(&|c| c.inverse_defect),
        max_free_path_defect: free_path_defect()?,
        cases,
    })
}

impl Artifacts for GriSummary {
    fn experiment(&self) -> &'static str {
        "gri-selftest"
    }

    fn trial_lines(&self) -> Result<String> {
        lines(&self.cases)
    }

    fn notes(&self) -> Vec<String> {
        vec![format!(
            "{} geometries: max resolvent residual {:e}, max eigenfunction residual {:e} ({} skipped), max inverse defect {:e}, free path defect {:e}",
            self.cases.len(),
            self.max_resolvent_residual,
            self.max_eigenfunction_residual,
            self.eigenfunction_skipped,
            self.max_inverse_defect,
            self.max_free_path_defect
        )]
    }

    fn failures(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .cases
            .iter()
            .filter(|c| !c.passed())
            .map(|c| format!("geometry {} (seed {}) exceeds tolerance", c.index, c.seed))
            .collect();
        if self.max_free_path_defect >= FREE_PATH_TOLERANCE {
            out.push(format!(
                "free path spectrum off by {:e}",
                self.max_free_path_defect
            ));
        }
        out
    }
}

impl Artifacts for SelftestSummary {
    fn experiment(&self) -> &'static str {
        "descent-selftest"
    }

    fn trial_lines(&self) -> Result<String> {
        lines(&self.counterexamples)
    }

    fn notes(&self) -> Vec<String> {
        vec![format!(
            "{} instances: bound failures {}, step-count failures {}, recursion failures {}, min log slack {:?}",
            self.instances, self.bound_failures, self.step_failures, self.recursion_failures, self.min_log_slack
        )]
    }

    fn failures(&self) -> Vec<String> {
        self.counterexamples
            .iter()
            .map(|c| format!("instance seed {}: {}", c.instance.seed, c.reason))
            .collect()
    }
}

/// Sample statistics of the decomposition `V = ξ_Q + η` for one set `Q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFluctuationRow {
    pub size: usize,
    pub xi_variance: f64,
    /// `Var V / |Q|`.
    pub expected_variance: f64,
    pub relative_error: f64,
    /// `corr(ξ_Q, η_x)` at the sampled sites.
    pub correlations: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFluctuationSummary {
    pub draws: usize,
    pub rows: Vec<MeanFluctuationRow>,
    /// `4/√draws`.
    pub correlation_threshold: f64,
}

impl MeanFluctuationSummary {
    pub fn passed(&self, variance_tolerance: f64) -> bool {
        self.rows.iter().all(|r| {
            r.relative_error < variance_tolerance
                && r.correlations
                    .iter()
                    .all(|c| c.abs() < self.correlation_threshold)
        })
    }
}

/// Empirical law of the sample mean `ξ_Q` over segments `Q = {0, …, |Q|−1}`
/// and its correlation with the fluctuations at up to `sites` random points.
pub fn mean_fluctuation_check(
    distribution: &FieldDistribution,
    sizes: &[usize],
    draws: usize,
    sites: usize,
    seed: u64,
) -> Result<MeanFluctuationSummary> {
    let var = match *distribution {
        FieldDistribution::Gaussian { variance, .. } => variance,
        FieldDistribution::Uniform { lo, hi } => (hi - lo) * (hi - lo) / 12.0,
    };
    let mut rows = Vec::new();
    for &size in sizes {
        let q: Vec<Site> = (0..size as i64).map(|x| vec![x]).collect();
        let mut pick_rng = rng_from_seed(derive_seed(seed, size as u64));
        let picked = sample(&mut pick_rng, size, sites.min(size)).into_vec();
        let mut xis = Vec::with_capacity(draws);
        let mut etas = vec![Vec::with_capacity(draws); picked.len()];
        for i in 0..draws {
            let field = sample_field(&q, distribution, trial_seed(seed, i as u64))?;
            let dec = decompose(&field, &q)?;
            xis.push(dec.xi);
            for (col, &p) in etas.iter_mut().zip(&picked) {
                col.push(dec.eta[p]);
            }
        }
        let expected = var / size as f64;
        let xi_variance = variance(&xis);
        rows.push(MeanFluctuationRow {
            size,
            xi_variance,
            expected_variance: expected,
            relative_error: (xi_variance - expected).abs() / expected,
            correlations: etas.iter().map(|e| correlation(&xis, e)).collect(),
        });
        debug_assert!(mean(&xis).is_finite());
    }
    Ok(MeanFluctuationSummary {
        draws,
        rows,
        correlation_threshold: 4.0 / (draws as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_path_matches_cosines() {
        assert!(free_path_defect().unwrap() < FREE_PATH_TOLERANCE);
    }

    #[test]
    fn small_gri_suite_passes_and_is_deterministic() {
        let a = gri_selftest(11, 24, 1).unwrap();
        assert!(a.passed(), "{:?}", a.failures());
        assert!(a
            .cases
            .iter()
            .all(|c| c.outer.contains_cube(&c.inner.grown(1))));
        assert!(a
            .cases
            .iter()
            .all(|c| c.inner.contains(&c.x) && !c.inner.contains(&c.y)));
        let b = gri_selftest(11, 24, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gaussian_mean_has_reduced_variance() {
        let s = mean_fluctuation_check(
            &FieldDistribution::standard_gaussian(),
            &[4, 25],
            4000,
            10,
            2,
        )
        .unwrap();
        assert!(s.passed(0.1), "{s:?}");
        assert_eq!(s.rows[0].correlations.len(), 4);
        assert_eq!(s.rows[1].correlations.len(), 10);
    }
}
