//! Random potentials `V : Z^d → R` and the sample-mean/fluctuation split.
//!
//! For a site set `Q`, `ξ_Q = |Q|⁻¹ Σ_{x∈Q} V(x)` and `η_x = V(x) − ξ_Q`.
//! Conditioning on the fluctuations and on the values outside `Q` leaves only
//! `ξ_Q` random; for IID Gaussian fields `ξ_Q` is then `Normal(μ, σ²/|Q|)`
//! independently of the `η_x`, which is what [`resample_mean`] exploits.

use std::collections::{BTreeSet, HashMap};
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Configuration, Cube};
use crate::rng::site_rng;

pub type Site = Vec<i64>;

/// Marginal law of an IID field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FieldDistribution {
    Gaussian { mean: f64, variance: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl FieldDistribution {
    pub fn standard_gaussian() -> Self {
        FieldDistribution::Gaussian {
            mean: 0.0,
            variance: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            FieldDistribution::Gaussian { mean, variance } => {
                if !mean.is_finite() || !(variance > 0.0 && variance.is_finite()) {
                    return Err(Error::invalid(
                        "gaussian field needs finite mean and variance > 0",
                    ));
                }
            }
            FieldDistribution::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::invalid("uniform field needs finite lo < hi"));
                }
            }
        }
        Ok(())
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            FieldDistribution::Gaussian { mean, variance } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + variance.sqrt() * z
            }
            FieldDistribution::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        }
    }

    /// Continuity modulus of the conditional law of `a·ξ_Q`, when one is known
    /// in closed form. Only the Gaussian case ships one.
    pub fn mean_modulus(&self, dim: usize, amplitude: f64) -> Option<ContinuityModulus> {
        match *self {
            FieldDistribution::Gaussian { variance, .. } => Some(ContinuityModulus::GaussianMean {
                variance,
                dim,
                amplitude,
            }),
            FieldDistribution::Uniform { .. } => None,
        }
    }
}

/// A bound `ν_R(t)` on the oscillation of the conditional distribution
/// function of the sample mean over sets of diameter at most `R`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContinuityModulus {
    /// Lipschitz modulus of `a·ξ_Q` for an IID Gaussian field: `|Q| ≤ (R+1)^d`
    /// and the density of `ξ_Q` is at most `|Q|^{1/2} (2πσ²)^{-1/2}`.
    GaussianMean {
        variance: f64,
        dim: usize,
        amplitude: f64,
    },
    /// `C R^A t^b`.
    Holder { constant: f64, a: f64, b: f64 },
    /// `C R^A ln^{-B}(1/t)`.
    LogDecay { constant: f64, a: f64, b: f64 },
}

impl ContinuityModulus {
    /// `ν_R(t)`, capped at 1 since it bounds a difference of probabilities.
    pub fn eval(&self, r: u32, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let r = f64::from(r);
        let raw = match *self {
            ContinuityModulus::GaussianMean {
                variance,
                dim,
                amplitude,
            } => {
                let q_size = (r + 1.0).powi(dim as i32);
                gaussian_mean_density_bound(variance, q_size) * t / amplitude.abs()
            }
            ContinuityModulus::Holder { constant, a, b } => {
                if t >= 1.0 {
                    1.0
                } else {
                    constant * r.max(1.0).powf(a) * t.powf(b)
                }
            }
            ContinuityModulus::LogDecay { constant, a, b } => {
                if t >= 1.0 {
                    1.0
                } else {
                    constant * r.max(1.0).powf(a) * (1.0 / t).ln().powf(-b)
                }
            }
        };
        raw.min(1.0)
    }
}

fn gaussian_mean_density_bound(variance: f64, q_size: f64) -> f64 {
    q_size.sqrt() / (2.0 * PI * variance).sqrt()
}

/// Uniform bound on the density of `ξ_Q` for a Gaussian field:
/// `|Q|^{1/2} (2πσ²)^{-1/2}`.
pub fn xi_density_bound(distribution: &FieldDistribution, q_size: usize) -> Result<f64> {
    if q_size == 0 {
        return Err(Error::invalid("|Q| must be positive"));
    }
    match *distribution {
        FieldDistribution::Gaussian { variance, .. } => {
            Ok(gaussian_mean_density_bound(variance, q_size as f64))
        }
        FieldDistribution::Uniform { .. } => Err(Error::invalid(
            "no closed-form density bound for the sample mean of a uniform field",
        )),
    }
}

/// One realization of the field on a finite set of sites.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FieldSample {
    dim: usize,
    seed: u64,
    distribution: FieldDistribution,
    sites: Vec<Site>,
    values: Vec<f64>,
    #[serde(skip)]
    index: HashMap<Site, usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFieldSample {
    dim: usize,
    seed: u64,
    distribution: FieldDistribution,
    sites: Vec<Site>,
    values: Vec<f64>,
}

impl<'de> Deserialize<'de> for FieldSample {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawFieldSample::deserialize(d)?;
        FieldSample::from_parts(raw.dim, raw.seed, raw.distribution, raw.sites, raw.values)
            .map_err(serde::de::Error::custom)
    }
}

impl FieldSample {
    pub fn from_parts(
        dim: usize,
        seed: u64,
        distribution: FieldDistribution,
        sites: Vec<Site>,
        values: Vec<f64>,
    ) -> Result<Self> {
        distribution.validate()?;
        if dim == 0 {
            return Err(Error::invalid("field dimension must be positive"));
        }
        if sites.len() != values.len() {
            return Err(Error::invalid("sites and values differ in length"));
        }
        let mut index = HashMap::with_capacity(sites.len());
        for (i, s) in sites.iter().enumerate() {
            if s.len() != dim {
                return Err(Error::invalid(format!("site {s:?} has wrong dimension")));
            }
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate site {s:?}")));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("field values must be finite"));
        }
        Ok(Self {
            dim,
            seed,
            distribution,
            sites,
            values,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn distribution(&self) -> &FieldDistribution {
        &self.distribution
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn get(&self, site: &[i64]) -> Option<f64> {
        self.index.get(site).map(|&i| self.values[i])
    }

    pub fn value(&self, site: &[i64]) -> Result<f64> {
        self.get(site)
            .ok_or_else(|| Error::MissingSite(site.to_vec()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// The same field shifted by a constant on every site.
    pub fn shifted(&self, c: f64) -> FieldSample {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v += c);
        out
    }

    /// Replaces values site by site; sites not present are rejected.
    pub fn with_values(&self, updates: &[(Site, f64)]) -> Result<FieldSample> {
        let mut out = self.clone();
        for (s, v) in updates {
            let i = *self
                .index
                .get(s)
                .ok_or_else(|| Error::MissingSite(s.clone()))?;
            out.values[i] = *v;
        }
        Ok(out)
    }
}

/// Draws an IID field over `region`. The value at each site depends only on
/// `(seed, site)`.
pub fn sample_field(
    region: &[Site],
    distribution: &FieldDistribution,
    seed: u64,
) -> Result<FieldSample> {
    distribution.validate()?;
    if region.is_empty() {
        return Err(Error::invalid("field region is empty"));
    }
    let dim = region[0].len();
    let mut seen = BTreeSet::new();
    let mut sites = Vec::with_capacity(region.len());
    let mut values = Vec::with_capacity(region.len());
    for s in region {
        if !seen.insert(s.clone()) {
            continue;
        }
        let mut rng = site_rng(seed, s)?;
        values.push(distribution.draw(&mut rng));
        sites.push(s.clone());
    }
    FieldSample::from_parts(dim, seed, distribution.clone(), sites, values)
}

/// Sites of `Z^d` visited by any particle of any configuration in `cube`,
/// sorted.
pub fn cube_sites(cube: &Cube) -> Vec<Site> {
    cubes_sites(std::slice::from_ref(cube))
}

pub fn cubes_sites(cubes: &[Cube]) -> Vec<Site> {
    let mut set = BTreeSet::new();
    for cube in cubes {
        for j in 0..cube.particles() {
            let single = Cube::new(
                Configuration::point(cube.center().particle(j).to_vec()),
                cube.radius(),
            );
            for site in single.point_table().chunks(cube.dim()) {
                set.insert(site.to_vec());
            }
        }
    }
    set.into_iter().collect()
}

/// `ξ_Q` and `η_x` for a site set `Q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFluctuationDecomposition {
    pub sites: Vec<Site>,
    pub xi: f64,
    pub eta: Vec<f64>,
}

impl MeanFluctuationDecomposition {
    pub fn reconstruct(&self) -> Vec<f64> {
        self.eta.iter().map(|e| self.xi + e).collect()
    }
}

pub fn decompose(sample: &FieldSample, q: &[Site]) -> Result<MeanFluctuationDecomposition> {
    if q.is_empty() {
        return Err(Error::invalid("Q is empty"));
    }
    let values = q
        .iter()
        .map(|s| sample.value(s))
        .collect::<Result<Vec<f64>>>()?;
    let xi = values.iter().sum::<f64>() / values.len() as f64;
    let eta = values.iter().map(|v| v - xi).collect();
    Ok(MeanFluctuationDecomposition {
        sites: q.to_vec(),
        xi,
        eta,
    })
}

/// Resamples `ξ_Q` from its conditional law given the fluctuations on `Q`
/// and the field outside `Q`, keeping all of those fixed. Gaussian IID only.
pub fn resample_mean(sample: &FieldSample, q: &[Site], seed: u64) -> Result<FieldSample> {
    let FieldDistribution::Gaussian { mean, variance } = *sample.distribution() else {
        return Err(Error::invalid(
            "conditional resampling of ξ_Q is implemented for Gaussian fields only",
        ));
    };
    let dec = decompose(sample, q)?;
    let mut rng = crate::rng::rng_from_seed(seed);
    let z: f64 = rng.sample(StandardNormal);
    let xi = mean + (variance / q.len() as f64).sqrt() * z;
    let updates: Vec<(Site, f64)> = dec
        .sites
        .iter()
        .zip(&dec.eta)
        .map(|(s, e)| (s.clone(), xi + e))
        .collect();
    sample.with_values(&updates)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: i64) -> Vec<Site> {
        (0..n).map(|x| vec![x]).collect()
    }

    #[test]
    fn gaussian_moments_large_sample() {
        let square: Vec<Site> = (0..400)
            .flat_map(|x| (0..250).map(move |y| vec![x, y]))
            .collect();
        let s = sample_field(&square, &FieldDistribution::standard_gaussian(), 11).unwrap();
        let n = s.len() as f64;
        let mean = s.values().iter().sum::<f64>() / n;
        let var = s.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        // three standard errors of the mean, times the allowed slack
        assert!(mean.abs() < 3.0 * 10f64.powf(-2.5) * 3.0, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn gaussian_values_are_pinned() {
        let s = sample_field(&line(2), &FieldDistribution::standard_gaussian(), 42).unwrap();
        assert_eq!(s.values()[0].to_bits(), (-0.6354122485098124f64).to_bits());
        assert_eq!(s.values()[1].to_bits(), 0.6556691164333701f64.to_bits());
    }

    #[test]
    fn uniform_in_range_and_deterministic() {
        let dist = FieldDistribution::Uniform { lo: 0.0, hi: 1.0 };
        let a = sample_field(&line(1000), &dist, 3).unwrap();
        assert!(a.values().iter().all(|v| (0.0..=1.0).contains(v)));
        let b = sample_field(&line(1000), &dist, 3).unwrap();
        assert_eq!(a, b);
        let mut rev = line(1000);
        rev.reverse();
        let c = sample_field(&rev, &dist, 3).unwrap();
        assert_eq!(a.get(&[17]), c.get(&[17]));
    }

    #[test]
    fn empty_region_rejected() {
        assert!(sample_field(&[], &FieldDistribution::standard_gaussian(), 0).is_err());
    }

    #[test]
    fn decompose_constant_and_singleton() {
        let s = FieldSample::from_parts(
            1,
            0,
            FieldDistribution::standard_gaussian(),
            line(4),
            vec![2.5; 4],
        )
        .unwrap();
        let d = decompose(&s, &line(4)).unwrap();
        assert_eq!(d.xi, 2.5);
        assert!(d.eta.iter().all(|&e| e == 0.0));
        let g = sample_field(&line(5), &FieldDistribution::standard_gaussian(), 9).unwrap();
        let single = decompose(&g, &[vec![3]]).unwrap();
        assert_eq!(single.xi, g.get(&[3]).unwrap());
        assert_eq!(single.eta, vec![0.0]);
        assert!(decompose(&g, &[vec![99]]).is_err());
    }

    #[test]
    fn decompose_reconstructs() {
        let g = sample_field(&line(50), &FieldDistribution::standard_gaussian(), 5).unwrap();
        let d = decompose(&g, &line(50)).unwrap();
        for (v, r) in g.values().iter().zip(d.reconstruct()) {
            assert!((v - r).abs() < 1e-12);
        }
        assert!(d.eta.iter().sum::<f64>().abs() < 1e-12 * 50.0);
    }

    #[test]
    fn density_bound_values() {
        let g = FieldDistribution::standard_gaussian();
        assert!((xi_density_bound(&g, 1).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!((xi_density_bound(&g, 4).unwrap() - 0.797_884_560_802_865_4).abs() < 1e-15);
        assert!(xi_density_bound(&FieldDistribution::Uniform { lo: 0.0, hi: 1.0 }, 4).is_err());
    }

    #[test]
    fn resample_keeps_fluctuations() {
        let g = sample_field(&line(10), &FieldDistribution::standard_gaussian(), 1).unwrap();
        let q = line(6);
        let r = resample_mean(&g, &q, 99).unwrap();
        let before = decompose(&g, &q).unwrap();
        let after = decompose(&r, &q).unwrap();
        assert_ne!(before.xi, after.xi);
        for (a, b) in before.eta.iter().zip(&after.eta) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(g.get(&[8]), r.get(&[8]));
    }

    #[test]
    fn modulus_shapes() {
        let m = FieldDistribution::standard_gaussian()
            .mean_modulus(1, 1.0)
            .unwrap();
        // R = 3 → |Q| ≤ 4 → density ≤ 2/√(2π)
        assert!((m.eval(3, 0.1) - 0.1 * 0.797_884_560_802_865_4).abs() < 1e-15);
        assert_eq!(m.eval(3, 100.0), 1.0);
        assert_eq!(m.eval(3, 0.0), 0.0);
        let h = ContinuityModulus::Holder {
            constant: 1.0,
            a: 1.0,
            b: 0.5,
        };
        assert!((h.eval(4, 0.01) - 0.4).abs() < 1e-12);
        let l = ContinuityModulus::LogDecay {
            constant: 1.0,
            a: 0.0,
            b: 2.0,
        };
        assert!(l.eval(1, 1e-10) < l.eval(1, 1e-3));
    }

    #[test]
    fn cube_sites_cover_particle_projections() {
        let c = Configuration::new(vec![0, 9], 2, 1).unwrap();
        let sites = cube_sites(&Cube::new(c, 2));
        let xs: Vec<i64> = sites.iter().map(|s| s[0]).collect();
        assert_eq!(xs, vec![-2, -1, 0, 1, 2, 7, 8, 9, 10, 11]);
        let c2 = Configuration::new(vec![0, 0, 5, 5], 2, 2).unwrap();
        assert_eq!(cube_sites(&Cube::new(c2, 1)).len(), 18);
    }

    #[test]
    fn json_round_trip() {
        let g = sample_field(&line(3), &FieldDistribution::standard_gaussian(), 2).unwrap();
        let back = FieldSample::from_json(&g.to_json().unwrap()).unwrap();
        assert_eq!(g, back);
        assert!(FieldSample::from_json(r#"{"dim":1,"seed":0,"distribution":{"kind":"gaussian","mean":0,"variance":1},"sites":[[0],[0]],"values":[1,2]}"#).is_err());
    }
}
