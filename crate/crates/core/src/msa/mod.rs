//! Multi-scale classification of cubes.
//!
//! Scales follow `L_{k+1} = ⌊L_k^α⌋`. A cube `C_L(u)` holding `n` of the
//! system's `N` particles is `(E,m)`-singular when some Green entry between
//! the inner ball `‖x − u‖ ≤ ⌊L^{1/α}⌋` and the inner boundary `∂⁻C_L(u)`
//! exceeds `e^{−γ(m,L,n)}`, with `γ(m,L,n) = mL(1 + L^{−1/4})^{N−n+1}`.
//!
//! Existential statements over an energy interval are evaluated on an
//! [`EnergyGrid`]: a uniform lattice plus the relevant eigenvalues. Whole
//! grids are classified at once by [`SingularityProbe::singular_runs`],
//! which combines a convexity bound on the Green entries with a Lipschitz
//! certificate so that only a small fraction of grid points is evaluated
//! exactly.

mod counters;
mod probe;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{max_dist, Cube};
use crate::spectral::Interval;

pub use counters::{
    count_k, double_singular_energy, is_partially_tunneling, is_tunneling, max_distant_subset,
    sub_cube_centers, CubeClass, ScanContext,
};
pub use probe::{EnergyGrid, ProbeCursor, SingularityProbe, MAX_GRID_POINTS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleLadder {
    pub l0: u32,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub m: f64,
    pub p: f64,
    pub interval: Interval,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    /// Exponent of the resonance threshold `e^{−L^β}`.
    #[serde(default = "default_beta")]
    pub beta: f64,
}

fn default_alpha() -> f64 {
    1.5
}

fn default_k_max() -> usize {
    2
}

fn default_beta() -> f64 {
    0.5
}

impl ScaleLadder {
    pub fn new(l0: u32, m: f64, p: f64, interval: Interval) -> Self {
        Self {
            l0,
            alpha: default_alpha(),
            m,
            p,
            interval,
            k_max: default_k_max(),
            beta: default_beta(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l0 < 2 {
            return Err(Error::Config("L0 must be at least 2".into()));
        }
        if !(self.alpha > 1.0 && self.alpha < 2.0) {
            return Err(Error::Config("alpha must lie in (1, 2)".into()));
        }
        if !(self.m > 0.0 && self.m.is_finite()) {
            return Err(Error::Config("m must be positive".into()));
        }
        if !(self.p > 0.0 && self.p.is_finite()) {
            return Err(Error::Config("p must be positive".into()));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config("beta must be positive".into()));
        }
        if !self.interval.lo.is_finite() || !self.interval.hi.is_finite() {
            return Err(Error::Config("energy interval must be finite".into()));
        }
        self.scales().map(|_| ())
    }

    /// `L_0, …, L_{k_max}`.
    pub fn scales(&self) -> Result<Vec<u32>> {
        let mut out = vec![self.l0];
        for _ in 0..self.k_max {
            let next = floor_pow(u64::from(*out.last().expect("nonempty")), self.alpha);
            let next = u32::try_from(next)
                .map_err(|_| Error::Config("scale ladder overflows u32".into()))?;
            out.push(next);
        }
        Ok(out)
    }

    pub fn scale(&self, k: usize) -> Result<u32> {
        if k > self.k_max {
            return Err(Error::invalid(format!(
                "scale index {k} beyond k_max = {}",
                self.k_max
            )));
        }
        Ok(self.scales()?[k])
    }

    /// Right-hand side of the admissibility condition on `p`.
    pub fn p_threshold(&self, particles: usize, dim: usize, s: f64) -> f64 {
        let nd = (particles * dim) as f64;
        let a = self.alpha;
        f64::max(2.0 * nd * a / (2.0 - a), (3.0 * nd * a + a * s) / 2.0)
    }

    pub fn p_admissible(&self, particles: usize, dim: usize, s: f64) -> bool {
        self.p > self.p_threshold(particles, dim, s)
    }

    /// Radius of the inner index set, `⌊L^{1/α}⌋`.
    pub fn inner_radius(&self, l: u32) -> u32 {
        inner_radius(l, self.alpha)
    }
}

/// Largest integer `r` with `r ≤ x^e`, robust to rounding in `powf`.
pub(crate) fn floor_pow(x: u64, e: f64) -> u64 {
    let v = (x as f64).powf(e);
    let mut r = v.floor() as u64;
    while ((r + 1) as f64) <= v * (1.0 + 1e-12) {
        r += 1;
    }
    while r > 0 && (r as f64) > v * (1.0 + 1e-12) {
        r -= 1;
    }
    r
}

/// `⌊L^{1/α}⌋`, computed as the largest `r` with `r^α ≤ L`.
pub fn inner_radius(l: u32, alpha: f64) -> u32 {
    let mut r = (f64::from(l)).powf(1.0 / alpha).floor() as u32;
    while f64::from(r + 1).powf(alpha) <= f64::from(l) * (1.0 + 1e-12) {
        r += 1;
    }
    while r > 0 && f64::from(r).powf(alpha) > f64::from(l) * (1.0 + 1e-12) {
        r -= 1;
    }
    r
}

/// `γ(m, L, n) = mL(1 + L^{−1/4})^{N−n+1}`.
pub fn gamma(m: f64, l: u32, n: usize, total: usize) -> Result<f64> {
    if n == 0 || n > total {
        return Err(Error::invalid(format!(
            "particle count {n} outside 1..={total}"
        )));
    }
    if l == 0 {
        return Err(Error::invalid("gamma needs L >= 1"));
    }
    if !(m > 0.0) {
        return Err(Error::invalid("gamma needs m > 0"));
    }
    let l = f64::from(l);
    Ok(m * l * (1.0 + l.powf(-0.25)).powi((total - n + 1) as i32))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Singularity {
    #[serde(rename = "NS")]
    NonSingular,
    #[serde(rename = "S")]
    Singular,
}

/// `(E,m)`-classification of the cube underlying `probe`.
pub fn classify_singular(probe: &SingularityProbe, e: f64) -> Singularity {
    if probe.is_singular(e) {
        Singularity::Singular
    } else {
        Singularity::NonSingular
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Resonance {
    #[serde(rename = "R")]
    Resonant,
    #[serde(rename = "NR")]
    NonResonant,
}

/// `R` iff `dist(σ, E) < e^{−L^β}` for the sorted spectrum `eigenvalues`.
pub fn classify_resonant(eigenvalues: &[f64], e: f64, l: u32, beta: f64) -> Resonance {
    let threshold = (-(f64::from(l)).powf(beta)).exp();
    let pos = eigenvalues.partition_point(|&v| v < e);
    let mut dist = f64::INFINITY;
    if pos < eigenvalues.len() {
        dist = dist.min(eigenvalues[pos] - e);
    }
    if pos > 0 {
        dist = dist.min(e - eigenvalues[pos - 1]);
    }
    if dist < threshold {
        Resonance::Resonant
    } else {
        Resonance::NonResonant
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "class")]
pub enum Interactivity {
    #[serde(rename = "FI")]
    FullyInteractive,
    /// Zero-based particle indices of the two groups.
    #[serde(rename = "PI")]
    PartiallyInteractive { left: Vec<usize>, right: Vec<usize> },
}

impl Interactivity {
    pub fn is_partial(&self) -> bool {
        matches!(self, Interactivity::PartiallyInteractive { .. })
    }
}

/// Max-norm gap between the single-particle boxes `C_L(u_i)` and `C_L(u_j)`.
fn box_gap(cube: &Cube, i: usize, j: usize) -> i64 {
    let c = cube.center();
    (max_dist(c.particle(i), c.particle(j)) - 2 * i64::from(cube.radius())).max(0)
}

/// Bipartition test: `PI` when the particles split into two groups whose
/// single-particle projections are more than `r0` apart. Candidate groups
/// `J'` always contain particle 0 and are tried in increasing bitmask order;
/// the first witness is returned.
pub fn classify_interactive(cube: &Cube, r0: u32) -> Interactivity {
    let n = cube.particles();
    if n < 2 || n >= usize::BITS as usize {
        return Interactivity::FullyInteractive;
    }
    let full = (1usize << n) - 1;
    let mut mask = 1usize;
    while mask < full {
        let separated = (0..n).filter(|&i| mask & (1 << i) != 0).all(|i| {
            (0..n)
                .filter(|&j| mask & (1 << j) == 0)
                .all(|j| box_gap(cube, i, j) > i64::from(r0))
        });
        if separated {
            let left = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
            let right = (0..n).filter(|&i| mask & (1 << i) == 0).collect();
            return Interactivity::PartiallyInteractive { left, right };
        }
        mask += 2;
    }
    Interactivity::FullyInteractive
}

/// One classified `(cube, E)` pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeVerdict {
    pub cube: Cube,
    pub energy: f64,
    pub singularity: Singularity,
    pub resonance: Resonance,
    pub interactivity: Interactivity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tunneling: Option<bool>,
}

/// A verdict with the parameters that produced it, one JSON object per line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub seed: u64,
    pub grid_spacing: f64,
    pub ladder: ScaleLadder,
    pub verdict: CubeVerdict,
}

impl VerdictRecord {
    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Configuration;

    fn cube(c: &[i64], n: usize, d: usize, l: u32) -> Cube {
        Cube::new(Configuration::new(c.to_vec(), n, d).unwrap(), l)
    }

    #[test]
    fn gamma_examples() {
        assert!((gamma(1.0, 16, 2, 2).unwrap() - 24.0).abs() < 1e-12);
        assert!((gamma(1.0, 16, 1, 2).unwrap() - 36.0).abs() < 1e-12);
        assert!(gamma(1.0, 16, 3, 2).is_err());
        assert!(gamma(1.0, 16, 0, 2).is_err());
        assert!(gamma(0.3, 5, 1, 3).unwrap() > 0.3 * 5.0);
    }

    #[test]
    fn ladder_scales() {
        let ladder = ScaleLadder::new(4, 1.0, 1.0, Interval::new(-1.0, 1.0));
        assert_eq!(ladder.scales().unwrap(), vec![4, 8, 22]);
        let two = ScaleLadder::new(2, 1.0, 1.0, Interval::new(-1.0, 1.0));
        assert_eq!(two.scales().unwrap(), vec![2, 2, 2]);
        assert!(ladder.validate().is_ok());
        let mut bad = ladder.clone();
        bad.alpha = 2.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn p_condition_at_three_halves() {
        let ladder = ScaleLadder::new(4, 1.0, 12.5, Interval::new(-1.0, 1.0));
        // 2Ndα/(2−α) = 6Nd for α = 3/2
        assert!((ladder.p_threshold(2, 1, 0.0) - 12.0).abs() < 1e-12);
        assert!(ladder.p_admissible(2, 1, 1.0));
        assert!(!ladder.p_admissible(2, 1, 20.0));
    }

    #[test]
    fn inner_radius_is_exact_floor() {
        assert_eq!(inner_radius(8, 1.5), 4);
        assert_eq!(inner_radius(27, 1.5), 9);
        assert_eq!(inner_radius(26, 1.5), 8);
        assert_eq!(inner_radius(0, 1.5), 0);
        assert_eq!(inner_radius(1, 1.5), 1);
        assert_eq!(floor_pow(4, 1.5), 8);
        assert_eq!(floor_pow(9, 1.5), 27);
    }

    #[test]
    fn resonance_threshold_is_strict() {
        let ev = [0.0, 5.0];
        assert_eq!(classify_resonant(&ev, 2.0, 1, 0.5), Resonance::NonResonant);
        assert_eq!(classify_resonant(&ev, 5.0, 4, 0.5), Resonance::Resonant);
        let t = (-(4f64).powf(0.5)).exp();
        assert_eq!(classify_resonant(&ev, t, 4, 0.5), Resonance::NonResonant);
        assert_eq!(
            classify_resonant(&ev, t * 0.999, 4, 0.5),
            Resonance::Resonant
        );
    }

    #[test]
    fn interactivity_examples() {
        let far = cube(&[0, 100], 2, 1, 3);
        assert_eq!(
            classify_interactive(&far, 2),
            Interactivity::PartiallyInteractive {
                left: vec![0],
                right: vec![1]
            }
        );
        let diag = cube(&[5, 5, 5], 3, 1, 1);
        assert_eq!(
            classify_interactive(&diag, 0),
            Interactivity::FullyInteractive
        );
        let touching = cube(&[0, 7], 2, 1, 3);
        assert_eq!(
            classify_interactive(&touching, 0),
            Interactivity::PartiallyInteractive {
                left: vec![0],
                right: vec![1]
            }
        );
        assert_eq!(
            classify_interactive(&touching, 1),
            Interactivity::FullyInteractive
        );
        let grouped = cube(&[0, 50, 1], 3, 1, 1);
        assert_eq!(
            classify_interactive(&grouped, 2),
            Interactivity::PartiallyInteractive {
                left: vec![0, 2],
                right: vec![1]
            }
        );
    }

    #[test]
    fn verdict_json_round_trip() {
        let record = VerdictRecord {
            seed: 9,
            grid_spacing: 1e-3,
            ladder: ScaleLadder::new(4, 1.0, 1.0, Interval::new(-1.0, 1.0)),
            verdict: CubeVerdict {
                cube: cube(&[0, 9], 2, 1, 2),
                energy: 0.25,
                singularity: Singularity::Singular,
                resonance: Resonance::NonResonant,
                interactivity: Interactivity::PartiallyInteractive {
                    left: vec![0],
                    right: vec![1],
                },
                tunneling: None,
            },
        };
        let line = record.to_json_line().unwrap();
        assert!(!line.contains('\n'));
        let back: VerdictRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, record);
    }
}
