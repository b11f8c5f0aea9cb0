//! Discrete subharmonic functions and the radial-descent bound.
//!
//! A function table is a slice of values indexed like the points of its
//! domain cube. Radii are max-norm distances from the domain center.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{max_dist, max_norm, Annulus, Configuration, Cube};
use crate::rng::rng_from_seed;

/// Relative slack allowed on the final inequality for floating rounding.
pub const DESCENT_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubharmonicSpec {
    pub ell: u32,
    pub q: f64,
    pub exceptional: Vec<Vec<i64>>,
    pub c: f64,
    pub domain: Cube,
}

impl SubharmonicSpec {
    pub fn new(ell: u32, q: f64, exceptional: Vec<Vec<i64>>, c: f64, domain: Cube) -> Result<Self> {
        let spec = Self {
            ell,
            q,
            exceptional,
            c,
            domain,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ell == 0 {
            return Err(Error::invalid("ell must be positive"));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::invalid(format!(
                "q must lie in (0, 1], got {}",
                self.q
            )));
        }
        if !(self.c >= 1.0 && self.c.is_finite()) {
            return Err(Error::invalid(format!(
                "c must be a finite real >= 1, got {}",
                self.c
            )));
        }
        for s in &self.exceptional {
            if s.len() != self.domain.rank() || !self.domain.contains(s) {
                return Err(Error::geometry(format!(
                    "exceptional point {s:?} lies outside the domain"
                )));
            }
        }
        Ok(())
    }

    /// `⌊cℓ⌋`, the integer reach of the exceptional clause.
    pub fn reach(&self) -> u32 {
        (self.c * self.ell as f64).floor() as u32
    }

    fn exceptional_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.domain.len()];
        for s in &self.exceptional {
            if let Some(i) = self.domain.index_of(s) {
                mask[i] = true;
            }
        }
        mask
    }

    fn radius_of(&self, x: &[i64]) -> u32 {
        max_dist(x, self.domain.center().coords()) as u32
    }
}

/// The first point (in domain order) where a subharmonic clause fails.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub point: Vec<i64>,
    pub value: f64,
    pub bound: f64,
    pub exceptional: bool,
}

/// Offsets `o` with `lo ≤ ‖o‖∞ ≤ hi`.
fn shell_offsets(rank: usize, lo: u32, hi: u32) -> Vec<Vec<i64>> {
    let box_cube = Cube::new(Configuration::point(vec![0; rank]), hi);
    box_cube
        .points()
        .into_iter()
        .map(|p| p.coords().to_vec())
        .filter(|o| max_norm(o) >= lo as i64)
        .collect()
}

fn check_len(f: &[f64], spec: &SubharmonicSpec) -> Result<()> {
    if f.len() != spec.domain.len() {
        return Err(Error::invalid(format!(
            "function table has {} values, domain has {} points",
            f.len(),
            spec.domain.len()
        )));
    }
    Ok(())
}

fn max_over(f: &[f64], domain: &Cube, x: &[i64], offsets: &[Vec<i64>], buf: &mut [i64]) -> f64 {
    let mut best = 0.0f64;
    for o in offsets {
        for (b, (xi, oi)) in buf.iter_mut().zip(x.iter().zip(o)) {
            *b = xi + oi;
        }
        if let Some(j) = domain.index_of(buf) {
            best = best.max(f[j].abs());
        }
    }
    best
}

/// Check both subharmonic clauses; `Ok(None)` means `f` is subharmonic.
pub fn check_subharmonic(f: &[f64], spec: &SubharmonicSpec) -> Result<Option<Violation>> {
    spec.validate()?;
    check_len(f, spec)?;
    let domain = &spec.domain;
    let rank = domain.rank();
    let sphere = shell_offsets(rank, spec.ell, spec.ell);
    let shell = shell_offsets(rank, spec.ell, spec.ell + spec.reach());
    let mask = spec.exceptional_mask();
    let limit = domain.radius().checked_sub(spec.ell);
    let mut x = vec![0i64; rank];
    let mut buf = vec![0i64; rank];
    for i in 0..domain.len() {
        domain.coords_at(i, &mut x);
        let exceptional = mask[i];
        let offsets = if exceptional {
            &shell
        } else {
            // Points whose ℓ-ball leaves the domain carry no constraint.
            match limit {
                Some(lim) if spec.radius_of(&x) <= lim => &sphere,
                _ => continue,
            }
        };
        let bound = spec.q * max_over(f, domain, &x, offsets, &mut buf);
        let value = f[i].abs();
        if value > bound {
            return Ok(Some(Violation {
                point: x.clone(),
                value,
                bound,
                exceptional,
            }));
        }
    }
    Ok(None)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnulusCover {
    pub annuli: Vec<Annulus>,
    pub total_width: u32,
}

impl AnnulusCover {
    pub fn new(annuli: Vec<Annulus>) -> Self {
        let total_width = annuli.iter().map(Annulus::width).sum();
        Self {
            annuli,
            total_width,
        }
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        self.annuli.iter().any(|a| a.contains(x))
    }

    /// Exhaustively check that every domain point within `⌊cℓ⌋` of an
    /// exceptional point lies in some annulus. Returns the first miss.
    pub fn uncovered_point(&self, spec: &SubharmonicSpec) -> Option<Vec<i64>> {
        let offsets = shell_offsets(spec.domain.rank(), 0, spec.reach());
        let mut y = vec![0i64; spec.domain.rank()];
        for s in &spec.exceptional {
            for o in &offsets {
                for (yi, (si, oi)) in y.iter_mut().zip(s.iter().zip(o)) {
                    *yi = si + oi;
                }
                if spec.domain.contains(&y) && !self.contains(&y) {
                    return Some(y.clone());
                }
            }
        }
        None
    }
}

/// Cover the `cℓ`-neighborhood of `S` by annuli about `center`.
///
/// The neighborhood radii of a point at radius `ρ` are exactly
/// `[ρ − ⌊cℓ⌋, ρ + ⌊cℓ⌋]` (clipped at 0); overlapping or adjacent runs merge.
pub fn cover_neighborhood(
    exceptional: &[Vec<i64>],
    c: f64,
    ell: u32,
    center: &[i64],
) -> AnnulusCover {
    let reach = (c * ell as f64).floor() as i64;
    let mut runs: Vec<(i64, i64)> = exceptional
        .iter()
        .map(|s| {
            let r = max_dist(s, center);
            ((r - reach).max(0), r + reach)
        })
        .collect();
    runs.sort_unstable();
    let mut merged: Vec<(i64, i64)> = Vec::new();
    for (lo, hi) in runs {
        match merged.last_mut() {
            Some(last) if lo <= last.1 + 1 => last.1 = last.1.max(hi),
            _ => merged.push((lo, hi)),
        }
    }
    let annuli = merged
        .into_iter()
        .map(|(lo, hi)| {
            let inner = (lo > 0).then(|| (lo - 1) as u32);
            Annulus::new(center.to_vec(), inner, hi as u32).expect("run has lo <= hi")
        })
        .collect();
    AnnulusCover::new(annuli)
}

fn admissible_radius(l: u32, r: u32, ell: u32, w: u32) -> bool {
    let (l, r, ell, w) = (l as i64, r as i64, ell as i64, w as i64);
    r == 0 || (w + ell <= r && r <= l - w + ell)
}

/// The factor `q^{⌊(L−r−W)/ℓ⌋ − 1}`.
///
/// Radii in `[W + ℓ, L − W + ℓ]` are accepted, as is `r = 0` (the bound at
/// the center).
pub fn descent_bound(l: u32, r: u32, ell: u32, q: f64, w: u32) -> Result<f64> {
    if ell == 0 {
        return Err(Error::invalid("ell must be positive"));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::invalid(format!("q must lie in (0, 1], got {q}")));
    }
    if !admissible_radius(l, r, ell, w) {
        return Err(Error::invalid(format!(
            "radius {r} outside the admissible range [{}, {}]",
            w as i64 + ell as i64,
            l as i64 - w as i64 + ell as i64
        )));
    }
    let exponent = (l as i64 - r as i64 - w as i64).div_euclid(ell as i64) - 1;
    Ok(q.powi(exponent as i32))
}

/// Everything reconstructed while verifying one descent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescentReport {
    pub l: u32,
    pub r: u32,
    pub ell: u32,
    pub q: f64,
    pub cover_width: u32,
    /// Radii of spheres meeting the exceptional set.
    pub exceptional_radii: Vec<u32>,
    /// Radii swept out by `𝒮''` inside the domain.
    pub thickened_radii: Vec<u32>,
    /// The admissible radius set `ℛ`.
    pub admissible: Vec<u32>,
    /// `r_0 = L, r_1, …, r_{M'}`.
    pub steps: Vec<u32>,
    /// `|J_n| = r_{n−1} − ℓ − r_n` for each step.
    pub gaps: Vec<u32>,
    pub m_prime: u32,
    pub inner_max: f64,
    pub outer_max: f64,
    pub factor: f64,
}

impl DescentReport {
    pub fn thickened_width(&self) -> u32 {
        self.thickened_radii.len() as u32
    }

    pub fn gap_total(&self) -> u32 {
        self.gaps.iter().sum()
    }

    /// `(L − r − W)/ℓ − 1`.
    pub fn step_lower_bound(&self) -> f64 {
        (self.l as f64 - self.r as f64 - self.cover_width as f64) / self.ell as f64 - 1.0
    }

    pub fn steps_hold(&self) -> bool {
        self.m_prime as f64 >= self.step_lower_bound()
    }

    pub fn bound_holds(&self) -> bool {
        self.inner_max <= self.factor * self.outer_max * (1.0 + DESCENT_SLACK)
    }

    /// Bookkeeping that must hold for any valid run of the recursion.
    pub fn recursion_consistent(&self) -> bool {
        self.steps.windows(2).all(|w| w[1] < w[0])
            && self.gap_total() <= self.thickened_width()
            && self.thickened_width() <= self.cover_width
    }

    pub fn holds(&self) -> bool {
        self.steps_hold() && self.bound_holds() && self.recursion_consistent()
    }

    /// `q^{M'} max |f| / max_{C_r} |f|`; infinite when the inner max is 0.
    pub fn slack(&self) -> f64 {
        self.factor * self.outer_max / self.inner_max
    }
}

/// Reconstruct the descent recursion for `f` and test its conclusion.
pub fn verify_descent(
    f: &[f64],
    spec: &SubharmonicSpec,
    cover: &AnnulusCover,
    r: u32,
) -> Result<DescentReport> {
    if let Some(v) = check_subharmonic(f, spec)? {
        return Err(Error::invalid(format!(
            "function is not subharmonic at {:?}",
            v.point
        )));
    }
    if let Some(y) = cover.uncovered_point(spec) {
        return Err(Error::invalid(format!(
            "cover misses neighborhood point {y:?}"
        )));
    }
    let l = spec.domain.radius();
    let ell = spec.ell;
    if !admissible_radius(l, r, ell, cover.total_width) {
        return Err(Error::invalid(format!("radius {r} is not admissible")));
    }
    let reach = spec.reach();
    let mut exceptional_radii: Vec<u32> =
        spec.exceptional.iter().map(|s| spec.radius_of(s)).collect();
    exceptional_radii.sort_unstable();
    exceptional_radii.dedup();
    let mut thick = vec![false; l as usize + 1];
    for &rho in &exceptional_radii {
        for j in rho..=(rho + reach).min(l) {
            thick[j as usize] = true;
        }
    }
    let thickened_radii: Vec<u32> = (0..=l).filter(|&j| thick[j as usize]).collect();
    let admissible: Vec<u32> = (0..=l).filter(|&j| !thick[j as usize]).collect();

    let mut steps = vec![l];
    let mut gaps = Vec::new();
    loop {
        let prev = *steps.last().expect("steps start at L");
        let Some(top) = prev.checked_sub(ell) else {
            break;
        };
        let next = admissible.iter().rev().find(|&&j| j <= top).copied();
        match next {
            Some(rn) if rn >= r => {
                gaps.push(top - rn);
                steps.push(rn);
            }
            _ => break,
        }
    }
    let m_prime = (steps.len() - 1) as u32;

    let center = spec.domain.center().coords();
    let mut x = vec![0i64; spec.domain.rank()];
    let (mut inner_max, mut outer_max) = (0.0f64, 0.0f64);
    for (i, v) in f.iter().enumerate() {
        spec.domain.coords_at(i, &mut x);
        let a = v.abs();
        outer_max = outer_max.max(a);
        if max_dist(&x, center) <= r as i64 {
            inner_max = inner_max.max(a);
        }
    }
    Ok(DescentReport {
        l,
        r,
        ell,
        q: spec.q,
        cover_width: cover.total_width,
        exceptional_radii,
        thickened_radii,
        admissible,
        steps,
        gaps,
        m_prime,
        inner_max,
        outer_max,
        factor: spec.q.powi(m_prime as i32),
    })
}

/// Ranges sampled by [`random_instance`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub rank: usize,
    pub radius: (u32, u32),
    pub ell: (u32, u32),
    pub q: (f64, f64),
    pub c: (f64, f64),
    pub max_exceptional: usize,
    pub center_spread: i64,
    pub signed: bool,
}

impl GeneratorParams {
    pub fn for_rank(rank: usize) -> Self {
        let radius = if rank == 1 { (6, 40) } else { (6, 14) };
        Self {
            rank,
            radius,
            ell: (1, 3),
            q: (0.2, 1.0),
            c: (1.0, 2.0),
            max_exceptional: 3,
            center_spread: 5,
            signed: true,
        }
    }
}

/// A generated subharmonic function with its cover and test radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescentInstance {
    pub seed: u64,
    pub spec: SubharmonicSpec,
    pub values: Vec<f64>,
    pub cover: AnnulusCover,
    pub r: u32,
}

/// A failing instance together with what the verifier reconstructed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub instance: DescentInstance,
    pub report: Option<DescentReport>,
    pub reason: String,
}

impl Counterexample {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Build a subharmonic function by outside-in propagation.
///
/// Points whose `ℓ`-ball leaves the domain get values in `[0.5, 1]`; every
/// other point, taken by decreasing radius, gets `q·m·u` with `u ∈ (0, 1]`
/// and `m` the max over already-assigned points of its sphere (or shell,
/// for exceptional points). Assigned points are strictly farther out, so
/// the final max can only be larger. Exceptional points are drawn inside
/// `C_{L−ℓ}` so that their shell always reaches an assigned point.
pub fn random_instance(seed: u64, params: &GeneratorParams) -> Result<DescentInstance> {
    let mut rng = rng_from_seed(seed);
    let rank = params.rank;
    let l = rng.random_range(params.radius.0..=params.radius.1);
    let ell =
        rng.random_range(params.ell.0..=params.ell.1.min(l.saturating_sub(1)).max(params.ell.0));
    let q = if rng.random_bool(0.1) {
        1.0
    } else {
        rng.random_range(params.q.0..params.q.1)
    };
    let c = rng.random_range(params.c.0..=params.c.1);
    let center: Vec<i64> = (0..rank)
        .map(|_| rng.random_range(-params.center_spread..=params.center_spread))
        .collect();
    let domain = Cube::new(Configuration::point(center.clone()), l);
    let inner = l - ell;
    let count = rng.random_range(0..=params.max_exceptional);
    let mut exceptional: Vec<Vec<i64>> = Vec::new();
    for _ in 0..count {
        let s: Vec<i64> = center
            .iter()
            .map(|&u| u + rng.random_range(-(inner as i64)..=inner as i64))
            .collect();
        if !exceptional.contains(&s) {
            exceptional.push(s);
        }
    }
    let spec = SubharmonicSpec::new(ell, q, exceptional, c, domain)?;

    let n = spec.domain.len();
    let mask = spec.exceptional_mask();
    let radii = spec.domain.radii();
    let mut values = vec![f64::NAN; n];
    for i in 0..n {
        if radii[i] > inner {
            values[i] = rng.random_range(0.5..=1.0);
        }
    }
    let mut order: Vec<usize> = (0..n).filter(|&i| radii[i] <= inner).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(radii[i]));
    let sphere = shell_offsets(rank, ell, ell);
    let shell = shell_offsets(rank, ell, ell + spec.reach());
    let mut x = vec![0i64; rank];
    let mut y = vec![0i64; rank];
    for i in order {
        spec.domain.coords_at(i, &mut x);
        let offsets = if mask[i] { &shell } else { &sphere };
        let mut m = 0.0f64;
        for o in offsets {
            for (yi, (xi, oi)) in y.iter_mut().zip(x.iter().zip(o)) {
                *yi = xi + oi;
            }
            if let Some(j) = spec.domain.index_of(&y) {
                if radii[j] > radii[i] {
                    m = m.max(values[j]);
                }
            }
        }
        let u: f64 = 1.0 - rng.random::<f64>();
        values[i] = q * m * u;
    }
    if params.signed {
        for v in &mut values {
            if rng.random_bool(0.5) {
                *v = -*v;
            }
        }
    }

    let cover = cover_neighborhood(&spec.exceptional, c, ell, &center);
    let w = cover.total_width;
    let r = if 2 * w <= l {
        rng.random_range(w + ell..=(l - w + ell).min(l))
    } else {
        0
    };
    Ok(DescentInstance {
        seed,
        spec,
        values,
        cover,
        r,
    })
}

/// Outcome of running the verifier over generated instances.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SelftestSummary {
    pub instances: usize,
    pub bound_failures: usize,
    pub step_failures: usize,
    pub recursion_failures: usize,
    pub min_log_slack: f64,
    pub counterexamples: Vec<Counterexample>,
}

impl SelftestSummary {
    pub fn passed(&self) -> bool {
        self.bound_failures == 0 && self.step_failures == 0 && self.recursion_failures == 0
    }
}

/// Verify one generated instance, turning any failure into a counterexample.
pub fn check_instance(
    instance: &DescentInstance,
) -> std::result::Result<DescentReport, Counterexample> {
    let fail = |report: Option<DescentReport>, reason: String| Counterexample {
        instance: instance.clone(),
        report,
        reason,
    };
    let report = verify_descent(
        &instance.values,
        &instance.spec,
        &instance.cover,
        instance.r,
    )
    .map_err(|e| fail(None, e.to_string()))?;
    if report.holds() {
        Ok(report)
    } else {
        let reason = format!(
            "steps_hold={} bound_holds={} recursion_consistent={}",
            report.steps_hold(),
            report.bound_holds(),
            report.recursion_consistent()
        );
        Err(fail(Some(report), reason))
    }
}

/// Run the verifier over `count` generated instances, cycling ranks 1 and 2.
pub fn selftest(master_seed: u64, count: usize) -> Result<SelftestSummary> {
    let mut summary = SelftestSummary {
        min_log_slack: f64::INFINITY,
        ..SelftestSummary::default()
    };
    for i in 0..count {
        let params = GeneratorParams::for_rank(1 + i % 2);
        let seed = crate::rng::trial_seed(master_seed, i as u64);
        let instance = random_instance(seed, &params)?;
        summary.instances += 1;
        match check_instance(&instance) {
            Ok(report) => {
                if report.inner_max > 0.0 {
                    summary.min_log_slack = summary.min_log_slack.min(report.slack().ln());
                }
            }
            Err(ce) => {
                match &ce.report {
                    Some(rep) => {
                        summary.bound_failures += usize::from(!rep.bound_holds());
                        summary.step_failures += usize::from(!rep.steps_hold());
                        summary.recursion_failures += usize::from(!rep.recursion_consistent());
                    }
                    None => summary.recursion_failures += 1,
                }
                summary.counterexamples.push(ce);
            }
        }
    }
    Ok(summary)
}
