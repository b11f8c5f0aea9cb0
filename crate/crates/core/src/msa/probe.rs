use nalgebra::DMatrix;

use super::{gamma, inner_radius};
use crate::error::{Error, Result};
use crate::spectral::{Interval, SpectralData, RESONANCE_GUARD};

/// Largest number of points an [`EnergyGrid`] may hold.
pub const MAX_GRID_POINTS: usize = 10_000_000;

/// Sorted energies at which "there exists `E ∈ I`" is tested.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyGrid {
    interval: Interval,
    spacing: f64,
    points: Vec<f64>,
}

impl EnergyGrid {
    /// `lo, lo + h, lo + 2h, …` up to `hi`. Degenerate intervals give an empty grid.
    pub fn uniform(interval: Interval, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::invalid("grid spacing must be positive"));
        }
        let mut points = Vec::new();
        if interval.len() > 0.0 {
            let count = (interval.len() / spacing).floor();
            if count >= MAX_GRID_POINTS as f64 {
                return Err(Error::invalid(format!(
                    "grid of spacing {spacing:e} over {:?} exceeds {MAX_GRID_POINTS} points",
                    interval
                )));
            }
            points = (0..=count as usize)
                .map(|j| interval.lo + j as f64 * spacing)
                .filter(|&e| e <= interval.hi)
                .collect();
        }
        Ok(Self {
            interval,
            spacing,
            points,
        })
    }

    /// Default spacing `max(e^{−γ(m,L,N)}/4, 10⁻⁶|I|)`.
    pub fn default_spacing(m: f64, l: u32, total: usize, interval: &Interval) -> Result<f64> {
        let g = gamma(m, l.max(1), total, total)?;
        let floor = 1e-6 * interval.len();
        let h = (-g).exp() / 4.0;
        Ok(if h > floor || floor == 0.0 {
            h.max(f64::MIN_POSITIVE)
        } else {
            floor
        })
    }

    /// Adds the energies lying in the interval (typically eigenvalues).
    pub fn with_energies(mut self, extra: &[f64]) -> Self {
        if self.interval.len() > 0.0 {
            self.points
                .extend(extra.iter().copied().filter(|&e| self.interval.contains(e)));
            self.points.sort_by(f64::total_cmp);
            self.points.dedup();
        }
        self
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Green-function data of one cube, arranged for repeated singularity tests.
///
/// With `a_k(x,y) = Ψ_k(x)Ψ_k(y)` and `c_k = max_X |Ψ_k| · max_Y |Ψ_k|`,
/// every entry of the block satisfies `|G(x,y;E)| ≤ F(E) = Σ c_k/|E_k − E|`,
/// and moving `E` by `δ` changes it by at most `δ Σ c_k/((d_k − δ) d_k)`.
#[derive(Clone, Debug)]
pub struct SingularityProbe {
    eigenvalues: Vec<f64>,
    weights: Vec<f64>,
    rows: DMatrix<f64>,
    cols: DMatrix<f64>,
    threshold: f64,
    radius: u32,
}

impl SingularityProbe {
    /// Probe for the cube of `sd`, with `total` particles in the whole system.
    pub fn new(sd: &SpectralData, m: f64, alpha: f64, total: usize) -> Result<Self> {
        let cube = sd.cube();
        let l = cube.radius();
        // a one-point cube has no decay to test: γ is taken as 0 there
        let threshold = if l == 0 {
            1.0
        } else {
            (-gamma(m, l, cube.particles(), total)?).exp()
        };
        let radii = cube.radii();
        let r_in = inner_radius(l, alpha);
        let x_idx: Vec<usize> = (0..radii.len()).filter(|&i| radii[i] <= r_in).collect();
        let y_idx: Vec<usize> = (0..radii.len()).filter(|&i| radii[i] == l).collect();
        let rows = sd.eigenvectors().select_rows(&x_idx);
        let cols = sd.eigenvectors().select_rows(&y_idx);
        let weights = (0..sd.len())
            .map(|k| rows.column(k).amax() * cols.column(k).amax())
            .collect();
        Ok(Self {
            eigenvalues: sd.eigenvalues().to_vec(),
            weights,
            rows,
            cols,
            threshold,
            radius: l,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    fn distance_to_spectrum(&self, e: f64) -> f64 {
        let pos = self.eigenvalues.partition_point(|&v| v < e);
        let mut d = f64::INFINITY;
        if pos < self.eigenvalues.len() {
            d = d.min(self.eigenvalues[pos] - e);
        }
        if pos > 0 {
            d = d.min(e - self.eigenvalues[pos - 1]);
        }
        d
    }

    /// `max |G(x,y;E)|` over the inner ball and the inner boundary;
    /// infinite at resonant energies.
    pub fn max_entry(&self, e: f64) -> f64 {
        if self.distance_to_spectrum(e) <= RESONANCE_GUARD {
            return f64::INFINITY;
        }
        self.block_max(e).0
    }

    /// Largest `|G(x,y;E)|` in the block with its row and column position.
    fn block_max(&self, e: f64) -> (f64, usize, usize) {
        let mut a = self.rows.clone();
        for (k, &ek) in self.eigenvalues.iter().enumerate() {
            a.column_mut(k).scale_mut(1.0 / (ek - e));
        }
        let block = a * self.cols.transpose();
        let (i, j) = block.iamax_full();
        (block[(i, j)].abs(), i, j)
    }

    fn pair_entry(&self, e: f64, i: usize, j: usize) -> f64 {
        let mut g = 0.0;
        for (k, &ek) in self.eigenvalues.iter().enumerate() {
            g += self.rows[(i, k)] * self.cols[(j, k)] / (ek - e);
        }
        g.abs()
    }

    pub fn is_singular(&self, e: f64) -> bool {
        self.max_entry(e) > self.threshold
    }

    /// `F(E) = Σ c_k/|E_k − E|`.
    pub fn upper_bound(&self, e: f64) -> f64 {
        self.eigenvalues
            .iter()
            .zip(&self.weights)
            .filter(|(_, &c)| c > 0.0)
            .map(|(&ek, &c)| c / (ek - e).abs())
            .sum()
    }

    fn drift_bound(&self, e: f64, delta: f64) -> f64 {
        self.eigenvalues
            .iter()
            .zip(&self.weights)
            .filter(|(_, &c)| c > 0.0)
            .map(|(&ek, &c)| {
                let d = (ek - e).abs();
                c / ((d - delta) * d)
            })
            .sum()
    }

    /// Half-width of a neighbourhood of `e` on which the verdict at `e`
    /// (whose block maximum is `value`) provably persists.
    fn certified_radius(&self, e: f64, value: f64) -> f64 {
        let margin = (value - self.threshold).abs();
        let room = self.distance_to_spectrum(e) - RESONANCE_GUARD;
        if margin == 0.0 || room <= 0.0 || !value.is_finite() {
            return 0.0;
        }
        let slope = self.drift_bound(e, 0.0);
        if slope == 0.0 {
            return room * 0.5;
        }
        let mut delta = (margin / slope).min(room * 0.5);
        for _ in 0..40 {
            if delta * self.drift_bound(e, delta) < margin * (1.0 - 1e-9) {
                return delta;
            }
            delta *= 0.5;
        }
        0.0
    }

    /// Energies where `F` may exceed the threshold: a sorted union of closed
    /// intervals around the eigenvalues (outside it the cube is certainly NS).
    pub fn candidate_intervals(&self, window: &Interval) -> Vec<Interval> {
        if window.is_empty() {
            return Vec::new();
        }
        let t = self.threshold * (1.0 - 1e-9);
        let poles: Vec<f64> = self
            .eigenvalues
            .iter()
            .zip(&self.weights)
            .filter(|(_, &c)| c > 0.0)
            .map(|(&e, _)| e)
            .collect();
        let mut out: Vec<Interval> = Vec::new();
        let mut push = |iv: Interval| {
            let iv = Interval::new(iv.lo.max(window.lo), iv.hi.min(window.hi));
            if iv.is_empty() {
                return;
            }
            if let Some(last) = out.last_mut() {
                if iv.lo <= last.hi {
                    last.hi = last.hi.max(iv.hi);
                    return;
                }
            }
            out.push(iv);
        };
        // guard balls around every eigenvalue, including zero-weight ones
        let guards: Vec<Interval> = self
            .eigenvalues
            .iter()
            .map(|&e| Interval::new(e - RESONANCE_GUARD, e + RESONANCE_GUARD))
            .collect();
        if poles.is_empty() {
            for g in guards {
                push(g);
            }
            return out;
        }
        let mut pieces = Vec::with_capacity(poles.len() + guards.len());
        // below the lowest pole F increases towards it
        let first = poles[0];
        if window.lo < first {
            let lo = window.lo.min(first - 1.0);
            let b = self.crossing(lo, first, t);
            pieces.push(Interval::new(b, first));
        }
        for w in poles.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b < window.lo || a > window.hi {
                continue;
            }
            match self.sublevel_in_gap(a, b, t) {
                None => pieces.push(Interval::new(a, b)),
                Some((l, r)) => {
                    pieces.push(Interval::new(a, l));
                    pieces.push(Interval::new(r, b));
                }
            }
        }
        let last = *poles.last().expect("nonempty");
        if window.hi > last {
            let hi = window.hi.max(last + 1.0);
            let b = self.crossing(hi, last, t);
            pieces.push(Interval::new(last, b));
        }
        pieces.extend(guards);
        pieces.sort_by(|p, q| p.lo.total_cmp(&q.lo));
        for p in pieces {
            push(p);
        }
        out
    }

    /// Starting from `far` (where `F` may or may not exceed `t`) and moving
    /// monotonically towards `pole`, returns the point closest to `far`
    /// beyond which `F > t` is possible.
    fn crossing(&self, far: f64, pole: f64, t: f64) -> f64 {
        if self.upper_bound(far) > t {
            return far;
        }
        let (mut ok, mut bad) = (far, pole);
        for _ in 0..200 {
            let mid = 0.5 * (ok + bad);
            if mid == ok || mid == bad {
                break;
            }
            if self.upper_bound(mid) > t {
                bad = mid;
            } else {
                ok = mid;
            }
        }
        ok
    }

    /// On a gap between consecutive poles `F` is convex; returns an interval
    /// `[l, r]` on which `F ≤ t` is certain, or `None`.
    fn sublevel_in_gap(&self, a: f64, b: f64, t: f64) -> Option<(f64, f64)> {
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let (mut lo, mut hi) = (a, b);
        let mut x1 = hi - phi * (hi - lo);
        let mut x2 = lo + phi * (hi - lo);
        let mut f1 = self.upper_bound(x1);
        let mut f2 = self.upper_bound(x2);
        for _ in 0..120 {
            if f1.min(f2) <= t || hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
                break;
            }
            if f1 < f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - phi * (hi - lo);
                f1 = self.upper_bound(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + phi * (hi - lo);
                f2 = self.upper_bound(x2);
            }
        }
        let inside = if f1 <= t {
            x1
        } else if f2 <= t {
            x2
        } else {
            return None;
        };
        Some((self.crossing(inside, a, t), self.crossing(inside, b, t)))
    }

    /// Half-open index ranges of `grid` on which the cube is `(E,m)`-singular.
    pub fn singular_runs(&self, grid: &EnergyGrid) -> Vec<(usize, usize)> {
        let points = grid.points();
        let mut cursor = ProbeCursor::new(self, &grid.interval());
        let mut runs: Vec<(usize, usize)> = Vec::new();
        let mut i = 0;
        while i < points.len() {
            let (singular, until) = cursor.status(points[i]);
            let j = i + 1 + points[i + 1..].partition_point(|&e| e <= until);
            if singular {
                match runs.last_mut() {
                    Some(last) if last.1 == i => last.1 = j,
                    _ => runs.push((i, j)),
                }
            }
            i = j;
        }
        runs
    }
}

/// Classifies a non-decreasing sequence of energies for one probe, reusing
/// certificates between queries.
#[derive(Clone, Debug)]
pub struct ProbeCursor<'a> {
    probe: &'a SingularityProbe,
    candidates: Vec<Interval>,
    next: usize,
    witness: Option<(usize, usize)>,
}

impl<'a> ProbeCursor<'a> {
    pub fn new(probe: &'a SingularityProbe, window: &Interval) -> Self {
        Self {
            probe,
            candidates: probe.candidate_intervals(window),
            next: 0,
            witness: None,
        }
    }

    /// Verdict at `e` (`true` for singular) and the largest energy up to
    /// which that verdict provably holds.
    pub fn status(&mut self, e: f64) -> (bool, f64) {
        while self.next < self.candidates.len() && self.candidates[self.next].hi < e {
            self.next += 1;
        }
        let (c_lo, c_hi) = match self.candidates.get(self.next) {
            None => return (false, f64::INFINITY),
            Some(c) => (c.lo, c.hi),
        };
        if e < c_lo {
            return (false, c_lo.next_down());
        }
        let p = self.probe;
        if p.distance_to_spectrum(e) <= RESONANCE_GUARD {
            return (true, e);
        }
        if let Some((i, j)) = self.witness {
            let v = p.pair_entry(e, i, j);
            if v > p.threshold {
                return (true, e + p.certified_radius(e, v));
            }
        }
        let (v, i, j) = p.block_max(e);
        self.witness = Some((i, j));
        let reach = e + p.certified_radius(e, v);
        if v > p.threshold {
            return (true, reach);
        }
        if reach >= c_hi {
            let after = self
                .candidates
                .get(self.next + 1)
                .map_or(f64::INFINITY, |c| c.lo.next_down());
            return (false, after);
        }
        (false, reach)
    }
}
