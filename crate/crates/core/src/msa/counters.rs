use super::{classify_interactive, EnergyGrid, ProbeCursor, ScaleLadder, SingularityProbe};
use crate::error::{Error, Result};
use crate::field::FieldSample;
use crate::hamiltonian::{assemble, ModelSpec};
use crate::lattice::{projection, sym_dist, Configuration, Cube};
use crate::spectral::eigendecompose;

/// Shared inputs of the energy scans: one disorder realization, the model
/// of the full `N`-particle system, the ladder, and an optional grid spacing
/// overriding the default.
#[derive(Clone, Copy, Debug)]
pub struct ScanContext<'a> {
    pub field: &'a FieldSample,
    pub spec: &'a ModelSpec,
    pub ladder: &'a ScaleLadder,
    pub spacing: Option<f64>,
}

impl ScanContext<'_> {
    fn total(&self) -> usize {
        self.spec.particles
    }

    /// Probe for a cube of any particle count `n ≤ N`.
    pub fn probe(&self, cube: &Cube) -> Result<SingularityProbe> {
        let spec = self.spec.with_particles(cube.particles());
        let sd = eigendecompose(&assemble(cube, self.field, &spec)?)?;
        SingularityProbe::new(&sd, self.ladder.m, self.ladder.alpha, self.total())
    }

    /// Grid over the ladder's interval for cubes of radius `l`, including
    /// the eigenvalues of `probes`.
    pub fn grid(&self, l: u32, probes: &[&SingularityProbe]) -> Result<EnergyGrid> {
        let interval = self.ladder.interval;
        let h = match self.spacing {
            Some(h) => h,
            None => EnergyGrid::default_spacing(self.ladder.m, l, self.total(), &interval)?,
        };
        let mut grid = EnergyGrid::uniform(interval, h)?;
        for p in probes {
            grid = grid.with_energies(p.eigenvalues());
        }
        Ok(grid)
    }
}

fn first_overlap(a: &[(usize, usize)], b: &[(usize, usize)]) -> Option<usize> {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if lo < hi {
            return Some(lo);
        }
        if a[i].1 <= b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    None
}

/// The smallest grid energy at which both cubes are `(E,m)`-singular.
pub fn double_singular_energy(a: &Cube, b: &Cube, ctx: &ScanContext) -> Result<Option<f64>> {
    let pa = ctx.probe(a)?;
    let pb = ctx.probe(b)?;
    let grid = ctx.grid(a.radius().max(b.radius()), &[&pa, &pb])?;
    let window = grid.interval();
    let mut ca = ProbeCursor::new(&pa, &window);
    let mut cb = ProbeCursor::new(&pb, &window);
    let points = grid.points();
    let skip = |i: usize, until: f64| i + 1 + points[i + 1..].partition_point(|&e| e <= until);
    let mut i = 0;
    while i < points.len() {
        let e = points[i];
        let (sa, until) = ca.status(e);
        if !sa {
            i = skip(i, until);
            continue;
        }
        let (sb, until) = cb.status(e);
        if sb {
            return Ok(Some(e));
        }
        i = skip(i, until);
    }
    Ok(None)
}

/// Centers `c` with `C_radius(c) ⊆ cube`, in the cube's enumeration order.
pub fn sub_cube_centers(cube: &Cube, radius: u32) -> Vec<Configuration> {
    if radius > cube.radius() {
        return Vec::new();
    }
    Cube::new(cube.center().clone(), cube.radius() - radius).points()
}

/// Pairs of sub-cube centers at symmetrized distance greater than `bound`.
fn distant_pairs(centers: &[Configuration], bound: i64) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            if sym_dist(&centers[i], &centers[j])? > bound {
                out.push((i, j));
            }
        }
    }
    Ok(out)
}

/// `(m,I)`-tunneling at scale `k`: for some grid energy, two sub-cubes of
/// radius `L_{k−1}` inside `cube` with centers more than `2N·L_{k−1}` apart
/// in `d_S` are both singular.
pub fn is_tunneling(cube: &Cube, ctx: &ScanContext, k: usize) -> Result<bool> {
    if k == 0 {
        return Err(Error::invalid("tunneling needs k >= 1"));
    }
    if ctx.ladder.interval.len() <= 0.0 {
        return Ok(false);
    }
    let l = ctx.ladder.scale(k - 1)?;
    let centers = sub_cube_centers(cube, l);
    let bound = 2 * ctx.total() as i64 * i64::from(l);
    let pairs = distant_pairs(&centers, bound)?;
    if pairs.is_empty() {
        return Ok(false);
    }
    let mut used = vec![false; centers.len()];
    for &(i, j) in &pairs {
        used[i] = true;
        used[j] = true;
    }
    let mut probes = Vec::with_capacity(centers.len());
    for (c, &u) in centers.iter().zip(&used) {
        probes.push(if u {
            Some(ctx.probe(&Cube::new(c.clone(), l))?)
        } else {
            None
        });
    }
    let refs: Vec<&SingularityProbe> = probes.iter().flatten().collect();
    let grid = ctx.grid(l, &refs)?;
    let runs: Vec<Vec<(usize, usize)>> = probes
        .iter()
        .map(|p| {
            p.as_ref()
                .map(|p| p.singular_runs(&grid))
                .unwrap_or_default()
        })
        .collect();
    Ok(pairs
        .iter()
        .any(|&(i, j)| first_overlap(&runs[i], &runs[j]).is_some()))
}

/// `(m,I)`-partial tunneling: some split of the particles into two groups
/// has a factor cube (same radius, fewer particles) that is tunneling at
/// scale `k`.
pub fn is_partially_tunneling(cube: &Cube, ctx: &ScanContext, k: usize) -> Result<bool> {
    let n = cube.particles();
    if n < 2 {
        return Ok(false);
    }
    let full = (1usize << n) - 1;
    let mut checked = std::collections::HashMap::new();
    let mut mask = 1usize;
    while mask < full {
        for part in [mask, full & !mask] {
            let subset: Vec<usize> = (0..n).filter(|&i| part & (1 << i) != 0).collect();
            let factor = projection(cube, &subset)?;
            let t = match checked.get(&factor) {
                Some(&t) => t,
                None => {
                    let t = is_tunneling(&factor, ctx, k)?;
                    checked.insert(factor, t);
                    t
                }
            };
            if t {
                return Ok(true);
            }
        }
        mask += 2;
    }
    Ok(false)
}

/// Largest subset of `centers` whose members are pairwise more than `bound`
/// apart in `d_S`: exhaustive for up to 12 candidates, greedy in index order
/// beyond that.
pub fn max_distant_subset(centers: &[Configuration], bound: i64) -> Result<Vec<usize>> {
    let n = centers.len();
    let mut ok = vec![vec![true; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let far = sym_dist(&centers[i], &centers[j])? > bound;
            ok[i][j] = far;
            ok[j][i] = far;
        }
    }
    if n <= 12 {
        let mut best = 0usize;
        let mut best_size = 0;
        for mask in 1usize..(1 << n) {
            let size = mask.count_ones();
            if size <= best_size {
                continue;
            }
            let members: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
            let valid = members
                .iter()
                .enumerate()
                .all(|(a, &i)| members[a + 1..].iter().all(|&j| ok[i][j]));
            if valid {
                best = mask;
                best_size = size;
            }
        }
        return Ok((0..n).filter(|&i| best & (1 << i) != 0).collect());
    }
    let mut chosen: Vec<usize> = Vec::new();
    for i in 0..n {
        if chosen.iter().all(|&j| ok[i][j]) {
            chosen.push(i);
        }
    }
    Ok(chosen)
}

/// Interactivity class selected by [`count_k`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CubeClass {
    Partial,
    Full,
}

/// `K^{PI}` / `K^{FI}`: over the grid, the largest number of pairwise
/// `2N·L_k`-distant singular sub-cubes of radius `L_k` and the given class
/// inside `big`.
pub fn count_k(big: &Cube, ctx: &ScanContext, k: usize, class: CubeClass) -> Result<usize> {
    if k + 1 > ctx.ladder.k_max {
        return Err(Error::invalid(format!(
            "count at scale {k} needs k_max >= {}",
            k + 1
        )));
    }
    let l = ctx.ladder.scale(k)?;
    let r0 = ctx.spec.range();
    let centers: Vec<Configuration> = sub_cube_centers(big, l)
        .into_iter()
        .filter(|c| {
            classify_interactive(&Cube::new(c.clone(), l), r0).is_partial()
                == (class == CubeClass::Partial)
        })
        .collect();
    if centers.is_empty() {
        return Ok(0);
    }
    let probes = centers
        .iter()
        .map(|c| ctx.probe(&Cube::new(c.clone(), l)))
        .collect::<Result<Vec<_>>>()?;
    let grid = ctx.grid(l, &probes.iter().collect::<Vec<_>>())?;
    let mut events: Vec<(usize, bool, usize)> = Vec::new();
    for (c, p) in probes.iter().enumerate() {
        for (a, b) in p.singular_runs(&grid) {
            events.push((a, true, c));
            events.push((b, false, c));
        }
    }
    events.sort_by_key(|&(pos, enter, c)| (pos, enter, c));
    let bound = 2 * ctx.total() as i64 * i64::from(l);
    let mut active = std::collections::BTreeSet::new();
    let mut best = 0;
    let mut idx = 0;
    while idx < events.len() {
        let pos = events[idx].0;
        while idx < events.len() && events[idx].0 == pos {
            let (_, enter, c) = events[idx];
            if enter {
                active.insert(c);
            } else {
                active.remove(&c);
            }
            idx += 1;
        }
        if active.len() > best {
            let members: Vec<Configuration> = active.iter().map(|&c| centers[c].clone()).collect();
            best = best.max(max_distant_subset(&members, bound)?.len());
        }
    }
    Ok(best)
}
