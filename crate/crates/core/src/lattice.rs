//! Geometry of the multi-particle configuration space `Z^{Nd}`.
//!
//! A configuration of `N` particles in `Z^d` is a flat integer vector of
//! length `N·d`; particle `j` occupies `coords[j*d..(j+1)*d]`. All distances
//! are max-norm distances unless stated otherwise.
//!
//! Cube points are enumerated lexicographically on the flattened `Nd`-tuple
//! with the first coordinate varying slowest. The position of a point in that
//! enumeration is its row/column index in every matrix built over the cube.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest particle count accepted by [`sym_dist`].
pub const MAX_SYM_PARTICLES: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Configuration {
    coords: Vec<i64>,
    particles: usize,
    dim: usize,
}

impl Configuration {
    pub fn new(coords: Vec<i64>, particles: usize, dim: usize) -> Result<Self> {
        if particles == 0 || dim == 0 {
            return Err(Error::invalid(
                "particle count and dimension must be positive",
            ));
        }
        if coords.len() != particles * dim {
            return Err(Error::invalid(format!(
                "configuration needs {} coordinates, got {}",
                particles * dim,
                coords.len()
            )));
        }
        Ok(Self {
            coords,
            particles,
            dim,
        })
    }

    /// The configuration with every coordinate zero.
    pub fn origin(particles: usize, dim: usize) -> Self {
        Self {
            coords: vec![0; particles * dim],
            particles,
            dim,
        }
    }

    /// A single point of `Z^n`, i.e. a one-particle configuration.
    pub fn point(coords: Vec<i64>) -> Self {
        let dim = coords.len().max(1);
        let coords = if coords.is_empty() { vec![0] } else { coords };
        Self {
            coords,
            particles: 1,
            dim,
        }
    }

    pub fn coords(&self) -> &[i64] {
        &self.coords
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Position of particle `j` in `Z^d`.
    pub fn particle(&self, j: usize) -> &[i64] {
        &self.coords[j * self.dim..(j + 1) * self.dim]
    }

    pub fn max_norm(&self) -> i64 {
        max_norm(&self.coords)
    }

    pub fn dist(&self, other: &Configuration) -> i64 {
        max_dist(&self.coords, &other.coords)
    }

    fn same_shape(&self, other: &Configuration) -> bool {
        self.particles == other.particles && self.dim == other.dim
    }

    /// Reorders particles: particle `j` of the result is particle `perm[j]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Configuration> {
        if perm.len() != self.particles {
            return Err(Error::invalid(
                "permutation length differs from particle count",
            ));
        }
        let mut seen = vec![false; self.particles];
        let mut coords = Vec::with_capacity(self.coords.len());
        for &p in perm {
            if p >= self.particles || seen[p] {
                return Err(Error::invalid("not a permutation"));
            }
            seen[p] = true;
            coords.extend_from_slice(self.particle(p));
        }
        Ok(Configuration {
            coords,
            particles: self.particles,
            dim: self.dim,
        })
    }

    /// Keeps only the listed particles, in the given order.
    pub fn select(&self, subset: &[usize]) -> Result<Configuration> {
        if subset.is_empty() {
            return Err(Error::invalid("particle subset is empty"));
        }
        let mut seen = vec![false; self.particles];
        let mut coords = Vec::with_capacity(subset.len() * self.dim);
        for &j in subset {
            if j >= self.particles || seen[j] {
                return Err(Error::invalid(format!("bad particle index {j}")));
            }
            seen[j] = true;
            coords.extend_from_slice(self.particle(j));
        }
        Ok(Configuration {
            coords,
            particles: subset.len(),
            dim: self.dim,
        })
    }
}

pub fn max_norm(v: &[i64]) -> i64 {
    v.iter().map(|c| c.abs()).max().unwrap_or(0)
}

pub fn max_dist(a: &[i64], b: &[i64]) -> i64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .max()
        .unwrap_or(0)
}

/// True when all particles sit on the same site (the principal diagonal).
pub fn is_diagonal(x: &Configuration) -> bool {
    (1..x.particles()).all(|j| x.particle(j) == x.particle(0))
}

/// Symmetrized distance `min_τ ‖x − τ(y)‖∞` over all particle permutations.
///
/// Computed by exhaustive scan; min-of-max over permutations is a bottleneck
/// assignment, so no linear-assignment shortcut applies.
pub fn sym_dist(x: &Configuration, y: &Configuration) -> Result<i64> {
    if !x.same_shape(y) {
        return Err(Error::invalid(
            "configurations differ in particle count or dimension",
        ));
    }
    let n = x.particles();
    if n > MAX_SYM_PARTICLES {
        return Err(Error::invalid(format!(
            "symmetrized distance supports at most {MAX_SYM_PARTICLES} particles, got {n}"
        )));
    }
    // pair[i][j] = distance between particle i of x and particle j of y
    let pair: Vec<Vec<i64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| max_dist(x.particle(i), y.particle(j)))
                .collect()
        })
        .collect();
    let mut best = i64::MAX;
    for_each_permutation(n, |perm| {
        let cost = perm
            .iter()
            .enumerate()
            .map(|(i, &j)| pair[i][j])
            .max()
            .unwrap_or(0);
        best = best.min(cost);
    });
    Ok(best)
}

/// Whether `d_S(x, y) > multiplier · radius`.
///
/// Both the `2nL_k` spacing of the pair estimates and the `2NL` hypothesis of
/// the two-volume eigenvalue bound are instances with different multipliers.
pub fn are_distant(
    x: &Configuration,
    y: &Configuration,
    multiplier: u32,
    radius: u32,
) -> Result<bool> {
    Ok(sym_dist(x, y)? > i64::from(multiplier) * i64::from(radius))
}

/// Calls `f` once for every permutation of `0..n` (Heap's algorithm).
pub fn for_each_permutation(n: usize, mut f: impl FnMut(&[usize])) {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    f(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            f(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryKind {
    /// Points at distance exactly `L` from the center.
    Inner,
    /// Points at distance exactly `L + 1` from the center.
    Outer,
    /// Hopping bonds `(x, x')` with `x` on the inner and `x'` on the outer boundary.
    Edge,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Boundary {
    Points(Vec<Configuration>),
    Edges(Vec<(Configuration, Configuration)>),
}

/// The box `C_L(u) = {x : ‖x − u‖∞ ≤ L}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cube {
    center: Configuration,
    radius: u32,
}

impl Cube {
    pub fn new(center: Configuration, radius: u32) -> Self {
        Self { center, radius }
    }

    pub fn center(&self) -> &Configuration {
        &self.center
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn particles(&self) -> usize {
        self.center.particles()
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    /// Number of coordinates, `N·d`.
    pub fn rank(&self) -> usize {
        self.center.coords().len()
    }

    pub fn side(&self) -> usize {
        2 * self.radius as usize + 1
    }

    /// Cardinality `(2L+1)^{Nd}`.
    pub fn len(&self) -> usize {
        self.side().pow(self.rank() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        x.len() == self.rank() && max_dist(x, self.center.coords()) <= i64::from(self.radius)
    }

    /// Whether `other ⊆ self`.
    pub fn contains_cube(&self, other: &Cube) -> bool {
        other.rank() == self.rank()
            && max_dist(other.center.coords(), self.center.coords()) + i64::from(other.radius)
                <= i64::from(self.radius)
    }

    /// Matrix index of `x`, if it lies in the cube.
    pub fn index_of(&self, x: &[i64]) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        let side = self.side();
        let r = i64::from(self.radius);
        let mut idx = 0usize;
        for (c, u) in x.iter().zip(self.center.coords()) {
            idx = idx * side + (c - u + r) as usize;
        }
        Some(idx)
    }

    /// Writes the coordinates of point `idx` into `out`.
    pub fn coords_at(&self, mut idx: usize, out: &mut [i64]) {
        let side = self.side();
        let r = i64::from(self.radius);
        for k in (0..self.rank()).rev() {
            out[k] = self.center.coords()[k] - r + (idx % side) as i64;
            idx /= side;
        }
    }

    pub fn point(&self, idx: usize) -> Configuration {
        let mut coords = vec![0; self.rank()];
        self.coords_at(idx, &mut coords);
        Configuration {
            coords,
            particles: self.particles(),
            dim: self.dim(),
        }
    }

    /// All points in matrix-index order.
    pub fn points(&self) -> Vec<Configuration> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Flattened coordinates of all points, `rank` entries per point.
    pub fn point_table(&self) -> Vec<i64> {
        let rank = self.rank();
        let mut table = vec![0; self.len() * rank];
        for (i, chunk) in table.chunks_mut(rank).enumerate() {
            self.coords_at(i, chunk);
        }
        table
    }

    /// `‖x − u‖∞` for every point, in index order.
    pub fn radii(&self) -> Vec<u32> {
        let rank = self.rank();
        let table = self.point_table();
        table
            .chunks(rank)
            .map(|p| max_dist(p, self.center.coords()) as u32)
            .collect()
    }

    /// Indices of points with `‖x − u‖∞ ≤ r`.
    pub fn ball_indices(&self, r: u32) -> Vec<usize> {
        self.radii()
            .iter()
            .enumerate()
            .filter(|(_, &d)| d <= r)
            .map(|(i, _)| i)
            .collect()
    }

    /// Indices of the inner boundary `∂⁻`.
    pub fn inner_boundary_indices(&self) -> Vec<usize> {
        self.radii()
            .iter()
            .enumerate()
            .filter(|(_, &d)| d == self.radius)
            .map(|(i, _)| i)
            .collect()
    }

    /// Cube of radius `L + 1` with the same center.
    pub fn grown(&self, by: u32) -> Cube {
        Cube::new(self.center.clone(), self.radius + by)
    }

    pub fn boundary(&self, kind: BoundaryKind) -> Boundary {
        match kind {
            BoundaryKind::Inner => Boundary::Points(
                self.inner_boundary_indices()
                    .into_iter()
                    .map(|i| self.point(i))
                    .collect(),
            ),
            BoundaryKind::Outer => {
                let big = self.grown(1);
                Boundary::Points(
                    big.inner_boundary_indices()
                        .into_iter()
                        .map(|i| big.point(i))
                        .collect(),
                )
            }
            BoundaryKind::Edge => Boundary::Edges(self.edges()),
        }
    }

    /// Hopping bonds leaving the cube: pairs `(x, x ± e_k)` with `x` inside
    /// and `x ± e_k` outside. Both ends are at max-norm distance 1 and lie on
    /// `∂⁻` and `∂⁺` respectively.
    pub fn edges(&self) -> Vec<(Configuration, Configuration)> {
        let mut out = Vec::new();
        let r = i64::from(self.radius);
        for i in self.inner_boundary_indices() {
            let x = self.point(i);
            for k in 0..self.rank() {
                for step in [-1i64, 1] {
                    let mut y = x.coords.clone();
                    y[k] += step;
                    if (y[k] - self.center.coords()[k]).abs() > r {
                        out.push((
                            x.clone(),
                            Configuration {
                                coords: y,
                                particles: x.particles,
                                dim: x.dim,
                            },
                        ));
                    }
                }
            }
        }
        out
    }
}

/// Restriction of a cube to a subset of its particles: same radius, center
/// reduced to the chosen particle coordinates.
pub fn projection(cube: &Cube, subset: &[usize]) -> Result<Cube> {
    let center = cube.center().select(subset)?;
    Ok(Cube::new(center, cube.radius()))
}

/// `C_b(u) \ C_a(u)`. An absent inner radius means the full cube `C_b(u)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annulus {
    pub center: Vec<i64>,
    pub inner: Option<u32>,
    pub outer: u32,
}

impl Annulus {
    pub fn new(center: Vec<i64>, inner: Option<u32>, outer: u32) -> Result<Self> {
        if let Some(a) = inner {
            if a >= outer {
                return Err(Error::invalid("annulus needs inner < outer"));
            }
        }
        Ok(Self {
            center,
            inner,
            outer,
        })
    }

    /// Number of integer radii covered.
    pub fn width(&self) -> u32 {
        match self.inner {
            Some(a) => self.outer - a,
            None => self.outer + 1,
        }
    }

    pub fn contains_radius(&self, r: u32) -> bool {
        r <= self.outer && self.inner.is_none_or(|a| r > a)
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        self.contains_radius(max_dist(x, &self.center) as u32)
    }
}
