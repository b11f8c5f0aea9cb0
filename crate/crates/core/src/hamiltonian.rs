//! Finite-volume operators `H = Δ + gV + U` with Dirichlet restriction.
//!
//! `Δ` is the pure nearest-neighbour sum over the `Nd`-dimensional grid (no
//! diagonal term), `V` enters as `g Σ_j V(x_j)`, and `U` is a sum of two-body
//! terms `U₂(|x_i − x_j|)` of finite range.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldDistribution, FieldSample};
use crate::lattice::{max_dist, Configuration, Cube};

/// Norm used for inter-particle distances inside `U₂`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InteractionNorm {
    #[default]
    Max,
    L1,
}

impl InteractionNorm {
    pub fn dist(self, a: &[i64], b: &[i64]) -> i64 {
        match self {
            InteractionNorm::Max => max_dist(a, b),
            InteractionNorm::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub particles: usize,
    pub dim: usize,
    /// Disorder amplitude `g`.
    pub g: f64,
    pub distribution: FieldDistribution,
    /// `U₂(0), …, U₂(r₀)`; zero beyond the last entry.
    #[serde(default)]
    pub interaction: Vec<f64>,
    #[serde(default)]
    pub interaction_norm: InteractionNorm,
    /// Test hook: `false` drops the Laplacian entirely.
    #[serde(default = "default_true")]
    pub hopping: bool,
}

fn default_true() -> bool {
    true
}

impl ModelSpec {
    pub fn new(particles: usize, dim: usize, g: f64, distribution: FieldDistribution) -> Self {
        Self {
            particles,
            dim,
            g,
            distribution,
            interaction: Vec::new(),
            interaction_norm: InteractionNorm::Max,
            hopping: true,
        }
    }

    pub fn with_interaction(mut self, u2: Vec<f64>) -> Self {
        self.interaction = u2;
        self
    }

    pub fn without_hopping(mut self) -> Self {
        self.hopping = false;
        self
    }

    /// Same model for a subsystem of `n` particles.
    pub fn with_particles(&self, n: usize) -> Self {
        let mut s = self.clone();
        s.particles = n;
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 || self.dim == 0 {
            return Err(Error::invalid(
                "particle count and dimension must be positive",
            ));
        }
        if !self.g.is_finite() {
            return Err(Error::invalid("disorder amplitude must be finite"));
        }
        if self.interaction.iter().any(|u| !u.is_finite()) {
            return Err(Error::invalid("interaction values must be finite"));
        }
        self.distribution.validate()
    }

    /// Interaction range `r₀`.
    pub fn range(&self) -> u32 {
        self.interaction.len().saturating_sub(1) as u32
    }

    pub fn u2(&self, r: i64) -> f64 {
        usize::try_from(r)
            .ok()
            .and_then(|r| self.interaction.get(r).copied())
            .unwrap_or(0.0)
    }
}

/// `U(x) = Σ_{i<j} U₂(|x_i − x_j|)`.
pub fn interaction_energy(x: &Configuration, spec: &ModelSpec) -> f64 {
    if spec.interaction.is_empty() {
        return 0.0;
    }
    let n = x.particles();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += spec.u2(spec.interaction_norm.dist(x.particle(i), x.particle(j)));
        }
    }
    total
}

/// `H` restricted to a cube, stored as diagonal plus neighbour lists.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteVolumeOperator {
    cube: Cube,
    spec: ModelSpec,
    field_seed: u64,
    diagonal: Vec<f64>,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

pub fn assemble(
    cube: &Cube,
    field: &FieldSample,
    spec: &ModelSpec,
) -> Result<FiniteVolumeOperator> {
    spec.validate()?;
    if cube.particles() != spec.particles || cube.dim() != spec.dim {
        return Err(Error::invalid(format!(
            "cube has {} particles in dimension {}, model expects {} in {}",
            cube.particles(),
            cube.dim(),
            spec.particles,
            spec.dim
        )));
    }
    if field.dim() != spec.dim {
        return Err(Error::invalid(
            "field dimension differs from model dimension",
        ));
    }
    let rank = cube.rank();
    let table = cube.point_table();
    let mut diagonal = Vec::with_capacity(cube.len());
    for p in table.chunks(rank) {
        let x = Configuration::new(p.to_vec(), spec.particles, spec.dim)?;
        let mut v = 0.0;
        for j in 0..spec.particles {
            v += field.value(x.particle(j))?;
        }
        diagonal.push(spec.g * v + interaction_energy(&x, spec));
    }
    let (offsets, neighbors) = grid_adjacency(cube, &table, spec.hopping);
    Ok(FiniteVolumeOperator {
        cube: cube.clone(),
        spec: spec.clone(),
        field_seed: field.seed(),
        diagonal,
        offsets,
        neighbors,
    })
}

fn grid_adjacency(cube: &Cube, table: &[i64], hopping: bool) -> (Vec<usize>, Vec<u32>) {
    let rank = cube.rank();
    let n = cube.len();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut neighbors = Vec::with_capacity(if hopping { 2 * rank * n } else { 0 });
    offsets.push(0);
    let side = cube.side();
    for (i, p) in table.chunks(rank).enumerate() {
        if hopping {
            let mut stride = 1usize;
            for k in (0..rank).rev() {
                let local = (p[k] - cube.center().coords()[k] + i64::from(cube.radius())) as usize;
                if local > 0 {
                    neighbors.push((i - stride) as u32);
                }
                if local + 1 < side {
                    neighbors.push((i + stride) as u32);
                }
                stride *= side;
            }
        }
        offsets.push(neighbors.len());
    }
    // keep each row sorted for reproducible summation order
    for w in offsets.windows(2) {
        neighbors[w[0]..w[1]].sort_unstable();
    }
    (offsets, neighbors)
}

impl FiniteVolumeOperator {
    pub fn cube(&self) -> &Cube {
        &self.cube
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn field_seed(&self) -> u64 {
        self.field_seed
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Adds a potential to the diagonal (test hooks and constructed instances).
    pub fn with_diagonal(mut self, diagonal: Vec<f64>) -> Result<Self> {
        if diagonal.len() != self.dim() {
            return Err(Error::invalid(
                "diagonal length differs from operator dimension",
            ));
        }
        self.diagonal = diagonal;
        Ok(self)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diagonal[i];
            for &j in self.neighbors(i) {
                m[(i, j as usize)] = 1.0;
            }
        }
        m
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                self.diagonal[i] * x[i]
                    + self
                        .neighbors(i)
                        .iter()
                        .map(|&j| x[j as usize])
                        .sum::<f64>()
            })
            .collect()
    }

    /// Dirichlet restriction to a sub-cube: the principal submatrix on `sub`.
    pub fn restrict(&self, sub: &Cube) -> Result<FiniteVolumeOperator> {
        if !self.cube.contains_cube(sub) {
            return Err(Error::geometry(
                "sub-cube is not contained in the operator's cube",
            ));
        }
        let table = sub.point_table();
        let rank = sub.rank();
        let diagonal = table
            .chunks(rank)
            .map(|p| self.diagonal[self.cube.index_of(p).expect("contained")])
            .collect();
        let (offsets, neighbors) = grid_adjacency(sub, &table, self.spec.hopping);
        Ok(FiniteVolumeOperator {
            cube: sub.clone(),
            spec: self.spec.clone(),
            field_seed: self.field_seed,
            diagonal,
            offsets,
            neighbors,
        })
    }

    /// Exports the operator in coordinate Matrix Market form (lower triangle).
    pub fn to_matrix_market(&self) -> String {
        let mut entries = Vec::new();
        for i in 0..self.dim() {
            for &j in self.neighbors(i) {
                if (j as usize) < i {
                    entries.push((i, j as usize, 1.0));
                }
            }
            entries.push((i, i, self.diagonal[i]));
        }
        let center: Vec<String> = self
            .cube
            .center()
            .coords()
            .iter()
            .map(|c| c.to_string())
            .collect();
        let mut out = String::new();
        out.push_str("%%MatrixMarket matrix coordinate real symmetric\n");
        out.push_str(&format!(
            "% particles={} dim={} radius={} center={} field_seed={}\n",
            self.cube.particles(),
            self.cube.dim(),
            self.cube.radius(),
            center.join(","),
            self.field_seed
        ));
        out.push_str(&format!(
            "{} {} {}\n",
            self.dim(),
            self.dim(),
            entries.len()
        ));
        for (i, j, v) in entries {
            out.push_str(&format!("{} {} {:?}\n", i + 1, j + 1, v));
        }
        out
    }
}

/// A real symmetric matrix read back from Matrix Market text.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricTriplets {
    pub dim: usize,
    /// Zero-based `(row, col, value)` with `row ≥ col`.
    pub entries: Vec<(usize, usize, f64)>,
}

/// Largest dimension accepted by [`parse_matrix_market`].
pub const MATRIX_MARKET_MAX_DIM: usize = 1 << 20;

impl SymmetricTriplets {
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for &(i, j, v) in &self.entries {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        m
    }
}

/// Parses coordinate, real, symmetric Matrix Market text.
pub fn parse_matrix_market(text: &str) -> Result<SymmetricTriplets> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty input"))?;
    let banner: Vec<String> = header
        .split_whitespace()
        .map(|s| s.to_ascii_lowercase())
        .collect();
    if banner
        != [
            "%%matrixmarket",
            "matrix",
            "coordinate",
            "real",
            "symmetric",
        ]
    {
        return Err(Error::parse(
            1,
            "expected '%%MatrixMarket matrix coordinate real symmetric'",
        ));
    }
    let mut size: Option<(usize, usize)> = None;
    let mut entries = Vec::new();
    for (ln, line) in lines {
        let line_no = ln + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = t.split_whitespace().collect();
        match size {
            None => {
                if fields.len() != 3 {
                    return Err(Error::parse(line_no, "size line needs rows, cols, nnz"));
                }
                let rows = parse_usize(fields[0], line_no)?;
                let cols = parse_usize(fields[1], line_no)?;
                let nnz = parse_usize(fields[2], line_no)?;
                if rows != cols {
                    return Err(Error::parse(line_no, "symmetric matrix must be square"));
                }
                if rows > MATRIX_MARKET_MAX_DIM {
                    return Err(Error::parse(line_no, "dimension too large"));
                }
                if nnz > rows.saturating_mul(rows + 1) / 2 {
                    return Err(Error::parse(
                        line_no,
                        "more entries than a lower triangle holds",
                    ));
                }
                size = Some((rows, nnz));
                entries.reserve(nnz.min(1 << 16));
            }
            Some((dim, nnz)) => {
                if fields.len() != 3 {
                    return Err(Error::parse(line_no, "entry line needs row, col, value"));
                }
                let i = parse_usize(fields[0], line_no)?;
                let j = parse_usize(fields[1], line_no)?;
                let v: f64 = fields[2]
                    .parse()
                    .map_err(|_| Error::parse(line_no, format!("bad value '{}'", fields[2])))?;
                if i == 0 || j == 0 || i > dim || j > dim {
                    return Err(Error::parse(line_no, "index out of range"));
                }
                if i < j {
                    return Err(Error::parse(
                        line_no,
                        "symmetric storage expects row >= col",
                    ));
                }
                if !v.is_finite() {
                    return Err(Error::parse(line_no, "non-finite value"));
                }
                if entries.len() == nnz {
                    return Err(Error::parse(line_no, "more entries than declared"));
                }
                entries.push((i - 1, j - 1, v));
            }
        }
    }
    let (dim, nnz) = size.ok_or_else(|| Error::parse(1, "missing size line"))?;
    if entries.len() != nnz {
        return Err(Error::parse(
            0,
            format!("declared {nnz} entries, found {}", entries.len()),
        ));
    }
    Ok(SymmetricTriplets { dim, entries })
}

fn parse_usize(s: &str, line: usize) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::parse(line, format!("bad integer '{s}'")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{cube_sites, sample_field};

    fn free_spec(n: usize, d: usize) -> ModelSpec {
        ModelSpec::new(n, d, 0.0, FieldDistribution::standard_gaussian())
    }

    fn op(
        center: &[i64],
        n: usize,
        d: usize,
        radius: u32,
        spec: &ModelSpec,
        seed: u64,
    ) -> FiniteVolumeOperator {
        let cube = Cube::new(Configuration::new(center.to_vec(), n, d).unwrap(), radius);
        let field = sample_field(&cube_sites(&cube), &spec.distribution, seed).unwrap();
        assemble(&cube, &field, spec).unwrap()
    }

    #[test]
    fn interaction_examples() {
        let spec = free_spec(2, 1).with_interaction(vec![1.5, 1.0, 0.5]);
        let far = Configuration::new(vec![0, 3], 2, 1).unwrap();
        assert_eq!(interaction_energy(&far, &spec), 0.0);
        let same = Configuration::new(vec![3, 3], 2, 1).unwrap();
        assert_eq!(interaction_energy(&same, &spec), 1.5);
        let spec3 = free_spec(3, 1).with_interaction(vec![1.0, 1.0, 1.0]);
        let x = Configuration::new(vec![0, 1, 2], 3, 1).unwrap();
        assert_eq!(interaction_energy(&x, &spec3), 3.0);
    }

    #[test]
    fn interaction_norm_is_pluggable() {
        let mut spec = free_spec(2, 2).with_interaction(vec![0.0, 0.0, 7.0]);
        let x = Configuration::new(vec![0, 0, 1, 1], 2, 2).unwrap();
        assert_eq!(interaction_energy(&x, &spec), 0.0);
        spec.interaction_norm = InteractionNorm::L1;
        assert_eq!(interaction_energy(&x, &spec), 7.0);
    }

    #[test]
    fn row_degrees() {
        let h = op(&[0, 0, 0, 0], 2, 2, 2, &free_spec(2, 2), 1);
        let center = h.cube().index_of(&[0, 0, 0, 0]).unwrap();
        assert_eq!(h.neighbors(center).len(), 8);
        let corner = h.cube().index_of(&[-2, -2, -2, -2]).unwrap();
        assert_eq!(h.neighbors(corner).len(), 4);
    }

    #[test]
    fn dense_is_symmetric_with_unit_hopping() {
        let spec = ModelSpec::new(2, 1, 3.0, FieldDistribution::standard_gaussian())
            .with_interaction(vec![2.0, 1.0]);
        let h = op(&[0, 4], 2, 1, 2, &spec, 3);
        let m = h.to_dense();
        assert_eq!(m, m.transpose());
        for i in 0..h.dim() {
            for j in 0..h.dim() {
                if i != j {
                    assert!(m[(i, j)] == 0.0 || m[(i, j)] == 1.0);
                }
            }
        }
    }

    #[test]
    fn diagonal_matches_definition() {
        let spec = ModelSpec::new(2, 1, 2.0, FieldDistribution::standard_gaussian())
            .with_interaction(vec![5.0]);
        let cube = Cube::new(Configuration::new(vec![0, 1], 2, 1).unwrap(), 1);
        let field = sample_field(&cube_sites(&cube), &spec.distribution, 8).unwrap();
        let h = assemble(&cube, &field, &spec).unwrap();
        let idx = cube.index_of(&[1, 1]).unwrap();
        let v = field.get(&[1]).unwrap();
        assert_eq!(h.diagonal()[idx], 2.0 * (v + v) + 5.0);
    }

    #[test]
    fn missing_sites_rejected() {
        let spec = free_spec(1, 1);
        let cube = Cube::new(Configuration::point(vec![0]), 3);
        let field = sample_field(&[vec![0]], &spec.distribution, 0).unwrap();
        assert!(matches!(
            assemble(&cube, &field, &spec),
            Err(Error::MissingSite(_))
        ));
    }

    #[test]
    fn restriction_is_principal_submatrix() {
        let spec = ModelSpec::new(2, 1, 1.0, FieldDistribution::standard_gaussian());
        let h = op(&[0, 0], 2, 1, 3, &spec, 2);
        let sub = Cube::new(Configuration::new(vec![1, -1], 2, 1).unwrap(), 1);
        let r = h.restrict(&sub).unwrap();
        let big = h.to_dense();
        let small = r.to_dense();
        for (a, pa) in sub.points().iter().enumerate() {
            for (b, pb) in sub.points().iter().enumerate() {
                let i = h.cube().index_of(pa.coords()).unwrap();
                let j = h.cube().index_of(pb.coords()).unwrap();
                assert_eq!(small[(a, b)], big[(i, j)]);
            }
        }
        let outside = Cube::new(Configuration::new(vec![3, 0], 2, 1).unwrap(), 1);
        assert!(h.restrict(&outside).is_err());
    }

    #[test]
    fn matrix_market_round_trip() {
        let spec = ModelSpec::new(2, 1, 1.3, FieldDistribution::standard_gaussian())
            .with_interaction(vec![0.7]);
        let h = op(&[0, 2], 2, 1, 1, &spec, 4);
        let text = h.to_matrix_market();
        let parsed = parse_matrix_market(&text).unwrap();
        assert_eq!(parsed.to_dense(), h.to_dense());
    }

    #[test]
    fn matrix_market_rejects_garbage() {
        assert!(parse_matrix_market("").is_err());
        assert!(parse_matrix_market(
            "%%MatrixMarket matrix coordinate real general\n1 1 1\n1 1 1\n"
        )
        .is_err());
        let hdr = "%%MatrixMarket matrix coordinate real symmetric\n";
        assert!(parse_matrix_market(&format!("{hdr}2 2 1\n1 2 1.0\n")).is_err());
        assert!(parse_matrix_market(&format!("{hdr}2 2 2\n1 1 1.0\n")).is_err());
        assert!(parse_matrix_market(&format!("{hdr}2 2 1\n3 1 1.0\n")).is_err());
        assert!(parse_matrix_market(&format!("{hdr}2 2 1\n1 1 nan\n")).is_err());
        assert!(parse_matrix_market(&format!("{hdr}2 2 1\n1 1 2.5\n")).is_ok());
    }
}
