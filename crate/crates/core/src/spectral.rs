//! Eigendecomposition, Green functions and spectral projections.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::FiniteVolumeOperator;
use crate::lattice::Cube;

/// Largest operator dimension diagonalized densely unless overridden.
pub const DEFAULT_EIGEN_CAP: usize = 20_000;

/// Energies closer than this to an eigenvalue are rejected as resonant.
pub const RESONANCE_GUARD: f64 = 1e-12;

/// Closed real interval `[lo, hi]`; empty when `lo > hi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn is_empty(&self) -> bool {
        !(self.lo <= self.hi)
    }

    pub fn len(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.hi - self.lo
        }
    }

    pub fn contains(&self, e: f64) -> bool {
        self.lo <= e && e <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        other.is_empty() || (self.lo <= other.lo && other.hi <= self.hi)
    }
}

/// Sorted eigenvalues with matching orthonormal eigenvectors (columns).
#[derive(Clone, Debug)]
pub struct SpectralData {
    cube: Cube,
    values: Vec<f64>,
    vectors: DMatrix<f64>,
}

pub fn eigendecompose(op: &FiniteVolumeOperator) -> Result<SpectralData> {
    eigendecompose_capped(op, DEFAULT_EIGEN_CAP)
}

pub fn eigendecompose_capped(op: &FiniteVolumeOperator, cap: usize) -> Result<SpectralData> {
    let dim = op.dim();
    if dim > cap {
        return Err(Error::DimensionCap { dim, cap });
    }
    SpectralData::from_matrix(op.cube().clone(), op.to_dense())
}

/// Eigenvalues only, ascending.
pub fn eigenvalues(op: &FiniteVolumeOperator) -> Result<Vec<f64>> {
    let dim = op.dim();
    if dim > DEFAULT_EIGEN_CAP {
        return Err(Error::DimensionCap {
            dim,
            cap: DEFAULT_EIGEN_CAP,
        });
    }
    let mut v: Vec<f64> = op
        .to_dense()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

impl SpectralData {
    /// Decomposes a symmetric matrix indexed by the points of `cube`.
    pub fn from_matrix(cube: Cube, matrix: DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n || n != cube.len() {
            return Err(Error::invalid("matrix shape does not match the cube"));
        }
        let eig = SymmetricEigen::new(matrix);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[a]
                .total_cmp(&eig.eigenvalues[b])
                .then(a.cmp(&b))
        });
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let mut vectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            let col = eig.eigenvectors.column(src);
            // fix the sign so the largest entry (first on ties) is positive
            let mut pivot = 0;
            for i in 1..n {
                if col[i].abs() > col[pivot].abs() {
                    pivot = i;
                }
            }
            let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
            for i in 0..n {
                vectors[(i, dst)] = sign * col[i];
            }
        }
        Ok(Self {
            cube,
            values,
            vectors,
        })
    }

    pub fn cube(&self) -> &Cube {
        &self.cube
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index_of(&self, x: &[i64]) -> Result<usize> {
        self.cube
            .index_of(x)
            .ok_or_else(|| Error::geometry(format!("point {x:?} lies outside the cube")))
    }

    /// Distance from `e` to the spectrum.
    pub fn distance_to(&self, e: f64) -> f64 {
        nearest_distance(&self.values, e)
    }

    pub fn check_resonance(&self, e: f64) -> Result<()> {
        if self.distance_to(e) <= RESONANCE_GUARD {
            return Err(Error::ResonantEnergy {
                energy: e,
                tolerance: RESONANCE_GUARD,
            });
        }
        Ok(())
    }

    /// `G(x, y; E)` by row/column index.
    pub fn green_at(&self, e: f64, i: usize, j: usize) -> Result<f64> {
        self.check_resonance(e)?;
        let mut g = 0.0;
        for (k, &ek) in self.values.iter().enumerate() {
            g += self.vectors[(i, k)] * self.vectors[(j, k)] / (ek - e);
        }
        Ok(g)
    }

    /// The block `G(X, Y; E)` for index sets `X` (rows) and `Y` (columns).
    pub fn green_block(&self, e: f64, rows: &[usize], cols: &[usize]) -> Result<DMatrix<f64>> {
        self.check_resonance(e)?;
        let mut a = self.vectors.select_rows(rows);
        for (k, &ek) in self.values.iter().enumerate() {
            a.column_mut(k).scale_mut(1.0 / (ek - e));
        }
        let b = self.vectors.select_rows(cols);
        Ok(a * b.transpose())
    }

    /// Largest eigenvector residual `‖Hv − Ev‖` against the given matrix.
    pub fn max_residual(&self, matrix: &DMatrix<f64>) -> f64 {
        let hv = matrix * &self.vectors;
        let mut worst: f64 = 0.0;
        for k in 0..self.len() {
            let r = hv.column(k) - self.vectors.column(k) * self.values[k];
            worst = worst.max(r.norm());
        }
        worst
    }

    /// Largest entry of `VᵀV − 1`.
    pub fn orthonormality_defect(&self) -> f64 {
        let gram = self.vectors.transpose() * &self.vectors;
        let n = self.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - target).abs());
            }
        }
        worst
    }
}

fn nearest_distance(sorted: &[f64], e: f64) -> f64 {
    let pos = sorted.partition_point(|&v| v < e);
    let mut best = f64::INFINITY;
    if pos < sorted.len() {
        best = best.min((sorted[pos] - e).abs());
    }
    if pos > 0 {
        best = best.min((sorted[pos - 1] - e).abs());
    }
    best
}

/// `G(x, y; E)` from the spectral sum.
pub fn green_entry(sd: &SpectralData, e: f64, x: &[i64], y: &[i64]) -> Result<f64> {
    sd.green_at(e, sd.index_of(x)?, sd.index_of(y)?)
}

/// `(H − E)⁻¹` by dense LU, for cross-checks and one-off energies.
pub fn resolvent_direct(op: &FiniteVolumeOperator, e: f64) -> Result<DMatrix<f64>> {
    let mut m = op.to_dense();
    for i in 0..m.nrows() {
        m[(i, i)] -= e;
    }
    m.lu().try_inverse().ok_or(Error::ResonantEnergy {
        energy: e,
        tolerance: 0.0,
    })
}

/// One Green column `G(·, y; E)` by solving `(H − E) g = δ_y`.
pub fn green_column(op: &FiniteVolumeOperator, e: f64, y: &[i64]) -> Result<DVector<f64>> {
    let j = op
        .cube()
        .index_of(y)
        .ok_or_else(|| Error::geometry(format!("point {y:?} lies outside the cube")))?;
    let mut m = op.to_dense();
    for i in 0..m.nrows() {
        m[(i, i)] -= e;
    }
    let mut rhs = DVector::zeros(m.nrows());
    rhs[j] = 1.0;
    m.lu().solve(&rhs).ok_or(Error::ResonantEnergy {
        energy: e,
        tolerance: 0.0,
    })
}

fn check_gri_geometry(outer: &Cube, inner: &Cube) -> Result<()> {
    if outer.particles() != inner.particles() || outer.dim() != inner.dim() {
        return Err(Error::geometry(
            "inner and outer cubes live in different spaces",
        ));
    }
    if !outer.contains_cube(&inner.grown(1)) {
        return Err(Error::geometry(
            "inner cube must sit strictly inside the outer cube (its outer boundary included)",
        ));
    }
    Ok(())
}

/// Residual of the geometric resolvent identity
/// `G_Λ(x,y) = −Σ_{(v,v')} G_C(x,v) G_Λ(v',y)` for `x ∈ C`, `y ∈ Λ \ C`,
/// the sum running over hopping bonds leaving `C`.
pub fn gri_residual(
    outer: &FiniteVolumeOperator,
    inner: &Cube,
    e: f64,
    x: &[i64],
    y: &[i64],
) -> Result<f64> {
    check_gri_geometry(outer.cube(), inner)?;
    if !inner.contains(x) {
        return Err(Error::geometry("x must lie in the inner cube"));
    }
    if !outer.cube().contains(y) || inner.contains(y) {
        return Err(Error::geometry(
            "y must lie in the outer cube but outside the inner one",
        ));
    }
    let big = eigendecompose(outer)?;
    let small = eigendecompose(&outer.restrict(inner)?)?;
    gri_residual_with(&big, &small, e, x, y)
}

/// As [`gri_residual`], reusing decompositions of the outer operator and of
/// its restriction to the inner cube.
pub fn gri_residual_with(
    big: &SpectralData,
    small: &SpectralData,
    e: f64,
    x: &[i64],
    y: &[i64],
) -> Result<f64> {
    check_gri_geometry(big.cube(), small.cube())?;
    let lhs = green_entry(big, e, x, y)?;
    let mut rhs = 0.0;
    for (v, w) in small.cube().edges() {
        rhs -= green_entry(small, e, x, v.coords())? * green_entry(big, e, w.coords(), y)?;
    }
    Ok((lhs - rhs).abs())
}

/// Residual of `Ψ(x) = −Σ_{(v,v')} G_C(x,v;E) Ψ(v')` for an eigenpair
/// `(E, Ψ)` of the outer operator, `x` in the inner cube.
pub fn gri_eigenfunction_residual(
    big: &SpectralData,
    small: &SpectralData,
    k: usize,
    x: &[i64],
) -> Result<f64> {
    check_gri_geometry(big.cube(), small.cube())?;
    if !small.cube().contains(x) {
        return Err(Error::geometry("x must lie in the inner cube"));
    }
    if k >= big.len() {
        return Err(Error::invalid("eigenpair index out of range"));
    }
    let e = big.eigenvalues()[k];
    let psi = big.eigenvectors().column(k);
    let lhs = psi[big.index_of(x)?];
    let mut rhs = 0.0;
    for (v, w) in small.cube().edges() {
        rhs -= green_entry(small, e, x, v.coords())? * psi[big.index_of(w.coords())?];
    }
    Ok((lhs - rhs).abs())
}

/// `min |a − b|` over `a ∈ s1`, `b ∈ s2`, both sorted ascending.
pub fn spectral_distance(s1: &[f64], s2: &[f64]) -> Result<f64> {
    if s1.is_empty() || s2.is_empty() {
        return Err(Error::invalid(
            "spectral distance needs two nonempty spectra",
        ));
    }
    let (mut i, mut j) = (0, 0);
    let mut best = f64::INFINITY;
    while i < s1.len() && j < s2.len() {
        best = best.min((s1[i] - s2[j]).abs());
        if s1[i] < s2[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    Ok(best)
}

/// Number of eigenvalues in `interval`, i.e. `tr P_I(H)`.
pub fn projection_trace(eigenvalues: &[f64], interval: &Interval) -> usize {
    if interval.is_empty() {
        return 0;
    }
    let lo = eigenvalues.partition_point(|&v| v < interval.lo);
    let hi = eigenvalues.partition_point(|&v| v <= interval.hi);
    hi.saturating_sub(lo)
}

/// `η(H)(x, y) = Σ_n η(E_n) Ψ_n(x) Ψ_n(y)`.
pub fn correlator_entry(
    sd: &SpectralData,
    eta: impl Fn(f64) -> f64,
    x: &[i64],
    y: &[i64],
) -> Result<f64> {
    let i = sd.index_of(x)?;
    let j = sd.index_of(y)?;
    let v = sd.eigenvectors();
    Ok(sd
        .eigenvalues()
        .iter()
        .enumerate()
        .map(|(k, &ek)| eta(ek) * v[(i, k)] * v[(j, k)])
        .sum())
}

/// The column `η(H) δ_y` as a vector over the cube.
pub fn correlator_column(
    sd: &SpectralData,
    eta: impl Fn(f64) -> f64,
    y: &[i64],
) -> Result<DVector<f64>> {
    let j = sd.index_of(y)?;
    let v = sd.eigenvectors();
    let weights = DVector::from_iterator(
        sd.len(),
        sd.eigenvalues()
            .iter()
            .enumerate()
            .map(|(k, &ek)| eta(ek) * v[(j, k)]),
    );
    Ok(v * weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{cube_sites, sample_field, FieldDistribution};
    use crate::hamiltonian::{assemble, ModelSpec};
    use crate::lattice::Configuration;

    fn build(
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
    fn free_path_spectrum() {
        let spec = ModelSpec::new(1, 1, 0.0, FieldDistribution::standard_gaussian());
        let op = build(&[0], 1, 1, 7, &spec, 0);
        let sd = eigendecompose(&op).unwrap();
        let n = op.dim();
        let mut expected: Vec<f64> = (1..=n)
            .map(|k| 2.0 * (std::f64::consts::PI * k as f64 / (n as f64 + 1.0)).cos())
            .collect();
        expected.sort_by(f64::total_cmp);
        for (a, b) in sd.eigenvalues().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn suppressed_hopping_gives_diagonal() {
        let spec = ModelSpec::new(1, 1, 0.0, FieldDistribution::standard_gaussian())
            .with_interaction(vec![2.5])
            .without_hopping();
        // single particle: U vanishes, so shift the diagonal by hand
        let op = build(&[0], 1, 1, 3, &spec, 0)
            .with_diagonal(vec![2.5; 7])
            .unwrap();
        let sd = eigendecompose(&op).unwrap();
        assert!(sd.eigenvalues().iter().all(|&e| e == 2.5));
        assert_eq!(green_entry(&sd, 0.0, &[0], &[1]).unwrap(), 0.0);
    }

    #[test]
    fn decomposition_invariants() {
        let spec = ModelSpec::new(2, 1, 2.0, FieldDistribution::standard_gaussian())
            .with_interaction(vec![1.0, 0.5]);
        let op = build(&[0, 3], 2, 1, 3, &spec, 11);
        let sd = eigendecompose(&op).unwrap();
        let m = op.to_dense();
        assert!(sd.max_residual(&m) < 1e-9 * m.norm());
        assert!(sd.orthonormality_defect() < 1e-10);
        assert!(sd.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
        let only = eigenvalues(&op).unwrap();
        for (a, b) in only.iter().zip(sd.eigenvalues()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn one_point_green() {
        let spec = ModelSpec::new(1, 1, 1.0, FieldDistribution::standard_gaussian());
        let op = build(&[4], 1, 1, 0, &spec, 5);
        let v = op.diagonal()[0];
        let sd = eigendecompose(&op).unwrap();
        let g = green_entry(&sd, 0.25, &[4], &[4]).unwrap();
        assert!((g - 1.0 / (v - 0.25)).abs() < 1e-14);
    }

    #[test]
    fn green_matches_inverse_and_is_symmetric() {
        let spec = ModelSpec::new(2, 1, 1.5, FieldDistribution::standard_gaussian());
        let op = build(&[0, 1], 2, 1, 2, &spec, 3);
        let sd = eigendecompose(&op).unwrap();
        let inv = resolvent_direct(&op, 0.37).unwrap();
        let pts = op.cube().points();
        for (i, x) in pts.iter().enumerate() {
            for (j, y) in pts.iter().enumerate() {
                let g = green_entry(&sd, 0.37, x.coords(), y.coords()).unwrap();
                assert!((g - inv[(i, j)]).abs() <= 1e-8 * inv[(i, j)].abs().max(1.0));
                let gt = green_entry(&sd, 0.37, y.coords(), x.coords()).unwrap();
                assert!((g - gt).abs() < 1e-10);
            }
        }
        let col = green_column(&op, 0.37, pts[3].coords()).unwrap();
        for i in 0..op.dim() {
            assert!((col[i] - inv[(i, 3)]).abs() < 1e-10);
        }
    }

    #[test]
    fn resonant_energy_rejected() {
        let spec = ModelSpec::new(1, 1, 1.0, FieldDistribution::standard_gaussian());
        let op = build(&[0], 1, 1, 3, &spec, 1);
        let sd = eigendecompose(&op).unwrap();
        let e = sd.eigenvalues()[2];
        assert!(matches!(
            green_entry(&sd, e, &[0], &[0]),
            Err(Error::ResonantEnergy { .. })
        ));
    }

    #[test]
    fn gri_identity_holds() {
        let spec = ModelSpec::new(2, 1, 1.0, FieldDistribution::standard_gaussian())
            .with_interaction(vec![0.8, 0.3]);
        let op = build(&[0, 0], 2, 1, 4, &spec, 9);
        let inner = Cube::new(Configuration::new(vec![1, -1], 2, 1).unwrap(), 2);
        let r = gri_residual(&op, &inner, 0.123, &[1, 0], &[-4, 4]).unwrap();
        assert!(r < 1e-8, "residual {r}");
        let big = eigendecompose(&op).unwrap();
        let small = eigendecompose(&op.restrict(&inner).unwrap()).unwrap();
        for k in [0, 17, 40] {
            assert!(gri_eigenfunction_residual(&big, &small, k, &[2, -2]).unwrap() < 1e-8);
        }
    }

    #[test]
    fn gri_geometry_errors() {
        let spec = ModelSpec::new(1, 1, 1.0, FieldDistribution::standard_gaussian());
        let op = build(&[0], 1, 1, 4, &spec, 2);
        let touching = Cube::new(Configuration::point(vec![1]), 3);
        assert!(matches!(
            gri_residual(&op, &touching, 0.1, &[1], &[-4]),
            Err(Error::Geometry(_))
        ));
        let inner = Cube::new(Configuration::point(vec![0]), 1);
        assert!(gri_residual(&op, &inner, 0.1, &[0], &[1]).is_err());
        assert!(gri_residual(&op, &inner, 0.1, &[3], &[4]).is_err());
    }

    #[test]
    fn spectral_distance_examples() {
        assert_eq!(spectral_distance(&[0.0, 1.0], &[1.0, 5.0]).unwrap(), 0.0);
        assert_eq!(spectral_distance(&[0.0], &[3.0]).unwrap(), 3.0);
        assert!(spectral_distance(&[], &[1.0]).is_err());
    }

    #[test]
    fn trace_examples() {
        let ev = [-1.0, 0.0, 0.5, 2.0];
        assert_eq!(projection_trace(&ev, &Interval::new(3.0, 4.0)), 0);
        assert_eq!(projection_trace(&ev, &Interval::new(-5.0, 5.0)), 4);
        assert_eq!(projection_trace(&ev, &Interval::new(0.0, 0.5)), 2);
        assert_eq!(projection_trace(&ev, &Interval::new(1.0, 0.0)), 0);
    }

    #[test]
    fn correlator_examples() {
        let spec = ModelSpec::new(1, 2, 1.0, FieldDistribution::standard_gaussian());
        let op = build(&[0, 0], 1, 2, 2, &spec, 4);
        let sd = eigendecompose(&op).unwrap();
        let one = correlator_entry(&sd, |_| 1.0, &[1, 0], &[1, 0]).unwrap();
        assert!((one - 1.0).abs() < 1e-12);
        assert_eq!(
            correlator_entry(&sd, |_| 0.0, &[1, 0], &[0, 0]).unwrap(),
            0.0
        );
        let i = Interval::new(-1.0, 1.0);
        let v = sd.eigenvectors();
        let mut proj = DMatrix::zeros(sd.len(), sd.len());
        for (k, &e) in sd.eigenvalues().iter().enumerate() {
            if i.contains(e) {
                proj += v.column(k) * v.column(k).transpose();
            }
        }
        let a = sd.index_of(&[1, 0]).unwrap();
        let b = sd.index_of(&[-1, 2]).unwrap();
        let c = correlator_entry(
            &sd,
            |e| if i.contains(e) { 1.0 } else { 0.0 },
            &[1, 0],
            &[-1, 2],
        )
        .unwrap();
        assert!((c - proj[(a, b)]).abs() < 1e-12);
        let col =
            correlator_column(&sd, |e| if i.contains(e) { 1.0 } else { 0.0 }, &[-1, 2]).unwrap();
        assert!((col[a] - proj[(a, b)]).abs() < 1e-12);
    }
}
