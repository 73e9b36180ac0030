//! Representations of the cyclic groups `C_n` and of `SO(2)` on description
//! space: fixed steerers and Lie generators, exponentiation, powers, real
//! irrep decomposition and the invariant projector.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, EigenCluster};

/// Closure tolerance for a `D`-dimensional representation.
pub fn tau_rep(dim: usize) -> f64 {
    1e-9 * dim as f64
}

/// Reconstruction tolerance for irrep decompositions of dimension `D`.
pub fn tau_dec(dim: usize) -> f64 {
    1e-7 * dim as f64
}

/// Largest rounding correction accepted before a block is flagged.
pub const ADMISSIBLE_CORRECTION: f64 = 0.1;

/// The matrix `ρ(g)` of a generator `g` of `C_n` acting on description space.
#[derive(Debug, Clone, PartialEq)]
pub struct Steerer {
    matrix: DMatrix<f64>,
    group_order: usize,
}

impl Steerer {
    pub fn new(matrix: DMatrix<f64>, group_order: usize) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidInput(format!(
                "steerer must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if group_order == 0 {
            return Err(Error::InvalidInput("group order must be positive".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("steerer has non-finite entries".into()));
        }
        Ok(Self { matrix, group_order })
    }

    pub fn identity(dim: usize, group_order: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
            group_order: group_order.max(1),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn group_order(&self) -> usize {
        self.group_order
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }
}

/// A Lie algebra element `dς` generating an `SO(2)` representation through
/// `ς(α) = expm(α dς)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LieGenerator {
    matrix: DMatrix<f64>,
}

impl LieGenerator {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidInput("generator must be square".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("generator has non-finite entries".into()));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// A rotation of the image plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarRotation {
    angle: f64,
    matrix: Matrix2<f64>,
}

impl PlanarRotation {
    /// Rotation by `angle` radians, anticlockwise. Angles that are a multiple
    /// of a quarter turn (to within 1e-12 rad) produce exact integer matrices.
    pub fn new(angle: f64) -> Self {
        let angle = angle.rem_euclid(2.0 * PI);
        let quarters = angle / (PI / 2.0);
        let nearest = quarters.round();
        if (quarters - nearest).abs() * (PI / 2.0) < 1e-12 {
            return Self::quarter(nearest as i64);
        }
        let (s, c) = angle.sin_cos();
        Self {
            angle,
            matrix: Matrix2::new(c, -s, s, c),
        }
    }

    /// Exact rotation by `k` quarter turns, `R₉₀^k`.
    pub fn quarter(k: i64) -> Self {
        let k = k.rem_euclid(4);
        let matrix = match k {
            0 => Matrix2::new(1.0, 0.0, 0.0, 1.0),
            1 => Matrix2::new(0.0, -1.0, 1.0, 0.0),
            2 => Matrix2::new(-1.0, 0.0, 0.0, -1.0),
            _ => Matrix2::new(0.0, 1.0, -1.0, 0.0),
        };
        Self {
            angle: k as f64 * PI / 2.0,
            matrix,
        }
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn matrix(&self) -> &Matrix2<f64> {
        &self.matrix
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.matrix;
        (m[(0, 0)] * x + m[(0, 1)] * y, m[(1, 0)] * x + m[(1, 1)] * y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FixedSteererKind {
    Inv,
    Freq1,
    Perm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FixedGeneratorKind {
    Inv,
    Freq1,
    Spread,
}

/// Which group a matrix is interpreted for when it is decomposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupKind {
    /// `ρ(g)` for the generator `g` of `C_n`.
    Cyclic(usize),
    /// A Lie algebra generator `dς` of `SO(2)`.
    So2Generator,
}

fn quarter_turn_block() -> [[f64; 2]; 2] {
    [[0.0, -1.0], [1.0, 0.0]]
}

fn set_rotation_generator_blocks(m: &mut DMatrix<f64>, start: usize, count: usize, freq: f64) {
    for b in 0..count {
        let o = start + 2 * b;
        m[(o, o + 1)] = -freq;
        m[(o + 1, o)] = freq;
    }
}

/// One of the fixed `C_4` steerers: identity, frequency-1 rotation blocks, or
/// cyclic 4x4 permutation blocks.
pub fn build_fixed_steerer(kind: FixedSteererKind, dim: usize) -> Result<Steerer> {
    if dim == 0 {
        return Err(Error::InvalidInput("dimension must be positive".into()));
    }
    let mut m = DMatrix::<f64>::zeros(dim, dim);
    match kind {
        FixedSteererKind::Inv => m.fill_with_identity(),
        FixedSteererKind::Freq1 => {
            if dim % 2 != 0 {
                return Err(Error::InvalidInput(format!("Freq1 steerer needs even dimension, got {dim}")));
            }
            let blk = quarter_turn_block();
            for b in 0..dim / 2 {
                for r in 0..2 {
                    for c in 0..2 {
                        m[(2 * b + r, 2 * b + c)] = blk[r][c];
                    }
                }
            }
        }
        FixedSteererKind::Perm => {
            if dim % 4 != 0 {
                return Err(Error::InvalidInput(format!(
                    "Perm steerer needs dimension divisible by 4, got {dim}"
                )));
            }
            for b in 0..dim / 4 {
                for r in 0..4 {
                    m[(4 * b + r, 4 * b + (r + 1) % 4)] = 1.0;
                }
            }
        }
    }
    Steerer::new(m, 4)
}

/// Number of invariant dimensions and of 2x2 blocks per frequency 1..=6 of the
/// Spread generator. `D = 256` gives the 40 / 18x6 layout; other dimensions
/// use ⌈0.16 D⌉ invariant dimensions (lowered by one when the remainder would
/// be odd) and split the remaining pairs evenly, leftovers to frequency 1.
pub fn spread_layout(dim: usize) -> (usize, [usize; 6]) {
    let mut invariant = (0.16 * dim as f64).ceil() as usize;
    invariant = invariant.min(dim);
    if (dim - invariant) % 2 != 0 {
        invariant -= 1;
    }
    let pairs = (dim - invariant) / 2;
    let mut counts = [pairs / 6; 6];
    counts[0] += pairs % 6;
    (invariant, counts)
}

/// One of the fixed `SO(2)` generators. `Spread` is defined for `D = 256`;
/// pass `allow_generalized` to use the deterministic layout of
/// [`spread_layout`] for other dimensions.
pub fn build_fixed_generator(kind: FixedGeneratorKind, dim: usize, allow_generalized: bool) -> Result<LieGenerator> {
    if dim == 0 {
        return Err(Error::InvalidInput("dimension must be positive".into()));
    }
    let mut m = DMatrix::<f64>::zeros(dim, dim);
    match kind {
        FixedGeneratorKind::Inv => {}
        FixedGeneratorKind::Freq1 => {
            if dim % 2 != 0 {
                return Err(Error::InvalidInput(format!("Freq1 generator needs even dimension, got {dim}")));
            }
            set_rotation_generator_blocks(&mut m, 0, dim / 2, 1.0);
        }
        FixedGeneratorKind::Spread => {
            if dim != 256 && !allow_generalized {
                return Err(Error::InvalidInput(format!(
                    "Spread generator is defined for D = 256; got {dim} without generalization"
                )));
            }
            let (invariant, counts) = spread_layout(dim);
            let mut offset = invariant;
            for (j, &count) in counts.iter().enumerate() {
                set_rotation_generator_blocks(&mut m, offset, count, (j + 1) as f64);
                offset += 2 * count;
            }
        }
    }
    LieGenerator::new(m)
}

/// `expm(angle * gen)`.
pub fn exp_generator(gen: &LieGenerator, angle: f64) -> Result<DMatrix<f64>> {
    if !angle.is_finite() {
        return Err(Error::InvalidInput("angle must be finite".into()));
    }
    linalg::expm(&(gen.matrix() * angle))
}

/// The `C_ℓ` steerer `expm((2π/ℓ) dς)`.
pub fn discretize_so2(gen: &LieGenerator, order: usize) -> Result<Steerer> {
    if order == 0 {
        return Err(Error::InvalidInput("group order must be at least 1".into()));
    }
    let m = exp_generator(gen, 2.0 * PI / order as f64)?;
    Steerer::new(m, order)
}

/// Integer matrix power by repeated squaring.
pub fn matrix_power(m: &DMatrix<f64>, mut k: usize) -> DMatrix<f64> {
    let n = m.nrows();
    let mut result = DMatrix::<f64>::identity(n, n);
    let mut base = m.clone();
    let mut first = true;
    while k > 0 {
        if k & 1 == 1 {
            result = if first { base.clone() } else { &result * &base };
            first = false;
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
        }
    }
    result
}

/// `ρ(g)^k` with `k` reduced modulo the group order (negative `k` allowed).
pub fn steerer_power(s: &Steerer, k: i64) -> DMatrix<f64> {
    let n = s.group_order() as i64;
    matrix_power(s.matrix(), k.rem_euclid(n) as usize)
}

/// `‖ρ(g)^n − I‖_F`.
pub fn verify_representation(s: &Steerer) -> f64 {
    linalg::identity_defect(&matrix_power(s.matrix(), s.group_order()))
}

/// Eigenvalues sorted by magnitude, then argument.
pub fn spectrum(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let mut evs = linalg::eigenvalues(m)?;
    evs.sort_by(|a, b| a.norm().total_cmp(&b.norm()).then(a.arg().total_cmp(&b.arg())));
    Ok(evs)
}

/// Entries i.i.d. uniform in `(−D^{−1/2}, D^{−1/2})`.
pub fn random_steerer_init(dim: usize, seed: u64) -> DMatrix<f64> {
    let bound = 1.0 / (dim.max(1) as f64).sqrt();
    let dist = Uniform::new(-bound, bound);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(dim * dim);
    while data.len() < dim * dim {
        let v = dist.sample(&mut rng);
        if v > -bound {
            data.push(v);
        }
    }
    DMatrix::from_row_slice(dim, dim, &data)
}

/// Projector `(1/n) Σ_k ρ(g)^k` onto the invariant subspace.
pub fn invariant_projector(s: &Steerer) -> Result<DMatrix<f64>> {
    let residual = verify_representation(s);
    if residual > tau_rep(s.dim()) {
        return Err(Error::InvalidInput(format!(
            "steerer is not a representation of C_{}: residual {residual:.3e}",
            s.group_order()
        )));
    }
    let d = s.dim();
    let mut acc = DMatrix::<f64>::identity(d, d);
    let mut pow = DMatrix::<f64>::identity(d, d);
    for _ in 1..s.group_order() {
        pow = &pow * s.matrix();
        acc += &pow;
    }
    Ok(acc / s.group_order() as f64)
}

/// A real irreducible block of a decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrrepBlock {
    pub size: usize,
    pub frequency: i64,
    /// The measured eigenvalue (upper half-plane representative).
    pub eigenvalue: (f64, f64),
    /// Distance between the measured eigenvalue and the lattice point of its
    /// rounded frequency, in log space for `C_n` and linear space for generators.
    pub correction: f64,
    pub admissible: bool,
}

impl IrrepBlock {
    /// The block as a matrix: `(λ)` or `[[a, −b], [b, a]]`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let (a, b) = self.eigenvalue;
        if self.size == 1 {
            DMatrix::from_element(1, 1, a)
        } else {
            DMatrix::from_row_slice(2, 2, &[a, -b, b, a])
        }
    }
}

/// `M = Q⁻¹ · blockdiag(blocks) · Q`.
#[derive(Debug, Clone)]
pub struct IrrepDecomposition {
    pub group: GroupKind,
    /// The change of basis `Q`.
    pub basis: DMatrix<f64>,
    /// `Q⁻¹`, whose columns are the real invariant directions.
    pub basis_inverse: DMatrix<f64>,
    pub blocks: Vec<IrrepBlock>,
    pub residual: f64,
}

impl IrrepDecomposition {
    /// One frequency per real dimension.
    pub fn frequencies(&self) -> Vec<i64> {
        self.blocks
            .iter()
            .flat_map(|b| std::iter::repeat(b.frequency).take(b.size))
            .collect()
    }

    /// Number of real dimensions carrying each frequency.
    pub fn frequency_histogram(&self) -> BTreeMap<i64, usize> {
        let mut hist = BTreeMap::new();
        for b in &self.blocks {
            *hist.entry(b.frequency).or_insert(0) += b.size;
        }
        hist
    }

    pub fn block_diagonal(&self) -> DMatrix<f64> {
        let d = self.basis.nrows();
        let mut out = DMatrix::<f64>::zeros(d, d);
        let mut o = 0;
        for b in &self.blocks {
            out.view_mut((o, o), (b.size, b.size)).copy_from(&b.matrix());
            o += b.size;
        }
        out
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.basis_inverse * self.block_diagonal() * &self.basis
    }

    pub fn non_admissible(&self) -> impl Iterator<Item = &IrrepBlock> {
        self.blocks.iter().filter(|b| !b.admissible)
    }

    /// Rows of `Q` belonging to blocks of the given frequency: the linear map
    /// taking descriptions to their coordinates in that isotypic component.
    pub fn frequency_coordinates(&self, frequency: i64) -> DMatrix<f64> {
        let mut rows = Vec::new();
        let mut o = 0;
        for b in &self.blocks {
            if b.frequency == frequency {
                rows.extend(o..o + b.size);
            }
            o += b.size;
        }
        self.basis.select_rows(rows.iter())
    }
}

/// Frequency of an eigenvalue and its rounding correction.
pub(crate) fn classify_eigenvalue(value: Complex64, group: GroupKind) -> (i64, f64) {
    match group {
        GroupKind::Cyclic(n) => {
            let quantum = 2.0 * PI / n as f64;
            let theta = value.arg().abs();
            let j = (theta / quantum).round();
            let log_mag = if value.norm() > 0.0 { value.norm().ln() } else { f64::INFINITY };
            let correction = log_mag.hypot(theta - j * quantum);
            (j as i64, correction)
        }
        GroupKind::So2Generator => {
            let j = value.im.abs().round();
            (j as i64, value.re.hypot(value.im.abs() - j))
        }
    }
}

/// Tolerance used to group numerically equal eigenvalues.
pub(crate) fn cluster_tolerance(evs: &[Complex64]) -> f64 {
    let radius = evs.iter().map(|e| e.norm()).fold(0.0, f64::max);
    1e-6 * radius.max(1.0)
}

/// Block-diagonalize a representation matrix over the reals.
///
/// Conjugate eigenvalue pairs become 2x2 blocks `[[a, −b], [b, a]]` with
/// `b > 0`, so every frequency is reported with a nonnegative sign. Blocks are
/// ordered by frequency, then size, then eigenvalue.
pub fn decompose_irreps(m: &DMatrix<f64>, group: GroupKind) -> Result<IrrepDecomposition> {
    if !m.is_square() {
        return Err(Error::InvalidInput("matrix must be square".into()));
    }
    if let GroupKind::Cyclic(0) = group {
        return Err(Error::InvalidInput("group order must be positive".into()));
    }
    let d = m.nrows();
    let evs = linalg::eigenvalues(m)?;
    let tol = cluster_tolerance(&evs);
    let clusters = linalg::eigen_clusters(m, &evs, tol)?;

    let mut tagged: Vec<(i64, f64, EigenCluster)> = clusters
        .into_iter()
        .map(|c| {
            let (j, corr) = classify_eigenvalue(c.value, group);
            (j, corr, c)
        })
        .collect();
    tagged.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(a.2.is_real().cmp(&b.2.is_real()).reverse())
            .then(a.2.value.re.total_cmp(&b.2.value.re))
            .then(a.2.value.im.total_cmp(&b.2.value.im))
    });

    let mut v = DMatrix::<f64>::zeros(d, d);
    let mut blocks = Vec::new();
    let mut col = 0;
    for (j, corr, c) in &tagged {
        let size = if c.is_real() { 1 } else { 2 };
        let count = c.dimension() / size;
        for _ in 0..count {
            blocks.push(IrrepBlock {
                size,
                frequency: *j,
                eigenvalue: (c.value.re, c.value.im),
                correction: *corr,
                admissible: *corr <= ADMISSIBLE_CORRECTION,
            });
        }
        v.view_mut((0, col), (d, c.dimension())).copy_from(&c.basis);
        col += c.dimension();
    }
    if col != d {
        return Err(Error::DecompositionFailed {
            residual: f64::INFINITY,
            tolerance: tau_dec(d),
        });
    }
    let basis = v.clone().try_inverse().ok_or(Error::DecompositionFailed {
        residual: f64::INFINITY,
        tolerance: tau_dec(d),
    })?;
    let mut dec = IrrepDecomposition {
        group,
        basis,
        basis_inverse: v,
        blocks,
        residual: 0.0,
    };
    dec.residual = (dec.reconstruct() - m).norm();
    if !dec.residual.is_finite() || dec.residual > tau_dec(d) {
        return Err(Error::DecompositionFailed {
            residual: dec.residual,
            tolerance: tau_dec(d),
        });
    }
    Ok(dec)
}

/// Coordinates of descriptions in the frequency-1 blocks of a `C_n` steerer:
/// a `2m × D` matrix whose consecutive row pairs each rotate by `2π/n` under
/// the steerer.
pub fn frequency_one_coordinates(s: &Steerer) -> Result<DMatrix<f64>> {
    let dec = decompose_irreps(s.matrix(), GroupKind::Cyclic(s.group_order()))?;
    let f = dec.frequency_coordinates(1);
    if f.nrows() == 0 {
        return Err(Error::InvalidInput("steerer has no frequency-1 component".into()));
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count_near(evs: &[Complex64], target: Complex64) -> usize {
        evs.iter().filter(|e| (**e - target).norm() < 1e-8).count()
    }

    #[test]
    fn perm_256_eigenvalues() {
        let s = build_fixed_steerer(FixedSteererKind::Perm, 256).unwrap();
        let evs = spectrum(s.matrix()).unwrap();
        assert_eq!(evs.len(), 256);
        for target in [
            Complex64::new(1.0, 0.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(0.0, -1.0),
        ] {
            assert_eq!(count_near(&evs, target), 64);
        }
        assert_eq!(s.group_order(), 4);
    }

    #[test]
    fn inv_steerer_is_identity() {
        let s = build_fixed_steerer(FixedSteererKind::Inv, 8).unwrap();
        assert_eq!(s.matrix(), &DMatrix::<f64>::identity(8, 8));
    }

    #[test]
    fn freq1_square_is_minus_identity() {
        let s = build_fixed_steerer(FixedSteererKind::Freq1, 4).unwrap();
        let expected = DMatrix::from_row_slice(4, 4, &[
            0.0, -1.0, 0.0, 0.0, //
            1.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, -1.0, //
            0.0, 0.0, 1.0, 0.0,
        ]);
        assert_eq!(s.matrix(), &expected);
        assert_eq!(steerer_power(&s, 2), -DMatrix::<f64>::identity(4, 4));
    }

    #[test]
    fn divisibility_is_checked() {
        assert!(build_fixed_steerer(FixedSteererKind::Freq1, 3).is_err());
        assert!(build_fixed_steerer(FixedSteererKind::Perm, 6).is_err());
        assert!(build_fixed_generator(FixedGeneratorKind::Freq1, 5, false).is_err());
        assert!(build_fixed_generator(FixedGeneratorKind::Spread, 128, false).is_err());
        assert!(build_fixed_generator(FixedGeneratorKind::Spread, 128, true).is_ok());
    }

    #[test]
    fn spread_256_layout() {
        assert_eq!(spread_layout(256), (40, [18; 6]));
        let g = build_fixed_generator(FixedGeneratorKind::Spread, 256, false).unwrap();
        let evs = spectrum(g.matrix()).unwrap();
        assert_eq!(count_near(&evs, Complex64::new(0.0, 0.0)), 40);
        for j in 1..=6 {
            assert_eq!(count_near(&evs, Complex64::new(0.0, j as f64)), 18);
            assert_eq!(count_near(&evs, Complex64::new(0.0, -(j as f64))), 18);
        }
    }

    #[test]
    fn spread_layout_covers_dimension() {
        for d in [1, 2, 3, 16, 64, 100, 128, 255, 512] {
            let (inv, counts) = spread_layout(d);
            assert_eq!(inv + 2 * counts.iter().sum::<usize>(), d);
        }
    }

    #[test]
    fn inv_generator_exponentiates_to_identity() {
        let g = build_fixed_generator(FixedGeneratorKind::Inv, 16, false).unwrap();
        assert_eq!(g.matrix(), &DMatrix::<f64>::zeros(16, 16));
        assert_eq!(exp_generator(&g, 1.3).unwrap(), DMatrix::<f64>::identity(16, 16));
    }

    #[test]
    fn freq1_generator_rotates() {
        let g = build_fixed_generator(FixedGeneratorKind::Freq1, 2, false).unwrap();
        assert_eq!(g.matrix(), &DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]));
        let r = exp_generator(&g, PI / 2.0).unwrap();
        assert!((r - DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])).norm() < 1e-15);
        for alpha in [0.1, 1.0, -2.5] {
            let r = exp_generator(&g, alpha).unwrap();
            let (s, c) = f64::sin_cos(alpha);
            assert!((r - DMatrix::from_row_slice(2, 2, &[c, -s, s, c])).norm() < 1e-14);
        }
    }

    #[test]
    fn exp_generator_rejects_nonfinite() {
        let g = build_fixed_generator(FixedGeneratorKind::Freq1, 2, false).unwrap();
        assert!(exp_generator(&g, f64::NAN).is_err());
        assert!(LieGenerator::new(DMatrix::from_element(1, 1, f64::INFINITY)).is_err());
    }

    #[test]
    fn discretize_examples() {
        let g = build_fixed_generator(FixedGeneratorKind::Freq1, 4, false).unwrap();
        let s = discretize_so2(&g, 4).unwrap();
        let f1 = build_fixed_steerer(FixedSteererKind::Freq1, 4).unwrap();
        assert!((s.matrix() - f1.matrix()).norm() < 1e-15);

        let zero = build_fixed_generator(FixedGeneratorKind::Inv, 6, false).unwrap();
        let s = discretize_so2(&zero, 8).unwrap();
        assert_eq!(s.matrix(), &DMatrix::<f64>::identity(6, 6));
        assert!(discretize_so2(&zero, 0).is_err());

        let spread = build_fixed_generator(FixedGeneratorKind::Spread, 256, false).unwrap();
        let s = discretize_so2(&spread, 8).unwrap();
        assert!(verify_representation(&s) < 1e-10);
    }

    #[test]
    fn powers_wrap_modulo_order() {
        let s = build_fixed_steerer(FixedSteererKind::Perm, 4).unwrap();
        assert_eq!(steerer_power(&s, 4), DMatrix::<f64>::identity(4, 4));
        assert_eq!(steerer_power(&s, -1), steerer_power(&s, 3));
        let f = build_fixed_steerer(FixedSteererKind::Freq1, 2).unwrap();
        assert_eq!(steerer_power(&f, 2), -DMatrix::<f64>::identity(2, 2));
    }

    #[test]
    fn spectrum_of_rotation_and_cycle() {
        let r = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let evs = spectrum(&r).unwrap();
        assert_eq!(count_near(&evs, Complex64::new(0.0, 1.0)), 1);
        assert_eq!(count_near(&evs, Complex64::new(0.0, -1.0)), 1);

        let p = build_fixed_steerer(FixedSteererKind::Perm, 4).unwrap();
        let evs = spectrum(p.matrix()).unwrap();
        for t in [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)] {
            assert_eq!(count_near(&evs, Complex64::new(t.0, t.1)), 1);
        }
    }

    #[test]
    fn random_init_is_deterministic_and_bounded() {
        assert_eq!(random_steerer_init(256, 7), random_steerer_init(256, 7));
        assert_ne!(random_steerer_init(16, 7), random_steerer_init(16, 8));
        for seed in 0..50 {
            let m = random_steerer_init(1, seed);
            assert!(m[(0, 0)] > -1.0 && m[(0, 0)] < 1.0);
        }
        let m = random_steerer_init(64, 3);
        assert!(m.iter().all(|v| v.abs() < 0.125));
    }

    #[test]
    fn projector_examples() {
        let id = Steerer::identity(5, 4);
        assert_eq!(invariant_projector(&id).unwrap(), DMatrix::<f64>::identity(5, 5));

        let f1 = build_fixed_steerer(FixedSteererKind::Freq1, 2).unwrap();
        assert!(invariant_projector(&f1).unwrap().norm() < 1e-15);

        let p = build_fixed_steerer(FixedSteererKind::Perm, 4).unwrap();
        let proj = invariant_projector(&p).unwrap();
        assert!((proj - DMatrix::from_element(4, 4, 0.25)).norm() < 1e-15);

        let bad = Steerer::new(random_steerer_init(8, 1), 4).unwrap();
        assert!(invariant_projector(&bad).is_err());
    }

    #[test]
    fn verify_examples() {
        let p = build_fixed_steerer(FixedSteererKind::Perm, 64).unwrap();
        assert_eq!(verify_representation(&p), 0.0);
        let r = Steerer::new(random_steerer_init(32, 5), 4).unwrap();
        assert!(verify_representation(&r) > 1e3 * tau_rep(32));
    }

    #[test]
    fn decompose_perm_256() {
        let s = build_fixed_steerer(FixedSteererKind::Perm, 256).unwrap();
        let dec = decompose_irreps(s.matrix(), GroupKind::Cyclic(4)).unwrap();
        let hist = dec.frequency_histogram();
        assert_eq!(hist, BTreeMap::from([(0, 64), (1, 128), (2, 64)]));
        assert!(dec.residual < tau_dec(256));
        assert!(dec.blocks.iter().all(|b| b.admissible));
        assert_eq!(dec.blocks.iter().filter(|b| b.size == 2).count(), 64);
    }

    #[test]
    fn decompose_identity() {
        let id = DMatrix::<f64>::identity(6, 6);
        let dec = decompose_irreps(&id, GroupKind::Cyclic(4)).unwrap();
        assert_eq!(dec.frequencies(), vec![0; 6]);
    }

    #[test]
    fn decompose_spread() {
        let g = build_fixed_generator(FixedGeneratorKind::Spread, 256, false).unwrap();
        let dec = decompose_irreps(g.matrix(), GroupKind::So2Generator).unwrap();
        let mut expected = BTreeMap::from([(0, 40)]);
        for j in 1..=6 {
            expected.insert(j, 36);
        }
        assert_eq!(dec.frequency_histogram(), expected);
    }

    #[test]
    fn decompose_flags_off_lattice_blocks() {
        // rotation by 0.3 rad is not a C_4 frequency
        let (s, c) = 0.3f64.sin_cos();
        let m = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let dec = decompose_irreps(&m, GroupKind::Cyclic(4)).unwrap();
        assert_eq!(dec.blocks.len(), 1);
        assert!(!dec.blocks[0].admissible);
        assert_eq!(dec.blocks[0].frequency, 0);
    }

    #[test]
    fn decompose_reports_negative_frequency_as_positive() {
        // clockwise quarter turn, i.e. frequency -1
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let dec = decompose_irreps(&m, GroupKind::Cyclic(4)).unwrap();
        assert_eq!(dec.frequencies(), vec![1, 1]);
        assert!((dec.reconstruct() - &m).norm() < 1e-14);
    }

    #[test]
    fn decompose_rejects_defective_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(matches!(
            decompose_irreps(&m, GroupKind::Cyclic(4)),
            Err(Error::DecompositionFailed { .. })
        ));
    }

    #[test]
    fn planar_rotation_quarter_is_exact() {
        let r = PlanarRotation::new(PI / 2.0);
        assert_eq!(r.matrix(), &Matrix2::new(0.0, -1.0, 1.0, 0.0));
        assert_eq!(r.apply(1.0, 0.0), (0.0, 1.0));
        let r = PlanarRotation::new(0.5);
        let m = r.matrix();
        assert!((m.transpose() * m - Matrix2::identity()).norm() < 1e-15);
        assert!((m.determinant() - 1.0).abs() < 1e-15);
    }
}
