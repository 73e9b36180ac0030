//! Fitting steerers to corresponding descriptions, the constructive
//! Gram-preserving recovery, a matching likelihood diagnostic, and spectral
//! pruning.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::descriptor::DescriptorMatrix;
use crate::error::{Error, Result};
use crate::group_reps::{decompose_irreps, matrix_power, GroupKind, LieGenerator, Steerer};
use crate::linalg::{self, expm, logm, orthonormal_range, procrustes};
use crate::matcher::{log_dual_softmax, renormalize, MatcherConfig};

/// Default tolerance of the Gram-preservation check.
pub const TAU_GRAM: f64 = 1e-6;

/// How the "after" descriptions relate to the "before" descriptions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Relation {
    /// `after = ρ^k before` for a steerer of a cyclic group.
    Steps(i64),
    /// `after = expm(α dς) before`, angle in radians.
    Angle(f64),
}

#[derive(Debug, Clone)]
pub struct CorrespondencePair {
    pub before: DescriptorMatrix,
    pub after: DescriptorMatrix,
    pub relation: Relation,
}

#[derive(Debug, Clone, Default)]
pub struct CorrespondenceBatch {
    pairs: Vec<CorrespondencePair>,
}

impl CorrespondenceBatch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, before: DescriptorMatrix, after: DescriptorMatrix, relation: Relation) -> Result<()> {
        if before.dim() != after.dim() || before.len() != after.len() {
            return Err(Error::InvalidInput(format!(
                "before is {}x{} but after is {}x{}",
                before.dim(),
                before.len(),
                after.dim(),
                after.len()
            )));
        }
        if let Some(first) = self.pairs.first() {
            if first.before.dim() != before.dim() {
                return Err(Error::InvalidInput(format!(
                    "dimension {} differs from batch dimension {}",
                    before.dim(),
                    first.before.dim()
                )));
            }
        }
        if let Relation::Angle(a) = relation {
            if !a.is_finite() {
                return Err(Error::InvalidInput("angle must be finite".into()));
            }
        }
        self.pairs.push(CorrespondencePair { before, after, relation });
        Ok(())
    }

    pub fn pairs(&self) -> &[CorrespondencePair] {
        &self.pairs
    }

    pub fn dim(&self) -> Option<usize> {
        self.pairs.first().map(|p| p.before.dim())
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct SteererFit {
    pub steerer: Steerer,
    /// `‖ρ^k before − after‖_F / ‖after‖_F` over all informative pairs.
    pub residual: f64,
    /// `‖ρᵀρ − I‖_F`.
    pub orthogonality_defect: f64,
}

/// A constraint `ρ^steps src = dst` with `steps ≥ 1`.
struct Constraint<'a> {
    src: &'a DMatrix<f64>,
    dst: &'a DMatrix<f64>,
    steps: usize,
}

fn constraints(batch: &CorrespondenceBatch, order: usize) -> Result<Vec<Constraint<'_>>> {
    let n = order as i64;
    let mut out = Vec::new();
    for p in batch.pairs() {
        let k = match p.relation {
            Relation::Steps(k) => k.rem_euclid(n),
            Relation::Angle(_) => {
                return Err(Error::InvalidInput("angle pairs need fit_generator".into()));
            }
        };
        if k == 0 {
            continue;
        }
        // use the shorter way round; ρ^{−k} = ρ^{n−k} for a representation
        if 2 * k <= n {
            out.push(Constraint {
                src: p.before.data(),
                dst: p.after.data(),
                steps: k as usize,
            });
        } else {
            out.push(Constraint {
                src: p.after.data(),
                dst: p.before.data(),
                steps: (n - k) as usize,
            });
        }
    }
    Ok(out)
}

fn relative_residual(rho: &DMatrix<f64>, cons: &[Constraint<'_>]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for c in cons {
        let pred = matrix_power(rho, c.steps) * c.src;
        num += (pred - c.dst).norm_squared();
        den += c.dst.norm_squared();
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}

fn orthogonality_defect(q: &DMatrix<f64>) -> f64 {
    linalg::identity_defect(&q.tr_mul(q))
}

/// Options of [`fit_steerer_orthogonal_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Maximum refinement iterations when the batch has multi-step pairs.
    pub refine_iterations: usize,
    /// Stop refining once an iteration improves the alignment by less than
    /// this fraction of the total description energy.
    pub refine_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            refine_iterations: 60,
            refine_tolerance: 1e-7,
        }
    }
}

/// Orthogonal Procrustes fit of a `C_n` steerer with default options.
pub fn fit_steerer_orthogonal(batch: &CorrespondenceBatch, group_order: usize) -> Result<SteererFit> {
    fit_steerer_orthogonal_with(batch, group_order, &FitOptions::default())
}

/// Orthogonal Procrustes fit of a `C_n` steerer.
///
/// The single-step pairs give the closed-form estimate `U Vᵀ` from the SVD
/// of `M = Σ after·beforeᵀ`. When pairs `k > 1` steps apart are present the
/// estimate is refined by monotone gradient ascent on the orthogonal group of
/// the total alignment `Σ_k tr(ρ^k C_k)`, `C_k = Σ before·afterᵀ`, which for
/// orthogonal `ρ` is equivalent to minimizing `Σ ‖ρ^k before − after‖²`.
pub fn fit_steerer_orthogonal_with(
    batch: &CorrespondenceBatch,
    group_order: usize,
    opts: &FitOptions,
) -> Result<SteererFit> {
    if group_order == 0 {
        return Err(Error::InvalidInput("group order must be positive".into()));
    }
    let d = batch
        .dim()
        .ok_or_else(|| Error::InvalidInput("correspondence batch is empty".into()))?;
    let cons = constraints(batch, group_order)?;
    let have: usize = cons.iter().map(|c| c.src.ncols()).sum();
    if have < d {
        return Err(Error::Underdetermined { have, need: d });
    }
    if !cons.iter().any(|c| c.steps == 1) {
        return Err(Error::InvalidInput(
            "at least one pair must be a single generator step apart".into(),
        ));
    }

    let mut m = DMatrix::<f64>::zeros(d, d);
    for c in cons.iter().filter(|c| c.steps == 1) {
        m.gemm(1.0, c.dst, &c.src.transpose(), 1.0);
    }
    let (mut rho, rank) = procrustes(&m)?;
    if rank < d {
        return Err(Error::DegenerateFit { rank, dim: d });
    }
    let max_steps = cons.iter().map(|c| c.steps).max().unwrap_or(1);
    if max_steps > 1 && opts.refine_iterations > 0 {
        let mut cross = vec![DMatrix::<f64>::zeros(d, d); max_steps];
        let mut energy = 0.0;
        for c in &cons {
            cross[c.steps - 1].gemm(1.0, c.src, &c.dst.transpose(), 1.0);
            energy += c.dst.norm_squared();
        }
        rho = refine_alignment(rho, &cross, energy, opts)?;
    }
    let residual = relative_residual(&rho, &cons);
    let orthogonality_defect = orthogonality_defect(&rho);
    Ok(SteererFit {
        steerer: Steerer::new(rho, group_order)?,
        residual,
        orthogonality_defect,
    })
}

/// `Σ_k tr(ρ^k C_k)` with `cross[k − 1] = C_k`.
fn alignment(rho: &DMatrix<f64>, cross: &[DMatrix<f64>]) -> f64 {
    let d = rho.nrows();
    let mut pow = DMatrix::<f64>::identity(d, d);
    let mut total = 0.0;
    for c in cross {
        pow = &pow * rho;
        total += pow.component_mul(&c.transpose()).sum();
    }
    total
}

/// Euclidean gradient of [`alignment`]: `Σ_k Σ_{i<k} (ρ^{k−1−i} C_k ρ^i)ᵀ`,
/// accumulated Horner-style as `Σ_i (H_i ρ^i)ᵀ` with
/// `H_i = C_{i+1} + ρ H_{i+1}`.
fn alignment_gradient(rho: &DMatrix<f64>, cross: &[DMatrix<f64>]) -> DMatrix<f64> {
    let d = rho.nrows();
    let kmax = cross.len();
    let mut powers = Vec::with_capacity(kmax);
    powers.push(DMatrix::<f64>::identity(d, d));
    for i in 1..kmax {
        let next = &powers[i - 1] * rho;
        powers.push(next);
    }
    let mut h = cross[kmax - 1].clone();
    let mut grad = (&h * &powers[kmax - 1]).transpose();
    for i in (0..kmax - 1).rev() {
        h = &cross[i] + rho * &h;
        grad += (&h * &powers[i]).transpose();
    }
    grad
}

fn refine_alignment(
    mut rho: DMatrix<f64>,
    cross: &[DMatrix<f64>],
    energy: f64,
    opts: &FitOptions,
) -> Result<DMatrix<f64>> {
    let d = rho.nrows();
    let eye = DMatrix::<f64>::identity(d, d);
    let mut value = alignment(&rho, cross);
    let mut step = 0.0;
    for it in 0..opts.refine_iterations {
        let a = rho.tr_mul(&alignment_gradient(&rho, cross));
        let omega = (&a - a.transpose()) * 0.5;
        // stationary up to rounding
        if omega.norm() <= 1e-10 * energy {
            break;
        }
        if it == 0 {
            // first trial rotates by about 0.01 rad
            step = 0.01 / omega.norm();
        }
        let mut improved = false;
        while step * omega.norm() > 1e-14 {
            // Cayley retraction keeps the iterate orthogonal
            let w = &omega * (0.5 * step);
            let cay = (&eye - &w)
                .lu()
                .solve(&(&eye + &w))
                .ok_or_else(|| Error::NoConvergence("singular Cayley system".into()))?;
            let cand = &rho * cay;
            let v = alignment(&cand, cross);
            if v - value > 1e-14 * energy {
                let gain = v - value;
                rho = cand;
                value = v;
                step *= 1.5;
                improved = gain > opts.refine_tolerance * energy;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    // remove accumulated rounding from the orthogonal factor
    Ok(procrustes(&rho)?.0)
}

#[derive(Debug, Clone)]
pub struct GeneratorFit {
    pub generator: LieGenerator,
    /// Relative residual of `expm(α dς) before ≈ after` over all pairs.
    pub residual: f64,
    /// Per distinct angle: `(angle, Procrustes residual)`.
    pub per_angle: Vec<(f64, f64)>,
}

/// Fit `dς` from pairs related by known angles in `(−π, π)`.
///
/// Each distinct angle gets its own orthogonal Procrustes map `ρ_i`. Their
/// logarithms are combined in order of increasing `|α|`: the current estimate
/// `G` predicts `α_i G`, and only the small remainder
/// `logm(ρ_i expm(−α_i G))` goes through the principal logarithm, so high
/// frequencies whose rotation `jα` exceeds `π` are unwrapped consistently.
/// `G` is the least-squares solution of `L_i = α_i G`.
pub fn fit_generator(batch: &CorrespondenceBatch) -> Result<GeneratorFit> {
    let d = batch
        .dim()
        .ok_or_else(|| Error::InvalidInput("correspondence batch is empty".into()))?;
    let mut groups: BTreeMap<u64, (f64, DMatrix<f64>, usize, Vec<&CorrespondencePair>)> = BTreeMap::new();
    for p in batch.pairs() {
        let a = match p.relation {
            Relation::Angle(a) => a,
            Relation::Steps(_) => {
                return Err(Error::InvalidInput("step pairs need fit_steerer_orthogonal".into()));
            }
        };
        if a.abs() >= std::f64::consts::PI {
            return Err(Error::BranchAmbiguity { angle: a });
        }
        if a == 0.0 {
            continue;
        }
        let e = groups
            .entry(a.to_bits())
            .or_insert_with(|| (a, DMatrix::zeros(d, d), 0, Vec::new()));
        e.1.gemm(1.0, p.after.data(), &p.before.data().transpose(), 1.0);
        e.2 += p.before.len();
        e.3.push(p);
    }
    if groups.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 distinct nonzero angles, got {}",
            groups.len()
        )));
    }

    let mut fits: Vec<(f64, DMatrix<f64>, f64)> = Vec::new();
    for (a, m, count, pairs) in groups.into_values() {
        if count < d {
            return Err(Error::Underdetermined { have: count, need: d });
        }
        let (q, rank) = procrustes(&m)?;
        if rank < d {
            return Err(Error::DegenerateFit { rank, dim: d });
        }
        let (mut num, mut den) = (0.0, 0.0);
        for p in pairs {
            num += (&q * p.before.data() - p.after.data()).norm_squared();
            den += p.after.data().norm_squared();
        }
        let res = if den == 0.0 { 0.0 } else { (num / den).sqrt() };
        fits.push((a, q, res));
    }
    fits.sort_by(|x, y| x.0.abs().total_cmp(&y.0.abs()).then(x.0.total_cmp(&y.0)));

    let (a0, q0, _) = &fits[0];
    let mut g = logm(q0).map_err(|e| logm_context(e, *a0))? / *a0;
    let mut weighted = DMatrix::<f64>::zeros(d, d);
    let mut norm = 0.0;
    for (a, q, _) in &fits {
        let correction = logm(&(q * expm(&(&g * -*a))?)).map_err(|e| logm_context(e, *a))?;
        let l = &g * *a + correction;
        weighted += l * *a;
        norm += a * a;
        g = &weighted / norm;
    }

    let (mut num, mut den) = (0.0, 0.0);
    for p in batch.pairs() {
        if let Relation::Angle(a) = p.relation {
            let pred = expm(&(&g * a))? * p.before.data();
            num += (pred - p.after.data()).norm_squared();
            den += p.after.data().norm_squared();
        }
    }
    Ok(GeneratorFit {
        generator: LieGenerator::new(g)?,
        residual: if den == 0.0 { 0.0 } else { (num / den).sqrt() },
        per_angle: fits.iter().map(|(a, _, r)| (*a, *r)).collect(),
    })
}

fn logm_context(e: Error, angle: f64) -> Error {
    match e {
        Error::LogmFailed(msg) => Error::LogmFailed(format!(
            "at angle {:.4} rad: {msg}; the fitted map has an eigenvalue near −1",
            angle
        )),
        other => other,
    }
}

#[derive(Debug, Clone)]
pub struct GramRecovery {
    pub q: DMatrix<f64>,
    /// `max_i ‖Q a_i − b_i‖`.
    pub residual: f64,
    /// Largest Gram entry deviation `|⟨a_i, a_j⟩ − ⟨b_i, b_j⟩|`.
    pub gram_deviation: f64,
    /// Dimension of the sample span.
    pub rank: usize,
}

/// Orthogonal `Q` with `Q a_i = b_i` for sample columns `a_i = f(v_i)`,
/// `b_i = f(g·v_i)`, acting as the identity on the orthogonal complement of
/// the sample span whenever the target span coincides with it. Fails unless
/// the two Gram matrices agree within `tau_gram`.
pub fn recover_orthogonal_from_gram(a: &DMatrix<f64>, b: &DMatrix<f64>, tau_gram: f64) -> Result<GramRecovery> {
    if a.shape() != b.shape() {
        return Err(Error::InvalidInput(format!(
            "sample matrices differ in shape: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let d = a.nrows();
    let ga = a.tr_mul(a);
    let gb = b.tr_mul(b);
    let (mut worst, mut wi, mut wj) = (0.0f64, 0, 0);
    for j in 0..ga.ncols() {
        for i in 0..=j {
            let dev = (ga[(i, j)] - gb[(i, j)]).abs();
            if dev > worst {
                (worst, wi, wj) = (dev, i, j);
            }
        }
    }
    if worst > tau_gram {
        return Err(Error::HypothesisViolated {
            i: wi,
            j: wj,
            deviation: worst,
            tolerance: tau_gram,
        });
    }

    let eye = DMatrix::<f64>::identity(d, d);
    let mut q = DMatrix::<f64>::zeros(d, d);
    let mut rank = 0;
    if a.ncols() > 0 {
        let svd = a.clone().svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let smax = svd.singular_values.max();
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| smax > 0.0 && svd.singular_values[i] > 1e-10 * smax)
            .collect();
        rank = keep.len();
        if rank > 0 {
            let ur = u.select_columns(keep.iter());
            let mut t = DMatrix::<f64>::zeros(d, rank);
            for (c, &i) in keep.iter().enumerate() {
                let v = vt.row(i).transpose();
                t.set_column(c, &((b * v) / svd.singular_values[i]));
            }
            // the images are orthonormal up to the Gram tolerance; snap them
            let t = polar(&t);
            q = &t * ur.transpose();
            if rank < d {
                let cs = orthonormal_range(&(&eye - &ur * ur.transpose()), 0.5);
                let ct = orthonormal_range(&(&eye - &t * t.transpose()), 0.5);
                if cs.ncols() > 0 && cs.ncols() == ct.ncols() {
                    q += &ct * polar(&ct.tr_mul(&cs)) * cs.transpose();
                }
            }
        }
    }
    if rank == 0 {
        q = eye;
    }
    let residual = (0..a.ncols())
        .map(|i| (&q * a.column(i) - b.column(i)).norm())
        .fold(0.0, f64::max);
    Ok(GramRecovery {
        q,
        residual,
        gram_deviation: worst,
        rank,
    })
}

/// Orthonormal polar factor `U Wᵀ` of a full-column-rank matrix.
fn polar(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    svd.u.unwrap() * svd.v_t.unwrap()
}

/// Mean negative log dual-softmax probability of the true pairs after
/// steering `y₁` by `M^k` (image 2 is image 1 rotated by `k` steps).
pub fn eval_match_likelihood(
    y1: &DescriptorMatrix,
    y2: &DescriptorMatrix,
    steerer_matrix: &DMatrix<f64>,
    k: usize,
    true_pairs: &[(usize, usize)],
    cfg: &MatcherConfig,
) -> Result<f64> {
    if true_pairs.is_empty() {
        return Err(Error::InvalidInput("no true pairs given".into()));
    }
    if y1.dim() != y2.dim() || steerer_matrix.shape() != (y1.dim(), y1.dim()) {
        return Err(Error::InvalidInput("dimension mismatch".into()));
    }
    for &(i, j) in true_pairs {
        if i >= y1.len() || j >= y2.len() {
            return Err(Error::InvalidInput(format!("pair ({i}, {j}) out of range")));
        }
    }
    let mut z1 = matrix_power(steerer_matrix, k) * y1.data();
    renormalize(&mut z1);
    let logp = log_dual_softmax(&z1.tr_mul(y2.data()), cfg);
    let total: f64 = true_pairs.iter().map(|&(i, j)| -logp[(i, j)]).sum();
    Ok(total / true_pairs.len() as f64)
}

/// Whether a pruned matrix is a group element or a Lie algebra generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PruneSource {
    Steerer { group_order: usize },
    Generator,
}

#[derive(Debug, Clone)]
pub struct Pruned {
    pub projected: DescriptorMatrix,
    /// `D' × D` with orthonormal rows.
    pub basis: DMatrix<f64>,
}

/// Keep the invariant directions whose eigenvalue magnitudes (`e^{Re λ}` for
/// a generator) rank in the top `keep_fraction`, project the descriptions onto
/// their real span and renormalize. Ties go to the lower frequency, then to
/// the earlier block; a conjugate pair is never split.
pub fn prune_by_eigenvalue(
    matrix: &DMatrix<f64>,
    source: PruneSource,
    y: &DescriptorMatrix,
    keep_fraction: f64,
) -> Result<Pruned> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::InvalidInput(format!("keep fraction {keep_fraction} outside (0, 1]")));
    }
    if matrix.shape() != (y.dim(), y.dim()) {
        return Err(Error::InvalidInput("matrix does not match description dimension".into()));
    }
    let d = y.dim();
    let target = (keep_fraction * d as f64).round() as usize;
    if target == 0 {
        return Err(Error::InvalidInput(format!(
            "keep fraction {keep_fraction} keeps no dimension of {d}"
        )));
    }
    let group = match source {
        PruneSource::Steerer { group_order } => GroupKind::Cyclic(group_order),
        PruneSource::Generator => GroupKind::So2Generator,
    };
    let dec = decompose_irreps(matrix, group)?;
    let mut offsets = Vec::with_capacity(dec.blocks.len());
    let mut o = 0;
    for b in &dec.blocks {
        offsets.push(o);
        o += b.size;
    }
    let magnitude = |(re, im): (f64, f64)| match source {
        PruneSource::Steerer { .. } => re.hypot(im),
        PruneSource::Generator => re.exp(),
    };
    let mut order: Vec<usize> = (0..dec.blocks.len()).collect();
    order.sort_by(|&x, &y| {
        let (bx, by) = (&dec.blocks[x], &dec.blocks[y]);
        magnitude(by.eigenvalue)
            .total_cmp(&magnitude(bx.eigenvalue))
            .then(bx.frequency.abs().cmp(&by.frequency.abs()))
            .then(x.cmp(&y))
    });
    let mut cols = Vec::new();
    for &bi in &order {
        if cols.len() >= target {
            break;
        }
        cols.extend(offsets[bi]..offsets[bi] + dec.blocks[bi].size);
    }
    let span = dec.basis_inverse.select_columns(cols.iter());
    let w = orthonormal_range(&span, 1e-12);
    let basis = w.transpose();
    let mut z = &basis * y.data();
    let mut degenerate = Vec::new();
    for (c, mut col) in z.column_iter_mut().enumerate() {
        let n = col.norm();
        if n > 1e-12 {
            col /= n;
        } else {
            degenerate.push(c);
        }
    }
    if !degenerate.is_empty() {
        log::warn!("{} descriptions vanish in the pruned subspace", degenerate.len());
    }
    Ok(Pruned {
        projected: DescriptorMatrix::new(z),
        basis,
    })
}
