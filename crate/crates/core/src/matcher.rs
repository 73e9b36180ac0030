//! Dual-softmax matching with mutual nearest neighbours, and the steered
//! matching strategies built on it.
//!
//! Steering convention: when image 2 is image 1 rotated by `k` generator
//! steps, `y₂ ≈ ρ^k y₁`. Strategies therefore steer `y₁` by `ρ^k` and report
//! that `k` as the rotation of image 2 relative to image 1.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix2};
use serde::Serialize;

use crate::descriptor::DescriptorMatrix;
use crate::error::{Error, Result};
use crate::group_reps::{invariant_projector, Steerer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatcherConfig {
    pub inverse_temperature: f64,
    pub similarity_threshold: f64,
    pub subset_size: usize,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            inverse_temperature: 20.0,
            similarity_threshold: 0.01,
            subset_size: 1000,
        }
    }
}

impl MatcherConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.inverse_temperature > 0.0 && self.inverse_temperature.is_finite()) {
            return Err(Error::InvalidInput("inverse temperature must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.similarity_threshold) {
            return Err(Error::InvalidInput("similarity threshold must lie in [0, 1)".into()));
        }
        if self.subset_size == 0 {
            return Err(Error::InvalidInput("subset size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Plain,
    MaxMatches,
    MaxSimilarity,
    Subset,
    Procrustes,
    PrototypeProcrustes,
    InvariantProjection,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::Plain,
        Strategy::MaxMatches,
        Strategy::MaxSimilarity,
        Strategy::Subset,
        Strategy::Procrustes,
        Strategy::PrototypeProcrustes,
        Strategy::InvariantProjection,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Plain => "plain",
            Strategy::MaxMatches => "max-matches",
            Strategy::MaxSimilarity => "max-similarity",
            Strategy::Subset => "subset",
            Strategy::Procrustes => "procrustes",
            Strategy::PrototypeProcrustes => "prototype-procrustes",
            Strategy::InvariantProjection => "invariant-projection",
        }
    }

    /// Whether the strategy works on frequency-1 block coordinates.
    pub fn needs_frequency_one(&self) -> bool {
        matches!(self, Strategy::Procrustes | Strategy::PrototypeProcrustes)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .iter()
            .copied()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Strategy::ALL.iter().map(|s| s.name()).collect();
                Error::InvalidInput(format!("unknown strategy '{s}' (expected one of {})", names.join(", ")))
            })
    }
}

/// How the returned correspondences were steered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Steering {
    None,
    /// `y₁` steered by `ρ^k`.
    Power(usize),
    /// Maximum over all powers, taken per entry.
    Elementwise,
    /// Per-pair 2×2 alignment.
    PerPair,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Number of description inner products evaluated.
    pub similarity_evaluations: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matches_per_power: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub match_angles: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub ill_conditioned_1: Vec<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub ill_conditioned_2: Vec<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub dropped_1: Vec<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub dropped_2: Vec<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchSet {
    pub strategy: Strategy,
    /// `(i, j, similarity)` with `i` indexing image 1 and `j` image 2.
    pub matches: Vec<(usize, usize, f64)>,
    pub steering: Steering,
    /// Rotation taking the frequency-1 blocks of `y₁[i]` onto `y₂[j]`.
    pub per_match_rotation: Option<Vec<Matrix2<f64>>>,
    pub diagnostics: Diagnostics,
}

#[derive(Serialize)]
struct MatchReport<'a> {
    strategy: &'a str,
    steering_power_or_angle: serde_json::Value,
    matches: &'a [(usize, usize, f64)],
    diagnostics: &'a Diagnostics,
}

impl MatchSet {
    fn new(strategy: Strategy, matches: Vec<(usize, usize, f64)>, steering: Steering) -> Self {
        Self {
            strategy,
            matches,
            steering,
            per_match_rotation: None,
            diagnostics: Diagnostics::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.matches.iter().map(|&(i, j, _)| (i, j)).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let steering = match self.steering {
            Steering::None => serde_json::Value::Null,
            Steering::Power(k) => serde_json::json!(k),
            Steering::Elementwise => serde_json::json!("elementwise"),
            Steering::PerPair => serde_json::json!("per-pair"),
        };
        serde_json::to_value(MatchReport {
            strategy: self.strategy.name(),
            steering_power_or_angle: steering,
            matches: &self.matches,
            diagnostics: &self.diagnostics,
        })
        .expect("match report is serializable")
    }
}

/// `Y = y₁ᵀ y₂`.
pub fn similarity(y1: &DMatrix<f64>, y2: &DMatrix<f64>) -> DMatrix<f64> {
    y1.tr_mul(y2)
}

fn check_pair(y1: &DescriptorMatrix, y2: &DescriptorMatrix) -> Result<()> {
    if y1.dim() != y2.dim() {
        return Err(Error::InvalidInput(format!(
            "description dimensions differ: {} vs {}",
            y1.dim(),
            y2.dim()
        )));
    }
    Ok(())
}

fn check_steerer(s: &Steerer, y: &DescriptorMatrix) -> Result<()> {
    if s.dim() != y.dim() {
        return Err(Error::InvalidInput(format!(
            "steerer dimension {} does not match description dimension {}",
            s.dim(),
            y.dim()
        )));
    }
    Ok(())
}

/// Scale every nonzero column to unit norm.
pub fn renormalize(y: &mut DMatrix<f64>) {
    for mut col in y.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= n;
        }
    }
}

fn row_softmax_parts(s: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let mut max = vec![f64::NEG_INFINITY; s.nrows()];
    for j in 0..s.ncols() {
        for i in 0..s.nrows() {
            max[i] = max[i].max(s[(i, j)]);
        }
    }
    let mut sum = vec![0.0; s.nrows()];
    for j in 0..s.ncols() {
        for i in 0..s.nrows() {
            sum[i] += (s[(i, j)] - max[i]).exp();
        }
    }
    (max, sum)
}

fn col_softmax_parts(s: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let mut max = vec![f64::NEG_INFINITY; s.ncols()];
    let mut sum = vec![0.0; s.ncols()];
    for (j, col) in s.column_iter().enumerate() {
        max[j] = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        sum[j] = col.iter().map(|v| (v - max[j]).exp()).sum();
    }
    (max, sum)
}

/// Elementwise product of the row and column softmax of `ι·Y`.
pub fn dual_softmax(y: &DMatrix<f64>, cfg: &MatcherConfig) -> DMatrix<f64> {
    let s = y * cfg.inverse_temperature;
    let (rmax, rsum) = row_softmax_parts(&s);
    let (cmax, csum) = col_softmax_parts(&s);
    DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| {
        let v = s[(i, j)];
        ((v - rmax[i]).exp() / rsum[i]) * ((v - cmax[j]).exp() / csum[j])
    })
}

/// Natural logarithm of [`dual_softmax`], finite even where the probability
/// underflows.
pub fn log_dual_softmax(y: &DMatrix<f64>, cfg: &MatcherConfig) -> DMatrix<f64> {
    let s = y * cfg.inverse_temperature;
    let (rmax, rsum) = row_softmax_parts(&s);
    let (cmax, csum) = col_softmax_parts(&s);
    DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| {
        let v = s[(i, j)];
        (v - rmax[i] - rsum[i].ln()) + (v - cmax[j] - csum[j].ln())
    })
}

/// Position of the unique maximum, or `None` if the maximum is attained more
/// than once.
fn strict_argmax(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best = f64::NEG_INFINITY;
    let mut arg = None;
    let mut tied = false;
    for (i, v) in values.enumerate() {
        if v > best {
            best = v;
            arg = Some(i);
            tied = false;
        } else if v == best {
            tied = true;
        }
    }
    if tied {
        None
    } else {
        arg
    }
}

/// Pairs `(i, j)` where `P[i, j]` is the unique maximum of its row and of its
/// column and exceeds the threshold, ordered by `i`.
pub fn mutual_nn(p: &DMatrix<f64>, threshold: f64) -> Vec<(usize, usize)> {
    let col_best: Vec<Option<usize>> = p.column_iter().map(|c| strict_argmax(c.iter().cloned())).collect();
    let mut out = Vec::new();
    for i in 0..p.nrows() {
        if let Some(j) = strict_argmax(p.row(i).iter().cloned()) {
            if col_best[j] == Some(i) && p[(i, j)] > threshold {
                out.push((i, j));
            }
        }
    }
    out
}

/// Mutual nearest neighbours of the dual softmax of `y`, reported with the
/// entries of `y` as similarities.
pub fn mutual_nn_matches(y: &DMatrix<f64>, cfg: &MatcherConfig) -> Vec<(usize, usize, f64)> {
    if y.is_empty() {
        return Vec::new();
    }
    let p = dual_softmax(y, cfg);
    mutual_nn(&p, cfg.similarity_threshold)
        .into_iter()
        .map(|(i, j)| (i, j, y[(i, j)]))
        .collect()
}

fn evaluations(a: usize, b: usize) -> u64 {
    a as u64 * b as u64
}

/// Unsteered dual-softmax matching.
pub fn match_plain(y1: &DescriptorMatrix, y2: &DescriptorMatrix, cfg: &MatcherConfig) -> Result<MatchSet> {
    cfg.validate()?;
    check_pair(y1, y2)?;
    let y = similarity(y1.data(), y2.data());
    let mut set = MatchSet::new(Strategy::Plain, mutual_nn_matches(&y, cfg), Steering::None);
    set.diagnostics.similarity_evaluations = evaluations(y1.len(), y2.len());
    Ok(set)
}

/// `ρ^k y` for `k = 0..n`, each renormalized.
fn steered_powers(s: &Steerer, y: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let mut out = Vec::with_capacity(s.group_order());
    let mut cur = y.clone();
    for k in 0..s.group_order() {
        if k > 0 {
            cur = s.matrix() * &cur;
        }
        let mut z = cur.clone();
        renormalize(&mut z);
        out.push(z);
    }
    out
}

fn max_matches_raw(
    y1: &DMatrix<f64>,
    y2: &DMatrix<f64>,
    s: &Steerer,
    cfg: &MatcherConfig,
) -> (usize, Vec<(usize, usize, f64)>, Vec<usize>) {
    let mut best: Option<(usize, Vec<(usize, usize, f64)>)> = None;
    let mut counts = Vec::with_capacity(s.group_order());
    for (k, z1) in steered_powers(s, y1).iter().enumerate() {
        let m = mutual_nn_matches(&similarity(z1, y2), cfg);
        counts.push(m.len());
        if best.as_ref().map_or(true, |(_, b)| m.len() > b.len()) {
            best = Some((k, m));
        }
    }
    let (k, m) = best.unwrap_or((0, Vec::new()));
    (k, m, counts)
}

/// Try every power of the steerer and keep the one with the most matches
/// (smallest power on ties).
pub fn match_max_matches(
    y1: &DescriptorMatrix,
    y2: &DescriptorMatrix,
    s: &Steerer,
    cfg: &MatcherConfig,
) -> Result<MatchSet> {
    cfg.validate()?;
    check_pair(y1, y2)?;
    check_steerer(s, y1)?;
    let (k, matches, counts) = max_matches_raw(y1.data(), y2.data(), s, cfg);
    let mut set = MatchSet::new(Strategy::MaxMatches, matches, Steering::Power(k));
    set.diagnostics.similarity_evaluations = s.group_order() as u64 * evaluations(y1.len(), y2.len());
    set.diagnostics.matches_per_power = Some(counts);
    Ok(set)
}

/// Match on the elementwise maximum over all powers of the raw cosine
/// similarities.
pub fn match_max_similarity(
    y1: &DescriptorMatrix,
    y2: &DescriptorMatrix,
    s: &Steerer,
    cfg: &MatcherConfig,
) -> Result<MatchSet> {
    cfg.validate()?;
    check_pair(y1, y2)?;
    check_steerer(s, y1)?;
    let ystar = max_similarity_matrix(y1.data(), y2.data(), s);
    let mut set = MatchSet::new(Strategy::MaxSimilarity, mutual_nn_matches(&ystar, cfg), Steering::Elementwise);
    set.diagnostics.similarity_evaluations = s.group_order() as u64 * evaluations(y1.len(), y2.len());
    Ok(set)
}

/// `Y*[i, j] = max_k (ρ^k y₁)ᵢᵀ y₂ⱼ`.
pub fn max_similarity_matrix(y1: &DMatrix<f64>, y2: &DMatrix<f64>, s: &Steerer) -> DMatrix<f64> {
    let mut ystar = DMatrix::from_element(y1.ncols(), y2.ncols(), f64::NEG_INFINITY);
    for z1 in steered_powers(s, y1) {
        ystar.zip_apply(&similarity(&z1, y2), |a, b| *a = a.max(b));
    }
    ystar
}

/// Choose the power with [`match_max_matches`] on the strongest
/// `subset_size` keypoints of each image, then match everything once.
pub fn match_subset(
    y1: &DescriptorMatrix,
    y2: &DescriptorMatrix,
    s: &Steerer,
    cfg: &MatcherConfig,
) -> Result<MatchSet> {
    cfg.validate()?;
    check_pair(y1, y2)?;
    check_steerer(s, y1)?;
    let (a, b) = (y1.head(cfg.subset_size), y2.head(cfg.subset_size));
    let (k, _, counts) = max_matches_raw(a.data(), b.data(), s, cfg);
    let mut z1 = crate::group_reps::steerer_power(s, k as i64) * y1.data();
    renormalize(&mut z1);
    let mut set = MatchSet::new(
        Strategy::Subset,
        mutual_nn_matches(&similarity(&z1, y2.data()), cfg),
        Steering::Power(k),
    );
    set.diagnostics.similarity_evaluations =
        s.group_order() as u64 * evaluations(a.len(), b.len()) + evaluations(y1.len(), y2.len());
    set.diagnostics.matches_per_power = Some(counts);
    Ok(set)
}

fn check_even(d: usize) -> Result<()> {
    if d % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "frequency-1 descriptions need an even dimension, got {d}"
        )));
    }
    Ok(())
}

/// Apply `[[0, 1], [−1, 0]]` to every 2-block, so that
/// `aᵀ J b = Σ (a_x b_y − a_y b_x)`.
fn block_cross(y: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(y.nrows(), y.ncols());
    for c in 0..y.ncols() {
        for b in 0..y.nrows() / 2 {
            out[(2 * b, c)] = y[(2 * b + 1, c)];
            out[(2 * b + 1, c)] = -y[(2 * b, c)];
        }
    }
    out
}

fn rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Best rotation angle `θ` and aligned similarity `max_R ⟨R a, b⟩` over 2×2
/// rotations applied blockwise, from the sums `p = Σ a·b` and
/// `q = Σ (a_x b_y − a_y b_x)`. Zero cross-covariance gives `θ = 0`.
pub fn procrustes_2x2(p: f64, q: f64) -> (f64, f64) {
    if p == 0.0 && q == 0.0 {
        (0.0, 0.0)
    } else {
        (q.atan2(p), p.hypot(q))
    }
}

/// Aligned similarities and angles for every pair of frequency-1
/// descriptions laid out as `D/2` consecutive 2-blocks.
pub fn procrustes_similarity(y1: &DMatrix<f64>, y2: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_even(y1.nrows())?;
    let p = y1.tr_mul(y2);
    let q = y1.tr_mul(&block_cross(y2));
    let mut sim = DMatrix::zeros(p.nrows(), p.ncols());
    let mut angle = DMatrix::zeros(p.nrows(), p.ncols());
    for j in 0..p.ncols() {
        for i in 0..p.nrows() {
            let (t, s) = procrustes_2x2(p[(i, j)], q[(i, j)]);
            sim[(i, j)] = s;
            angle[(i, j)] = t;
        }
    }
    Ok((sim, angle))
}

/// Pairwise 2×2 Procrustes alignment of frequency-1 descriptions.
pub fn match_procrustes(y1: &DescriptorMatrix, y2: &DescriptorMatrix, cfg: &MatcherConfig) -> Result<MatchSet> {
    cfg.validate()?;
    check_pair(y1, y2)?;
    let (sim, angle) = procrustes_similarity(y1.data(), y2.data())?;
    let matches = mutual_nn_matches(&sim, cfg);
    let angles: Vec<f64> = matches.iter().map(|&(i, j, _)| angle[(i, j)]).collect();
    let mut set = MatchSet::new(Strategy::Procrustes, matches, Steering::PerPair);
    set.per_match_rotation = Some(angles.iter().map(|&t| rotation(t)).collect());
    set.diagnostics.match_angles = Some(angles);
    set.diagnostics.similarity_evaluations = 2 * evaluations(y1.len(), y2.len());
    Ok(set)
}

/// Normalized mean of a calibration set, reshaped to `2 × D/2`.
pub fn prototype_from_calibration(y: &DescriptorMatrix) -> Result<DMatrix<f64>> {
    check_even(y.dim())?;
    if y.is_empty() {
        return Err(Error::InvalidInput("calibration set is empty".into()));
    }
    let mean = y.data().column_mean();
    let n = mean.norm();
    if n <= 1e-12 {
        return Err(Error::InvalidInput("calibration mean is zero".into()));
    }
    Ok(DMatrix::from_column_slice(2, y.dim() / 2, (mean / n).as_slice()))
}

/// Rotate each description so it is aligned with the prototype. Returns the
/// aligned descriptions, their angles, and the indices whose alignment is
/// ill-conditioned.
fn align_to_prototype(y: &DMatrix<f64>, proto: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, Vec<usize>) {
    let p = y.tr_mul(proto);
    let q = y.tr_mul(&block_cross(proto));
    let pnorm = proto.norm();
    let mut out = y.clone();
    let mut angles = Vec::with_capacity(y.ncols());
    let mut flagged = Vec::new();
    for c in 0..y.ncols() {
        // angle taking y onto the prototype
        let (t, s) = procrustes_2x2(p[(c, 0)], q[(c, 0)]);
        if s <= 1e-6 * pnorm * y.column(c).norm() {
            flagged.push(c);
        }
        let r = rotation(t);
        for b in 0..y.nrows() / 2 {
            let v = r * nalgebra::Vector2::new(y[(2 * b, c)], y[(2 * b + 1, c)]);
            out[(2 * b, c)] = v.x;
            out[(2 * b + 1, c)] = v.y;
        }
        angles.push(t);
    }
    (out, angles, flagged)
}

/// Align every description to a prototype with one 2×2 Procrustes solve each,
/// then match the aligned descriptions once.
pub fn match_prototype_procrustes(
    y1: &DescriptorMatrix,
    y2: &DescriptorMatrix,
    prototype: &DMatrix<f64>,
    cfg: &MatcherConfig,
) -> Result<MatchSet> {
    cfg.validate()?;
    check_pair(y1, y2)?;
    check_even(y1.dim())?;
    if prototype.nrows() * prototype.ncols() != y1.dim() {
        return Err(Error::InvalidInput(format!(
            "prototype has {} entries, expected {}",
            prototype.len(),
            y1.dim()
        )));
    }
    if prototype.norm() == 0.0 {
        return Err(Error::InvalidInput("prototype is zero".into()));
    }
    let proto = DMatrix::from_column_slice(y1.dim(), 1, prototype.as_slice());
    let (a1, t1, f1) = align_to_prototype(y1.data(), &proto);
    let (a2, t2, f2) = align_to_prototype(y2.data(), &proto);
    let y = similarity(&a1, &a2);
    let matches = mutual_nn_matches(&y, cfg);
    // aligned = R(t) y, so y₂ ≈ R(t₁ − t₂) y₁
    let angles: Vec<f64> = matches.iter().map(|&(i, j, _)| t1[i] - t2[j]).collect();
    let mut set = MatchSet::new(Strategy::PrototypeProcrustes, matches, Steering::PerPair);
    set.per_match_rotation = Some(angles.iter().map(|&t| rotation(t)).collect());
    set.diagnostics.match_angles = Some(angles);
    set.diagnostics.ill_conditioned_1 = f1;
    set.diagnostics.ill_conditioned_2 = f2;
    set.diagnostics.similarity_evaluations = evaluations(y1.len(), y2.len()) + 2 * (y1.len() + y2.len()) as u64;
    Ok(set)
}

fn project_nonzero(p: &DMatrix<f64>, y: &DMatrix<f64>) -> (DMatrix<f64>, Vec<usize>, Vec<usize>) {
    let mut z = p * y;
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (c, col) in z.column_iter().enumerate() {
        if col.norm() > 1e-12 {
            kept.push(c);
        } else {
            dropped.push(c);
        }
    }
    z = z.select_columns(kept.iter());
    renormalize(&mut z);
    (z, kept, dropped)
}

/// Project both sets onto the invariant subspace of the steerer and match
/// there. Columns annihilated by the projector are left out.
pub fn match_invariant_projection(
    y1: &DescriptorMatrix,
    y2: &DescriptorMatrix,
    s: &Steerer,
    cfg: &MatcherConfig,
) -> Result<MatchSet> {
    cfg.validate()?;
    check_pair(y1, y2)?;
    check_steerer(s, y1)?;
    let p = invariant_projector(s)?;
    let (z1, k1, d1) = project_nonzero(&p, y1.data());
    let (z2, k2, d2) = project_nonzero(&p, y2.data());
    let matches: Vec<_> = mutual_nn_matches(&similarity(&z1, &z2), cfg)
        .into_iter()
        .map(|(i, j, v)| (k1[i], k2[j], v))
        .collect();
    let mut set = MatchSet::new(Strategy::InvariantProjection, matches, Steering::None);
    set.diagnostics.similarity_evaluations = evaluations(z1.ncols(), z2.ncols());
    if z1.ncols() == 0 || z2.ncols() == 0 {
        set.diagnostics
            .notes
            .push("invariant projection annihilated every description of an image".into());
    }
    set.diagnostics.dropped_1 = d1;
    set.diagnostics.dropped_2 = d2;
    Ok(set)
}
