//! Synthetic rotation benchmark: rotate textures, detect, describe, match and
//! count matches whose ground-truth reprojection lands within a pixel
//! threshold.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::descriptor::{describe, DescriptorMatrix, PATCH};
use crate::error::{Error, Result};
use crate::fit::{fit_steerer_orthogonal, CorrespondenceBatch, Relation, SteererFit};
use crate::group_reps::{frequency_one_coordinates, PlanarRotation, Steerer};
use crate::image::{rotate_image_continuous, rotate_image_quarter, synthetic_texture, GrayImage};
use crate::keypoints::{detect_keypoints, rotate_keypoints, KeypointSet};
use crate::matcher::{
    match_invariant_projection, match_max_matches, match_max_similarity, match_plain, match_procrustes,
    match_prototype_procrustes, match_subset, prototype_from_calibration, renormalize, MatchSet, MatcherConfig,
    Strategy,
};

/// Smallest image side accepted by the benchmark.
pub const MIN_SIDE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RotationMode {
    /// Four quarter turns.
    Quarter,
    /// Thirty-six 10° steps.
    Deca,
}

impl RotationMode {
    pub fn steps(&self) -> usize {
        match self {
            RotationMode::Quarter => 4,
            RotationMode::Deca => 36,
        }
    }

    pub fn angle_deg(&self, step: usize) -> f64 {
        step as f64 * 360.0 / self.steps() as f64
    }
}

impl FromStr for RotationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quarter" => Ok(RotationMode::Quarter),
            "deca" => Ok(RotationMode::Deca),
            other => Err(Error::InvalidInput(format!(
                "unknown rotation mode '{other}' (expected quarter or deca)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchConfig {
    pub mode: RotationMode,
    pub thresholds_px: Vec<f64>,
    pub max_keypoints: usize,
    pub strategy: Strategy,
    pub seed: u64,
    pub matcher: MatcherConfig,
    /// Include per-stage wall times in the report. Off by default so that
    /// identical inputs give byte-identical JSON.
    pub timings: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            mode: RotationMode::Quarter,
            thresholds_px: vec![3.0, 5.0, 10.0],
            max_keypoints: 512,
            strategy: Strategy::MaxMatches,
            seed: 0,
            matcher: MatcherConfig::default(),
            timings: false,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        self.matcher.validate()?;
        if self.thresholds_px.is_empty() {
            return Err(Error::InvalidInput("at least one threshold is required".into()));
        }
        if self.thresholds_px.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::InvalidInput("thresholds must be positive".into()));
        }
        if self.thresholds_px.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("thresholds must be strictly ascending".into()));
        }
        if self.max_keypoints == 0 {
            return Err(Error::InvalidInput("max_keypoints must be positive".into()));
        }
        Ok(())
    }
}

/// An image, its rotated copy, and the exact map between their centered
/// coordinates.
#[derive(Debug, Clone)]
pub struct ImagePair {
    pub first: GrayImage,
    pub second: GrayImage,
    pub rotation: PlanarRotation,
}

/// Rotate `img` anticlockwise by `angle` radians: a pixel permutation at
/// quarter turns, bilinear otherwise.
pub fn generate_pair(img: &GrayImage, angle: f64) -> Result<ImagePair> {
    let rotation = PlanarRotation::new(angle);
    let quarter = (0..4).find(|&k| PlanarRotation::quarter(k) == rotation);
    let second = match quarter {
        Some(k) => rotate_image_quarter(img, k)?,
        None => rotate_image_continuous(img, angle)?,
    };
    Ok(ImagePair {
        first: img.clone(),
        second,
        rotation,
    })
}

/// Radius within which a description patch stays inside the valid (non-fill)
/// region of any rotation of a square image.
fn valid_radius(img: &GrayImage) -> f64 {
    let half = (img.width().min(img.height()) as f64 - 1.0) / 2.0;
    half - (PATCH as f64 / 2.0 + 1.0) * std::f64::consts::SQRT_2 - 1.0
}

/// Strongest keypoints inside the rotation-safe disk.
pub fn detect_in_disk(img: &GrayImage, max_n: usize) -> KeypointSet {
    let all = detect_keypoints(img, usize::MAX);
    let r = valid_radius(img);
    let keep: Vec<usize> = (0..all.len())
        .filter(|&i| {
            let (x, y) = all.point(i);
            x.hypot(y) <= r
        })
        .take(max_n)
        .collect();
    all.select(&keep)
}

/// Precomputed data for the strategies that need it.
#[derive(Debug, Clone)]
pub struct StrategyContext {
    pub steerer: Steerer,
    /// Frequency-1 block coordinates, for the Procrustes strategies.
    pub frequency_one: Option<DMatrix<f64>>,
}

impl StrategyContext {
    pub fn new(steerer: Steerer, strategy: Strategy) -> Result<Self> {
        let frequency_one = if strategy.needs_frequency_one() {
            Some(frequency_one_coordinates(&steerer)?)
        } else {
            None
        };
        Ok(Self { steerer, frequency_one })
    }

    fn to_frequency_one(&self, y: &DescriptorMatrix) -> DescriptorMatrix {
        let f = self.frequency_one.as_ref().expect("frequency-1 coordinates prepared");
        let mut z = f * y.data();
        renormalize(&mut z);
        DescriptorMatrix::new(z)
    }
}

/// Run one matching strategy. Procrustes strategies first move both sets to
/// the steerer's frequency-1 coordinates; the prototype is the normalized
/// mean of the first set.
pub fn run_strategy(
    strategy: Strategy,
    y1: &DescriptorMatrix,
    y2: &DescriptorMatrix,
    ctx: &StrategyContext,
    cfg: &MatcherConfig,
) -> Result<MatchSet> {
    let s = &ctx.steerer;
    match strategy {
        Strategy::Plain => match_plain(y1, y2, cfg),
        Strategy::MaxMatches => match_max_matches(y1, y2, s, cfg),
        Strategy::MaxSimilarity => match_max_similarity(y1, y2, s, cfg),
        Strategy::Subset => match_subset(y1, y2, s, cfg),
        Strategy::InvariantProjection => match_invariant_projection(y1, y2, s, cfg),
        Strategy::Procrustes => match_procrustes(&ctx.to_frequency_one(y1), &ctx.to_frequency_one(y2), cfg),
        Strategy::PrototypeProcrustes => {
            let (a, b) = (ctx.to_frequency_one(y1), ctx.to_frequency_one(y2));
            let proto = prototype_from_calibration(&a)?;
            match_prototype_procrustes(&a, &b, &proto, cfg)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AngleRow {
    pub angle_deg: f64,
    pub n_matches: usize,
    /// One entry per threshold.
    pub n_correct: Vec<usize>,
    pub ratio: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageResult {
    pub name: String,
    pub n_keypoints: usize,
    pub angles: Vec<AngleRow>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StageTimes {
    pub detect_s: f64,
    pub describe_s: f64,
    pub match_s: f64,
    pub score_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub mode: RotationMode,
    pub strategy: Strategy,
    pub seed: u64,
    pub max_keypoints: usize,
    pub thresholds_px: Vec<f64>,
    /// Pooled over images.
    pub angles: Vec<AngleRow>,
    /// Mean over angles of the pooled per-angle ratio, per threshold.
    pub mean_ratio: Vec<f64>,
    pub images: Vec<ImageResult>,
    pub skipped: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<StageTimes>,
}

impl BenchResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bench result is serializable")
    }

    /// `angle_deg,threshold_px,n_matches,n_correct,ratio`, one row per angle
    /// and threshold.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("angle_deg,threshold_px,n_matches,n_correct,ratio\n");
        for row in &self.angles {
            for (t, thr) in self.thresholds_px.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    row.angle_deg, thr, row.n_matches, row.n_correct[t], row.ratio[t]
                )
                .unwrap();
            }
        }
        out
    }
}

fn ratio(correct: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

/// Count matches whose first keypoint, mapped by the ground-truth rotation,
/// lands within each threshold of its partner (one-way reprojection error).
pub fn score_matches(
    matches: &MatchSet,
    kp1: &KeypointSet,
    kp2: &KeypointSet,
    rotation: &PlanarRotation,
    thresholds: &[f64],
) -> Vec<usize> {
    let mut correct = vec![0; thresholds.len()];
    for &(i, j, _) in &matches.matches {
        let (x, y) = kp1.point(i);
        let (gx, gy) = rotation.apply(x, y);
        let (px, py) = kp2.point(j);
        let err = (gx - px).hypot(gy - py);
        for (t, thr) in thresholds.iter().enumerate() {
            if err <= *thr {
                correct[t] += 1;
            }
        }
    }
    correct
}

struct Job {
    image: usize,
    step: usize,
}

struct JobOutcome {
    n_matches: usize,
    n_correct: Vec<usize>,
    times: StageTimes,
}

fn run_job(
    img: &GrayImage,
    kp1: &KeypointSet,
    y1: &DescriptorMatrix,
    angle: f64,
    ctx: &StrategyContext,
    cfg: &BenchConfig,
) -> Result<JobOutcome> {
    let mut times = StageTimes::default();
    let pair = generate_pair(img, angle)?;
    let t = Instant::now();
    let kp2 = detect_in_disk(&pair.second, cfg.max_keypoints);
    times.detect_s += t.elapsed().as_secs_f64();
    let t = Instant::now();
    let y2 = describe(&pair.second, &kp2)?;
    times.describe_s += t.elapsed().as_secs_f64();
    let t = Instant::now();
    let matches = if kp1.is_empty() || kp2.is_empty() {
        None
    } else {
        Some(run_strategy(cfg.strategy, y1, &y2, ctx, &cfg.matcher)?)
    };
    times.match_s += t.elapsed().as_secs_f64();
    let t = Instant::now();
    let (n_matches, n_correct) = match &matches {
        Some(m) => (m.len(), score_matches(m, kp1, &kp2, &pair.rotation, &cfg.thresholds_px)),
        None => (0, vec![0; cfg.thresholds_px.len()]),
    };
    times.score_s += t.elapsed().as_secs_f64();
    Ok(JobOutcome {
        n_matches,
        n_correct,
        times,
    })
}

/// Run the benchmark over named square images. Images smaller than
/// [`MIN_SIDE`] or not square are skipped with a warning.
pub fn run_benchmark(images: &[(String, GrayImage)], steerer: &Steerer, cfg: &BenchConfig) -> Result<BenchResult> {
    cfg.validate()?;
    if images.is_empty() {
        return Err(Error::InvalidInput("no benchmark images given".into()));
    }
    let ctx = StrategyContext::new(steerer.clone(), cfg.strategy)?;
    let mut skipped = Vec::new();
    let mut usable = Vec::new();
    for (name, img) in images {
        if !img.is_square() || img.width() < MIN_SIDE {
            log::warn!("skipping {name}: {}x{} is not a square of side ≥ {MIN_SIDE}", img.width(), img.height());
            skipped.push(name.clone());
        } else {
            usable.push((name, img));
        }
    }

    let mut total = StageTimes::default();
    let prepared: Vec<(KeypointSet, DescriptorMatrix)> = usable
        .par_iter()
        .map(|(_, img)| {
            let kp = detect_in_disk(img, cfg.max_keypoints);
            let y = describe(img, &kp)?;
            Ok((kp, y))
        })
        .collect::<Result<_>>()?;

    let steps = cfg.mode.steps();
    let jobs: Vec<Job> = (0..usable.len())
        .flat_map(|image| (0..steps).map(move |step| Job { image, step }))
        .collect();
    let outcomes: Vec<JobOutcome> = jobs
        .par_iter()
        .map(|job| {
            let (kp1, y1) = &prepared[job.image];
            let angle = (cfg.mode.angle_deg(job.step)).to_radians();
            run_job(usable[job.image].1, kp1, y1, angle, &ctx, cfg)
        })
        .collect::<Result<_>>()?;

    let nt = cfg.thresholds_px.len();
    let mut pooled: Vec<(usize, Vec<usize>)> = vec![(0, vec![0; nt]); steps];
    let mut per_image = Vec::with_capacity(usable.len());
    for (i, (name, _)) in usable.iter().enumerate() {
        let mut rows = Vec::with_capacity(steps);
        for step in 0..steps {
            let o = &outcomes[i * steps + step];
            total.detect_s += o.times.detect_s;
            total.describe_s += o.times.describe_s;
            total.match_s += o.times.match_s;
            total.score_s += o.times.score_s;
            pooled[step].0 += o.n_matches;
            for t in 0..nt {
                pooled[step].1[t] += o.n_correct[t];
            }
            rows.push(AngleRow {
                angle_deg: cfg.mode.angle_deg(step),
                n_matches: o.n_matches,
                n_correct: o.n_correct.clone(),
                ratio: o.n_correct.iter().map(|&c| ratio(c, o.n_matches)).collect(),
            });
        }
        per_image.push(ImageResult {
            name: (*name).clone(),
            n_keypoints: prepared[i].0.len(),
            angles: rows,
        });
    }
    let angles: Vec<AngleRow> = pooled
        .into_iter()
        .enumerate()
        .map(|(step, (n, c))| AngleRow {
            angle_deg: cfg.mode.angle_deg(step),
            n_matches: n,
            ratio: c.iter().map(|&x| ratio(x, n)).collect(),
            n_correct: c,
        })
        .collect();
    let mean_ratio = (0..nt)
        .map(|t| angles.iter().map(|a| a.ratio[t]).sum::<f64>() / angles.len().max(1) as f64)
        .collect();
    Ok(BenchResult {
        mode: cfg.mode,
        strategy: cfg.strategy,
        seed: cfg.seed,
        max_keypoints: cfg.max_keypoints,
        thresholds_px: cfg.thresholds_px.clone(),
        angles,
        mean_ratio,
        images: per_image,
        skipped,
        timings: cfg.timings.then_some(total),
    })
}

/// Fit a `C_36` steerer for the descriptor from synthetic textures rotated by
/// 10°, 20°, …, 180°: keypoints detected in the upright texture are carried to
/// the rotated one by the exact rotation and described in both.
pub fn fit_deca_steerer(textures_per_angle: usize, size: usize, max_keypoints: usize, seed: u64) -> Result<SteererFit> {
    let per_angle: Vec<Vec<(DescriptorMatrix, DescriptorMatrix, i64)>> = (1..=18i64)
        .into_par_iter()
        .map(|k| {
            (0..textures_per_angle)
                .map(|t| {
                    let tex_seed = seed
                        .wrapping_mul(1_000_003)
                        .wrapping_add(k as u64 * 1009 + t as u64);
                    let img = synthetic_texture(size, tex_seed);
                    let pair = generate_pair(&img, (k as f64 * 10.0).to_radians())?;
                    let kp = detect_in_disk(&img, max_keypoints);
                    let before = describe(&pair.first, &kp)?;
                    let after = describe(&pair.second, &rotate_keypoints(&kp, &pair.rotation))?;
                    Ok((before, after, k))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut batch = CorrespondenceBatch::new();
    for (before, after, k) in per_angle.into_iter().flatten() {
        if !before.is_empty() {
            batch.push(before, after, Relation::Steps(k))?;
        }
    }
    fit_steerer_orthogonal(&batch, 36)
}
