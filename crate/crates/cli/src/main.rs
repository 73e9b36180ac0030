use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use steerers::bench::{detect_in_disk, fit_deca_steerer, run_benchmark, BenchConfig, RotationMode};
use steerers::descriptor::{describe, upsift_steerer, DIM};
use steerers::fit::{fit_generator, fit_steerer_orthogonal, CorrespondenceBatch, Relation};
use steerers::group_reps::{
    build_fixed_steerer, decompose_irreps, random_steerer_init, spectrum, FixedSteererKind, GroupKind, Steerer,
};
use steerers::image::synthetic_texture;
use steerers::io::{
    read_descriptions, read_pgm, read_steerer, write_descriptions, write_pgm, write_steerer, SteererFile,
};
use steerers::keypoints::detect_keypoints;
use steerers::matcher::{MatcherConfig, Strategy};
use steerers::{bench, Error};

#[derive(Parser)]
#[command(name = "steerers", version, about = "Rotation steerers for keypoint descriptions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct MatcherArgs {
    /// Inverse temperature of the dual softmax.
    #[arg(long, default_value_t = 20.0)]
    iota: f64,
    /// Minimum dual-softmax probability of a match.
    #[arg(long, default_value_t = 0.01)]
    threshold: f64,
    /// Keypoints per image used to vote for the rotation in the subset strategy.
    #[arg(long, default_value_t = 1000)]
    subset_size: usize,
}

impl MatcherArgs {
    fn config(&self) -> MatcherConfig {
        MatcherConfig {
            inverse_temperature: self.iota,
            similarity_threshold: self.threshold,
            subset_size: self.subset_size,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Detect keypoints in a PGM image and write their descriptions (DESC1).
    Describe {
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 512)]
        max_keypoints: usize,
        /// Also write the keypoint coordinates as JSON.
        #[arg(long)]
        keypoints: Option<PathBuf>,
    },
    /// Fit a steerer (or a Lie generator, for angle manifests) from DESC1 pairs.
    Fit {
        /// JSON manifest: {"pairs": [{"before", "after", "k" | "angle_deg"}]}.
        manifest: PathBuf,
        /// Group order for step manifests.
        #[arg(long, default_value_t = 4)]
        order: usize,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the JSON fit report (stdout if omitted).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Irreducible decomposition and frequency histogram of a STEER1 file.
    Decompose {
        steerer: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Eigenvalues of a STEER1 file.
    Spectrum {
        steerer: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Match two DESC1 files.
    Match {
        desc1: PathBuf,
        desc2: PathBuf,
        #[arg(long)]
        steerer: PathBuf,
        #[arg(long, default_value = "max-matches", value_parser = parse_strategy)]
        strategy: Strategy,
        #[command(flatten)]
        matcher: MatcherArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the synthetic rotation benchmark on PGM images.
    Bench {
        /// PGM files or directories containing them.
        #[arg(required = true)]
        images: Vec<PathBuf>,
        #[arg(long, default_value = "quarter", value_parser = parse_mode)]
        mode: RotationMode,
        #[arg(long, default_value = "max-matches", value_parser = parse_strategy)]
        strategy: Strategy,
        /// STEER1 steerer; defaults to the exact descriptor steerer in quarter
        /// mode and a freshly fitted C36 steerer in deca mode.
        #[arg(long)]
        steerer: Option<PathBuf>,
        #[arg(long, default_value_t = 512)]
        max_keypoints: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_value = "3,5,10")]
        thresholds: Vec<f64>,
        #[command(flatten)]
        matcher: MatcherArgs,
        /// Output prefix: writes PREFIX.json and PREFIX.csv (JSON to stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Include wall-clock stage times in the JSON.
        #[arg(long)]
        timings: bool,
    },
    /// Write a fixed or random steerer as STEER1.
    Steerer {
        #[arg(long, value_enum)]
        kind: SteererKind,
        #[arg(long, default_value_t = 128)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write procedural benchmark textures as PGM.
    Textures {
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 128)]
        size: usize,
        #[arg(long, default_value_t = 100)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SteererKind {
    Inv,
    Freq1,
    Perm,
    Upsift,
    Random,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<RotationMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Deserialize)]
struct Manifest {
    pairs: Vec<ManifestPair>,
}

#[derive(Deserialize)]
struct ManifestPair {
    before: PathBuf,
    after: PathBuf,
    k: Option<i64>,
    angle_deg: Option<f64>,
}

#[derive(Serialize)]
struct FitReport {
    kind: &'static str,
    dimension: usize,
    group_order: usize,
    residual: f64,
    orthogonality_defect: f64,
    eigenvalues: Vec<[f64; 2]>,
    frequency_histogram: Option<BTreeMap<i64, usize>>,
    notes: Vec<String>,
}

fn emit(value: &serde_json::Value, out: Option<&Path>) -> steerers::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => fs::write(p, text + "\n")?,
        None => print_stdout(&text)?,
    }
    Ok(())
}

/// Print to stdout; a closed pipe (e.g. `| head`) is not an error.
fn print_stdout(text: &str) -> steerers::Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn group_of(file: &SteererFile) -> GroupKind {
    match file {
        SteererFile::Steerer(s) => GroupKind::Cyclic(s.group_order()),
        SteererFile::Generator(_) => GroupKind::So2Generator,
    }
}

fn decomposition_json(file: &SteererFile) -> steerers::Result<serde_json::Value> {
    let dec = decompose_irreps(file.matrix(), group_of(file))?;
    let hist: BTreeMap<String, usize> = dec
        .frequency_histogram()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    Ok(json!({
        "dimension": file.matrix().nrows(),
        "group": dec.group,
        "residual": dec.residual,
        "frequency_histogram": hist,
        "non_admissible_blocks": dec.non_admissible().count(),
        "blocks": dec.blocks,
    }))
}

fn pgm_paths(inputs: &[PathBuf]) -> steerers::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "pgm"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidInput("no PGM images found".into()));
    }
    Ok(out)
}

fn run(cmd: Command) -> steerers::Result<()> {
    match cmd {
        Command::Describe {
            image,
            out,
            max_keypoints,
            keypoints,
        } => {
            let img = read_pgm(&image)?;
            let kps = if img.is_square() && img.width() >= bench::MIN_SIDE {
                detect_in_disk(&img, max_keypoints)
            } else {
                detect_keypoints(&img, max_keypoints)
            };
            let y = describe(&img, &kps)?;
            let degenerate = y.degenerate().iter().filter(|d| **d).count();
            if degenerate > 0 {
                eprintln!("warning: {degenerate} keypoints have degenerate (gradient-free) patches");
            }
            write_descriptions(&out, &y)?;
            if let Some(path) = keypoints {
                let pts: Vec<[f64; 2]> = kps.iter().map(|(x, y)| [x, y]).collect();
                emit(&json!({ "keypoints": pts }), Some(&path))?;
            }
            eprintln!("wrote {} descriptions of dimension {}", y.len(), y.dim());
        }
        Command::Fit {
            manifest,
            order,
            out,
            report,
        } => {
            let text = fs::read_to_string(&manifest)?;
            let m: Manifest = serde_json::from_str(&text)?;
            let base = manifest.parent().unwrap_or(Path::new("."));
            let mut batch = CorrespondenceBatch::new();
            let mut angles = false;
            for p in &m.pairs {
                let relation = match (p.k, p.angle_deg) {
                    (Some(k), None) => Relation::Steps(k),
                    (None, Some(a)) => {
                        angles = true;
                        Relation::Angle(a.to_radians())
                    }
                    _ => {
                        return Err(Error::Format(
                            "each manifest pair needs exactly one of \"k\" and \"angle_deg\"".into(),
                        ))
                    }
                };
                let before = read_descriptions(&base.join(&p.before))?;
                let after = read_descriptions(&base.join(&p.after))?;
                batch.push(before, after, relation)?;
            }
            let (file, residual) = if angles {
                let fit = fit_generator(&batch)?;
                (SteererFile::Generator(fit.generator), fit.residual)
            } else {
                let fit = fit_steerer_orthogonal(&batch, order)?;
                (SteererFile::Steerer(fit.steerer), fit.residual)
            };
            write_steerer(&out, &file)?;
            let q = file.matrix();
            let mut notes = Vec::new();
            let hist = match decompose_irreps(q, group_of(&file)) {
                Ok(dec) => Some(dec.frequency_histogram()),
                Err(e) => {
                    notes.push(format!("decomposition unavailable: {e}"));
                    None
                }
            };
            let rep = FitReport {
                kind: if angles { "generator" } else { "steerer" },
                dimension: q.nrows(),
                group_order: file.order(),
                residual,
                orthogonality_defect: (q.tr_mul(q) - nalgebra::DMatrix::<f64>::identity(q.nrows(), q.nrows())).norm(),
                eigenvalues: spectrum(q)?.iter().map(|z| [z.re, z.im]).collect(),
                frequency_histogram: hist,
                notes,
            };
            emit(&serde_json::to_value(rep)?, report.as_deref())?;
        }
        Command::Decompose { steerer, out } => {
            let file = read_steerer(&steerer)?;
            emit(&decomposition_json(&file)?, out.as_deref())?;
        }
        Command::Spectrum { steerer, out } => {
            let file = read_steerer(&steerer)?;
            let evs = spectrum(file.matrix())?;
            let max = evs.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let values: Vec<[f64; 2]> = evs.iter().map(|z| [z.re, z.im]).collect();
            emit(
                &json!({ "dimension": evs.len(), "max_modulus": max, "eigenvalues": values }),
                out.as_deref(),
            )?;
        }
        Command::Match {
            desc1,
            desc2,
            steerer,
            strategy,
            matcher,
            out,
        } => {
            let y1 = read_descriptions(&desc1)?;
            let y2 = read_descriptions(&desc2)?;
            let s = match read_steerer(&steerer)? {
                SteererFile::Steerer(s) => s,
                SteererFile::Generator(_) => {
                    return Err(Error::InvalidInput(
                        "matching needs a group-element steerer, not a generator".into(),
                    ))
                }
            };
            let ctx = bench::StrategyContext::new(s, strategy)?;
            let set = bench::run_strategy(strategy, &y1, &y2, &ctx, &matcher.config())?;
            emit(&set.to_json(), out.as_deref())?;
        }
        Command::Bench {
            images,
            mode,
            strategy,
            steerer,
            max_keypoints,
            seed,
            thresholds,
            matcher,
            out,
            timings,
        } => {
            let cfg = BenchConfig {
                mode,
                thresholds_px: thresholds,
                max_keypoints,
                strategy,
                seed,
                matcher: matcher.config(),
                timings,
            };
            cfg.validate()?;
            let mut imgs = Vec::new();
            for p in pgm_paths(&images)? {
                let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                imgs.push((name, read_pgm(&p)?));
            }
            let s: Steerer = match (steerer, mode) {
                (Some(p), _) => match read_steerer(&p)? {
                    SteererFile::Steerer(s) => s,
                    SteererFile::Generator(_) => {
                        return Err(Error::InvalidInput("benchmark needs a group-element steerer".into()))
                    }
                },
                (None, RotationMode::Quarter) => upsift_steerer(),
                (None, RotationMode::Deca) => fit_deca_steerer(8, 128, 256, seed)?.steerer,
            };
            let res = run_benchmark(&imgs, &s, &cfg)?;
            for name in &res.skipped {
                eprintln!("warning: skipped {name} (needs a square image of side ≥ {})", bench::MIN_SIDE);
            }
            match out {
                Some(prefix) => {
                    fs::write(prefix.with_extension("json"), res.to_json() + "\n")?;
                    fs::write(prefix.with_extension("csv"), res.to_csv())?;
                }
                None => print_stdout(&res.to_json())?,
            }
        }
        Command::Steerer { kind, dim, seed, out } => {
            let s = match kind {
                SteererKind::Inv => build_fixed_steerer(FixedSteererKind::Inv, dim)?,
                SteererKind::Freq1 => build_fixed_steerer(FixedSteererKind::Freq1, dim)?,
                SteererKind::Perm => build_fixed_steerer(FixedSteererKind::Perm, dim)?,
                SteererKind::Upsift => {
                    if dim != DIM {
                        eprintln!("note: the descriptor steerer is always {DIM}-dimensional");
                    }
                    upsift_steerer()
                }
                SteererKind::Random => Steerer::new(random_steerer_init(dim, seed), 4)?,
            };
            write_steerer(&out, &SteererFile::Steerer(s))?;
        }
        Command::Textures {
            count,
            size,
            seed,
            out_dir,
        } => {
            fs::create_dir_all(&out_dir)?;
            for i in 0..count {
                let img = synthetic_texture(size, seed + i as u64);
                write_pgm(&out_dir.join(format!("texture_{i:02}.pgm")), &img)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
