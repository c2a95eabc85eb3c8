//! Command-line front end. Every side effect of the crate (file I/O, thread
//! pool setup, process exit codes) lives here.
//!
//! Settings resolve in three layers: a flag wins over the TOML file given by
//! `--config`, which wins over the subcommand default.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::basis::{order_set, radial_orthogonality, validate_order, BasisKind, Norm, OrderPair, OrderSet};
use crate::detect::{detect_peaks, multiscale_distance_map, template_signature};
use crate::error::{Error, Result};
use crate::forensics::{
    copymove_detect, linear_scales, phash_compare, phash_generate, score_mask, CopyMoveConfig, HashConfig, HashDigest,
};
use crate::formats::{encode_mask, encode_pgm8, load_image, load_mask, normalized_map};
use crate::invariants::{magnitude_features, pool_scales, pooled_features, Pooling};
use crate::kernelgen::{bank_build, kernel, IntegrationStrategy, KernelBank};
use crate::matching::{dense_match, pixel_patch_features, repeatability, Affine, MatchOptions};
use crate::metrics::{calculation_error, decomposition_benchmark, BenchOptions, BenchPath};
use crate::raster::GrayImage;
use crate::transform::{decompose, padded_size, DecompositionPath};

#[derive(Parser, Debug)]
#[command(name = "direp", version, about = "Dense invariant representation engine")]
struct Cli {
    /// TOML file with default settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for internal parallelism (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every feature-producing subcommand.
#[derive(Args, Debug, Clone, Default)]
struct FeatureArgs {
    /// Basis family: zm, ofmm, efm, pcet, pct, pst, rhfm.
    #[arg(long)]
    basis: Option<String>,
    /// Order-set norm: l1 or inf.
    #[arg(long)]
    norm: Option<String>,
    /// Order bound.
    #[arg(long = "K")]
    k: Option<u32>,
    /// Scales as `8,12,16` or `lo:hi:count` (evenly spaced, rounded).
    #[arg(long)]
    scales: Option<String>,
    /// `zoa` or `upN`.
    #[arg(long)]
    strategy: Option<String>,
    /// Scale pooling: average or max.
    #[arg(long)]
    pooling: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build or inspect a kernel-spectrum bank.
    Kernels {
        #[command(subcommand)]
        action: KernelsAction,
    },
    /// Dense moment field (or pooled features) of an image.
    Decompose {
        image: PathBuf,
        #[command(flatten)]
        features: FeatureArgs,
        /// spatial or fft.
        #[arg(long)]
        path: Option<String>,
        /// Precomputed bank for the fft path.
        #[arg(long)]
        bank: Option<PathBuf>,
        /// Write pooled magnitude features instead of complex moments.
        #[arg(long)]
        pooled: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Calculation error on the unity image.
    Ce {
        #[arg(long)]
        basis: Option<String>,
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long = "K")]
        k: Option<u32>,
        #[arg(long)]
        w: Option<usize>,
    },
    /// Single-threaded decomposition timing per path and scale.
    Bench {
        #[arg(long)]
        basis: Option<String>,
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        scales: Option<String>,
        /// Square image side.
        #[arg(long, default_value_t = 512)]
        size: usize,
        #[arg(long, default_value_t = 1)]
        n: i32,
        #[arg(long, default_value_t = 1)]
        m: i32,
        /// Comma-separated subset of spatial, fft, fft+bank.
        #[arg(long, default_value = "spatial,fft,fft+bank")]
        paths: String,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Template detection in a scene.
    Detect {
        template: PathBuf,
        scene: PathBuf,
        #[command(flatten)]
        features: FeatureArgs,
        /// Distances below this are detections.
        #[arg(long)]
        threshold: f64,
        /// Non-maximum suppression radius in pixels.
        #[arg(long, default_value_t = 8.0)]
        nms: f64,
        /// Detections CSV; standard output when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Distance map as a normalized PGM.
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Dense matching between two images.
    Match {
        source: PathBuf,
        target: PathBuf,
        #[command(flatten)]
        features: FeatureArgs,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0.0)]
        min_offset: f64,
        /// Use raw pixel patches sampled at this spacing instead of moments.
        #[arg(long)]
        raw_spacing: Option<f64>,
        /// Ground-truth translation `dx,dy` for repeatability.
        #[arg(long, conflicts_with = "gt_rotation")]
        gt_shift: Option<String>,
        /// Ground-truth rotation in degrees about the image center.
        #[arg(long)]
        gt_rotation: Option<f64>,
        #[arg(long, default_value_t = 2.0)]
        epsilon: f64,
        /// Match field as a `.dirf` file.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Offset-length map as a normalized PGM.
        #[arg(long)]
        offsets: Option<PathBuf>,
    },
    /// Copy-move forgery localization.
    Copymove {
        image: PathBuf,
        #[command(flatten)]
        features: FeatureArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        iterations: Option<usize>,
        /// Shorter images are upsampled until their long edge reaches this.
        #[arg(long)]
        long_edge: Option<usize>,
        /// Ground-truth mask; enables the precision,recall,f1 report.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Pixels this close to a truth boundary are not scored.
        #[arg(long, default_value_t = 0)]
        border: usize,
        /// Output mask; defaults to `<image stem>.mask.pgm` beside the input.
        #[arg(long)]
        mask: Option<PathBuf>,
    },
    /// Perceptual hash generation and comparison.
    Phash {
        #[command(subcommand)]
        action: PhashAction,
    },
    /// Analytic-oracle self checks.
    Selftest,
}

#[derive(Subcommand, Debug)]
enum KernelsAction {
    Build {
        #[command(flatten)]
        features: FeatureArgs,
        /// Image size `WxH` the bank will serve.
        #[arg(long)]
        size: String,
        /// Derive larger scales from the smallest by spectrum rescaling.
        #[arg(long)]
        rescale: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    Inspect {
        bank: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum PhashAction {
    Gen {
        image: PathBuf,
        #[command(flatten)]
        features: FeatureArgs,
        #[arg(long)]
        stride: Option<usize>,
        #[arg(short, long)]
        output: PathBuf,
    },
    Cmp {
        reference: PathBuf,
        query: PathBuf,
        /// Flagged-cell mask as PGM (one pixel per cell).
        #[arg(long)]
        mask: Option<PathBuf>,
    },
}

/// Contents of a `--config` file. Unknown keys are rejected.
#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    basis: Option<String>,
    norm: Option<String>,
    #[serde(rename = "K")]
    k: Option<u32>,
    scales: Option<ScaleSpec>,
    strategy: Option<String>,
    pooling: Option<String>,
    path: Option<String>,
    seed: Option<u64>,
    threads: Option<usize>,
    iterations: Option<usize>,
    w: Option<usize>,
}

#[derive(Deserialize, Debug)]
#[serde(untagged)]
enum ScaleSpec {
    List(Vec<usize>),
    Text(String),
}

/// Fully resolved feature settings, validated before any computation.
#[derive(Debug, Clone)]
struct RunConfig {
    kind: BasisKind,
    norm: Norm,
    k: u32,
    scales: Vec<usize>,
    strategy: IntegrationStrategy,
    pooling: Pooling,
}

impl RunConfig {
    fn orders(&self) -> OrderSet {
        order_set(self.kind, self.norm, self.k)
    }
}

fn parse_scales(text: &str) -> Result<Vec<usize>> {
    let bad = |reason: String| Error::InvalidConfig { field: "scales", reason };
    let parts: Vec<&str> = text.split(':').collect();
    let scales = if parts.len() == 3 {
        let n = |s: &str| s.trim().parse::<usize>().map_err(|e| bad(format!("`{s}`: {e}")));
        linear_scales(n(parts[0])?, n(parts[1])?, n(parts[2])?)
    } else {
        text.split(',')
            .map(|s| s.trim().parse::<usize>().map_err(|e| bad(format!("`{s}`: {e}"))))
            .collect::<Result<Vec<_>>>()?
    };
    if scales.is_empty() || scales.contains(&0) {
        return Err(bad(format!("`{text}` must list positive scales")));
    }
    Ok(scales)
}

fn parse_pair<T: std::str::FromStr>(text: &str, sep: char, field: &'static str) -> Result<(T, T)> {
    let bad = || Error::InvalidConfig {
        field,
        reason: format!("expected two values separated by `{sep}`, got `{text}`"),
    };
    let (a, b) = text.split_once(sep).ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

struct Context {
    file: FileConfig,
}

impl Context {
    /// Flag, then file, then `default`.
    fn resolve(&self, flags: &FeatureArgs, default: RunConfig) -> Result<RunConfig> {
        let pick = |flag: &Option<String>, file: &Option<String>| flag.clone().or_else(|| file.clone());
        let kind = match pick(&flags.basis, &self.file.basis) {
            Some(s) => s.parse()?,
            None => default.kind,
        };
        let norm = match pick(&flags.norm, &self.file.norm) {
            Some(s) => s.parse()?,
            None => default.norm,
        };
        let strategy = match pick(&flags.strategy, &self.file.strategy) {
            Some(s) => s.parse()?,
            None => default.strategy,
        };
        let pooling = match pick(&flags.pooling, &self.file.pooling) {
            Some(s) => s.parse()?,
            None => default.pooling,
        };
        let scales = match (&flags.scales, &self.file.scales) {
            (Some(s), _) => parse_scales(s)?,
            (None, Some(ScaleSpec::Text(s))) => parse_scales(s)?,
            (None, Some(ScaleSpec::List(v))) => {
                if v.is_empty() || v.contains(&0) {
                    return Err(Error::InvalidConfig {
                        field: "scales",
                        reason: "must list positive scales".into(),
                    });
                }
                v.clone()
            }
            (None, None) => default.scales,
        };
        let k = flags.k.or(self.file.k).unwrap_or(default.k);
        if k == 0 {
            return Err(Error::InvalidConfig {
                field: "K",
                reason: "order bound must be positive".into(),
            });
        }
        Ok(RunConfig {
            kind,
            norm,
            k,
            scales,
            strategy,
            pooling,
        })
    }

    fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.file.seed).unwrap_or(0)
    }

    fn iterations(&self, flag: Option<usize>, default: usize) -> usize {
        flag.or(self.file.iterations).unwrap_or(default)
    }

    fn path(&self, flag: &Option<String>) -> Result<DecompositionPath> {
        match flag.clone().or_else(|| self.file.path.clone()) {
            Some(s) => s.parse(),
            None => Ok(DecompositionPath::Fft),
        }
    }
}

fn default_features() -> RunConfig {
    RunConfig {
        kind: BasisKind::Pct,
        norm: Norm::L1,
        k: 3,
        scales: vec![8, 16, 24],
        strategy: IntegrationStrategy::Zoa,
        pooling: Pooling::Average,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Parses `args` (including the program name) and runs the subcommand,
/// returning the process exit code: 0 success, 1 usage, 2 I/O, 3 computation.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut out = std::io::stdout();
    match execute(cli, &mut out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli, out: &mut (dyn Write + Send)) -> Result<i32> {
    let file = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            toml::from_str(&text).map_err(|e| Error::InvalidConfig {
                field: "config",
                reason: e.to_string(),
            })?
        }
        None => FileConfig::default(),
    };
    let ctx = Context { file };
    let threads = cli.threads.or(ctx.file.threads).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig {
            field: "threads",
            reason: e.to_string(),
        })?;
    pool.install(|| dispatch(cli.command, &ctx, out))
}

fn dispatch(command: Command, ctx: &Context, out: &mut (dyn Write + Send)) -> Result<i32> {
    match command {
        Command::Kernels { action } => kernels(action, ctx, out),
        Command::Decompose {
            image,
            features,
            path,
            bank,
            pooled,
            output,
        } => {
            let cfg = ctx.resolve(&features, default_features())?;
            let path = ctx.path(&path)?;
            let img = load_image(&image)?;
            let orders = cfg.orders();
            if pooled {
                let field = if bank.is_none() && path == DecompositionPath::Fft {
                    pooled_features(&img, cfg.kind, &orders, &cfg.scales, cfg.strategy, cfg.pooling)?
                } else {
                    let bank = bank.map(|p| read_bank(&p)).transpose()?;
                    let field = decompose(&img, cfg.kind, &orders, &cfg.scales, cfg.strategy, path, bank.as_ref())?;
                    pool_scales(&magnitude_features(&field, &orders)?, cfg.pooling)?
                };
                field.write_dirf(create(&output)?, cfg.kind, &orders)?;
            } else {
                let bank = bank.map(|p| read_bank(&p)).transpose()?;
                let field = decompose(&img, cfg.kind, &orders, &cfg.scales, cfg.strategy, path, bank.as_ref())?;
                field.write_dirf(create(&output)?)?;
            }
            Ok(0)
        }
        Command::Ce { basis, strategy, k, w } => {
            let kind: BasisKind = basis.or_else(|| ctx.file.basis.clone()).unwrap_or_else(|| "pct".into()).parse()?;
            let strategy: IntegrationStrategy =
                strategy.or_else(|| ctx.file.strategy.clone()).unwrap_or_else(|| "zoa".into()).parse()?;
            let k = k.or(ctx.file.k).unwrap_or(20);
            let w = w.or(ctx.file.w).unwrap_or(8);
            if w == 0 {
                return Err(Error::InvalidConfig {
                    field: "w",
                    reason: "scale must be positive".into(),
                });
            }
            let r = calculation_error(kind, strategy, k, w)?;
            writeln!(out, "kind,strategy,K,w,ce")?;
            writeln!(out, "{},{},{},{},{:e}", r.kind.tag().to_ascii_lowercase(), r.strategy, r.k, r.w, r.ce)?;
            Ok(0)
        }
        Command::Bench {
            basis,
            strategy,
            scales,
            size,
            n,
            m,
            paths,
            runs,
            seed,
        } => {
            let features = FeatureArgs {
                basis,
                strategy,
                scales,
                ..Default::default()
            };
            let cfg = ctx.resolve(
                &features,
                RunConfig {
                    scales: (1..=40).map(|i| 5 * i).collect(),
                    ..default_features()
                },
            )?;
            let paths = paths.split(',').map(|p| p.trim().parse()).collect::<Result<Vec<BenchPath>>>()?;
            let order = OrderPair::new(n, m);
            validate_order(cfg.kind, order)?;
            let opts = BenchOptions {
                runs,
                seed: ctx.seed(seed),
                strategy: cfg.strategy,
            };
            // the benchmark runs on its own single-thread pool
            let reports = decomposition_benchmark((size, size), cfg.kind, order, &cfg.scales, &paths, opts)?;
            writeln!(out, "path,w,seconds")?;
            for r in reports {
                for (w, s) in r.scales.iter().zip(&r.seconds) {
                    writeln!(out, "{},{w},{s:e}", r.path.tag())?;
                }
            }
            Ok(0)
        }
        Command::Detect {
            template,
            scene,
            features,
            threshold,
            nms,
            output,
            map,
        } => {
            let cfg = ctx.resolve(&features, default_features())?;
            let orders = cfg.orders();
            let tpl = load_image(&template)?;
            let scn = load_image(&scene)?;
            let sig = template_signature(&tpl, cfg.kind, &orders, &cfg.scales, cfg.strategy)?;
            let dist = multiscale_distance_map(&scn, &sig, cfg.kind, &orders, cfg.strategy)?;
            let found = detect_peaks(&dist, threshold, nms);
            let mut csv = String::from("u,v,w,score\n");
            for d in &found.detections {
                csv.push_str(&format!("{},{},{},{:e}\n", d.u, d.v, d.w, d.score));
            }
            match output {
                Some(p) => write_file(&p, csv.as_bytes())?,
                None => out.write_all(csv.as_bytes())?,
            }
            if let Some(p) = map {
                write_file(&p, &encode_pgm8(&normalized_map(&dist.values)))?;
            }
            Ok(0)
        }
        Command::Match {
            source,
            target,
            features,
            iterations,
            seed,
            min_offset,
            raw_spacing,
            gt_shift,
            gt_rotation,
            epsilon,
            output,
            offsets,
        } => {
            let cfg = ctx.resolve(&features, default_features())?;
            let src = load_image(&source)?;
            let dst = load_image(&target)?;
            let orders = cfg.orders();
            let feats = |img: &GrayImage| match raw_spacing {
                Some(s) => pixel_patch_features(img, orders.len(), s),
                None => pooled_features(img, cfg.kind, &orders, &cfg.scales, cfg.strategy, cfg.pooling),
            };
            let options = MatchOptions {
                iterations: ctx.iterations(iterations, MatchOptions::default().iterations),
                seed: ctx.seed(seed),
                min_offset,
            };
            let mf = dense_match(&feats(&src)?, &feats(&dst)?, options)?;
            if let Some(p) = output {
                mf.write_dirf(create(&p)?)?;
            }
            if let Some(p) = offsets {
                write_file(&p, &encode_pgm8(&normalized_map(&mf.offset_length_map())))?;
            }
            let gt = match (gt_shift, gt_rotation) {
                (Some(s), _) => {
                    let (dx, dy) = parse_pair::<f64>(&s, ',', "gt_shift")?;
                    Some(Affine::translation(dx, dy))
                }
                (None, Some(deg)) => {
                    let center = (src.width() as f64 / 2.0, src.height() as f64 / 2.0);
                    Some(Affine::rotation(deg.to_radians(), center))
                }
                (None, None) => None,
            };
            if let Some(gt) = gt {
                writeln!(out, "epsilon,repeatability")?;
                writeln!(out, "{epsilon},{}", repeatability(&mf, &gt, epsilon))?;
            }
            Ok(0)
        }
        Command::Copymove {
            image,
            features,
            seed,
            iterations,
            long_edge,
            truth,
            border,
            mask,
        } => {
            let base = CopyMoveConfig::default();
            let rc = ctx.resolve(
                &features,
                RunConfig {
                    kind: base.kind,
                    norm: base.norm,
                    k: base.order_bound,
                    scales: base.scales.clone(),
                    strategy: base.strategy,
                    pooling: base.pooling,
                },
            )?;
            let cfg = CopyMoveConfig {
                kind: rc.kind,
                norm: rc.norm,
                order_bound: rc.k,
                scales: rc.scales,
                strategy: rc.strategy,
                pooling: rc.pooling,
                iterations: ctx.iterations(iterations, base.iterations),
                upsample_long_edge: long_edge.unwrap_or(base.upsample_long_edge),
                ..base
            };
            cfg.validate()?;
            let img = load_image(&image)?;
            let truth = truth.map(load_mask).transpose()?;
            let result = copymove_detect(&img, &cfg, ctx.seed(seed))?;
            let mask_path = mask.unwrap_or_else(|| {
                let stem = image.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                image.with_file_name(format!("{stem}.mask.pgm"))
            });
            write_file(&mask_path, &encode_mask(&result.mask))?;
            eprintln!(
                "{} of {} pixels flagged in {:.1} s",
                result.positives(),
                result.mask.as_slice().len(),
                result.runtime
            );
            if let Some(t) = truth {
                let s = score_mask(&result.mask, &t, border)?;
                writeln!(out, "precision,recall,f1")?;
                writeln!(out, "{},{},{}", s.precision, s.recall, s.f1)?;
            }
            Ok(0)
        }
        Command::Phash { action } => match action {
            PhashAction::Gen {
                image,
                features,
                stride,
                output,
            } => {
                let base = HashConfig::default();
                let rc = ctx.resolve(
                    &features,
                    RunConfig {
                        kind: base.kind,
                        norm: base.norm,
                        k: base.order_bound,
                        scales: base.scales.clone(),
                        strategy: base.strategy,
                        pooling: base.pooling,
                    },
                )?;
                let cfg = HashConfig {
                    stride: stride.unwrap_or(base.stride),
                    kind: rc.kind,
                    norm: rc.norm,
                    order_bound: rc.k,
                    scales: rc.scales,
                    pooling: rc.pooling,
                    strategy: rc.strategy,
                };
                cfg.validate()?;
                let digest = phash_generate(&load_image(&image)?, &cfg)?;
                write_file(&output, &digest.to_bytes())?;
                Ok(0)
            }
            PhashAction::Cmp { reference, query, mask } => {
                let a = HashDigest::read_from(BufReader::new(File::open(&reference)?))?;
                let b = HashDigest::read_from(BufReader::new(File::open(&query)?))?;
                let cmp = phash_compare(&a, &b)?;
                let flagged = cmp.mask.as_slice().iter().filter(|&&f| f).count();
                writeln!(out, "cells,flagged,threshold")?;
                writeln!(out, "{},{flagged},{:e}", a.cells(), cmp.threshold)?;
                if let Some(p) = mask {
                    write_file(&p, &encode_mask(&cmp.mask))?;
                }
                Ok(0)
            }
        },
        Command::Selftest => selftest(out),
    }
}

fn read_bank(path: &Path) -> Result<KernelBank> {
    KernelBank::read_from(BufReader::new(File::open(path)?))
}

fn kernels(action: KernelsAction, ctx: &Context, out: &mut (dyn Write + Send)) -> Result<i32> {
    match action {
        KernelsAction::Build {
            features,
            size,
            rescale,
            output,
        } => {
            let cfg = ctx.resolve(&features, default_features())?;
            let (w, h) = parse_pair::<usize>(&size, 'x', "size")?;
            let w_max = *cfg.scales.iter().max().expect("resolved scales are non-empty");
            let (p, q) = padded_size(w, h, w_max);
            let bank = bank_build(cfg.kind, &cfg.orders(), &cfg.scales, p, q, cfg.strategy, rescale)?;
            let mut file = create(&output)?;
            bank.write_to(&mut file)?;
            file.flush()?;
            eprintln!("{} spectra of {p}x{q} written to {}", bank.len(), output.display());
            Ok(0)
        }
        KernelsAction::Inspect { bank } => {
            let bank = read_bank(&bank)?;
            writeln!(out, "kind,n,m,w,width,height,strategy,dc_re,dc_im")?;
            for (key, spec) in bank.iter() {
                let dc = spec.dc();
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{:e},{:e}",
                    key.kind.tag().to_ascii_lowercase(),
                    key.order.n,
                    key.order.m,
                    key.w,
                    spec.width(),
                    spec.height(),
                    bank.strategy(),
                    dc.re,
                    dc.im
                )?;
            }
            Ok(0)
        }
    }
}

fn check(out: &mut (dyn Write + Send), name: &str, ok: bool, detail: String) -> Result<bool> {
    writeln!(out, "{} {name}: {detail}", if ok { "PASS" } else { "FAIL" })?;
    Ok(ok)
}

/// Checks with closed-form answers. Returns 3 when any check fails.
fn selftest(out: &mut (dyn Write + Send)) -> Result<i32> {
    let mut all = true;

    // unity image: Z_00 = sqrt(pi), every m != 0 moment vanishes
    let up8 = IntegrationStrategy::Upsample(8);
    let z00 = kernel(BasisKind::Pct, OrderPair::new(0, 0), 8, up8)?.sum();
    let z12 = kernel(BasisKind::Pct, OrderPair::new(1, 2), 8, up8)?.sum();
    let err = (z00 - Complex64::new(PI.sqrt(), 0.0)).norm().max(z12.norm());
    all &= check(out, "unity image", err <= 5e-3, format!("max error {err:.2e}"))?;

    // radial orthogonality: <R_a, R_b> = delta_ab / (2 pi)
    let mut worst = 0.0f64;
    for kind in BasisKind::ALL {
        let m = if kind == BasisKind::Pst { 1 } else { 0 };
        let orders: Vec<OrderPair> = (0..=6)
            .map(|n| OrderPair::new(n, m))
            .filter(|&o| validate_order(kind, o).is_ok())
            .collect();
        for &a in &orders {
            for &b in &orders {
                let want = if a == b { 1.0 / (2.0 * PI) } else { 0.0 };
                let got = radial_orthogonality(kind, a, b, 4096)?;
                worst = worst.max((got - Complex64::new(want, 0.0)).norm());
            }
        }
    }
    all &= check(out, "orthogonality quadrature", worst <= 1e-6, format!("max error {worst:.2e}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let img = GrayImage::from_fn(64, 64, |_, _| rng.random::<f64>());

    // the spatial and FFT paths compute the same field
    let mut worst = 0.0f64;
    for kind in [BasisKind::Pct, BasisKind::Pcet, BasisKind::Zm] {
        let orders = order_set(kind, Norm::L1, 2);
        let scales = [4, 9];
        let a = decompose(&img, kind, &orders, &scales, IntegrationStrategy::Zoa, DecompositionPath::Spatial, None)?;
        let b = decompose(&img, kind, &orders, &scales, IntegrationStrategy::Zoa, DecompositionPath::Fft, None)?;
        for ((_, _, x), (_, _, y)) in a.iter().zip(b.iter()) {
            for (p, q) in x.as_slice().iter().zip(y.as_slice()) {
                worst = worst.max((p - q).norm());
            }
        }
    }
    all &= check(out, "path equivalence", worst <= 1e-8, format!("max difference {worst:.2e}"))?;

    // magnitudes survive grid rotation and mirroring; corner (u, v) maps to
    // (v, 64 - u) and (u, 64 - v)
    let orders = order_set(BasisKind::Pct, Norm::L1, 3);
    let feats = |im: &GrayImage| -> Result<_> {
        let f = decompose(im, BasisKind::Pct, &orders, &[8], IntegrationStrategy::Zoa, DecompositionPath::Fft, None)?;
        Ok(magnitude_features(&f, &orders)?.remove(0))
    };
    let base = feats(&img)?;
    let rot = feats(&img.rotated90())?;
    let flip = feats(&img.flipped_vertical())?;
    let (mut rot_err, mut flip_err) = (0.0f64, 0.0f64);
    for v in 8..=56 {
        for u in 8..=56 {
            let a = base.vector(u, v);
            for (k, &x) in a.iter().enumerate() {
                rot_err = rot_err.max((x - rot.vector(v, 64 - u)[k]).abs());
                flip_err = flip_err.max((x - flip.vector(u, 64 - v)[k]).abs());
            }
        }
    }
    all &= check(out, "rotation invariance", rot_err <= 1e-9, format!("max difference {rot_err:.2e}"))?;
    all &= check(out, "flip invariance", flip_err <= 1e-9, format!("max difference {flip_err:.2e}"))?;

    Ok(if all { 0 } else { 3 })
}
