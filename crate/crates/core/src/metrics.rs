//! Calculation error on the unity image and decomposition timing.

use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::{validate_order, BasisKind, OrderPair};
use crate::error::{Error, Result};
use crate::fft::{fast_size, Fft2d};
use crate::kernelgen::{kernel, kernel_spectrum_with, IntegrationStrategy};
use crate::raster::GrayImage;
use crate::transform::{dense_spatial, ImageSpectrum};

#[derive(Clone, Debug, PartialEq)]
pub struct CeReport {
    pub kind: BasisKind,
    pub strategy: IntegrationStrategy,
    pub k: u32,
    pub w: usize,
    pub ce: f64,
}

/// Every valid signed pair with `max(|n|, |m|) <= k`.
pub fn signed_orders(kind: BasisKind, k: u32) -> Vec<OrderPair> {
    let k = k as i32;
    let mut out = Vec::new();
    for n in -k..=k {
        for m in -k..=k {
            let p = OrderPair::new(n, m);
            if validate_order(kind, p).is_ok() {
                out.push(p);
            }
        }
    }
    out
}

/// Sum of `|unity-image moment|` over all `m != 0` orders up to `k`
/// (infinity norm, signed orders). Each moment is the kernel sum.
pub fn calculation_error(kind: BasisKind, strategy: IntegrationStrategy, k: u32, w: usize) -> Result<CeReport> {
    if k == 0 {
        return Err(Error::Degenerate("no m != 0 orders with K = 0".into()));
    }
    let mut ce = 0.0;
    for order in signed_orders(kind, k).into_iter().filter(|o| o.m != 0) {
        ce += kernel(kind, order, w, strategy)?.sum().norm();
    }
    Ok(CeReport {
        kind,
        strategy,
        k,
        w,
        ce,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchPath {
    /// Kernel generation plus sliding-window summation.
    Spatial,
    /// Kernel generation, kernel FFT, image FFT, product and inverse FFT.
    Fft,
    /// Image FFT, product and inverse FFT with a precomputed spectrum.
    FftBank,
}

impl BenchPath {
    pub fn tag(self) -> &'static str {
        match self {
            BenchPath::Spatial => "spatial",
            BenchPath::Fft => "fft",
            BenchPath::FftBank => "fft+bank",
        }
    }
}

impl std::str::FromStr for BenchPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spatial" => Ok(BenchPath::Spatial),
            "fft" => Ok(BenchPath::Fft),
            "fft+bank" | "bank" => Ok(BenchPath::FftBank),
            other => Err(Error::InvalidConfig {
                field: "paths",
                reason: format!("expected spatial, fft or fft+bank, got `{other}`"),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DtReport {
    pub path: BenchPath,
    pub width: usize,
    pub height: usize,
    pub scales: Vec<usize>,
    /// Median wall time per scale, in seconds.
    pub seconds: Vec<f64>,
}

/// Timing protocol: one discarded warm-up round, then the median of `runs`.
#[derive(Clone, Copy, Debug)]
pub struct BenchOptions {
    pub runs: usize,
    pub seed: u64,
    pub strategy: IntegrationStrategy,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            runs: 5,
            seed: 0,
            strategy: IntegrationStrategy::Zoa,
        }
    }
}

/// Single-threaded time to compute one dense channel per scale and path.
///
/// All FFT work uses one grid size, large enough for the largest scale, so
/// that FFT timings do not vary with the FFT length.
pub fn decomposition_benchmark(
    size: (usize, usize),
    kind: BasisKind,
    order: OrderPair,
    scales: &[usize],
    paths: &[BenchPath],
    options: BenchOptions,
) -> Result<Vec<DtReport>> {
    let (width, height) = size;
    let Some(&w_max) = scales.iter().max() else {
        return Err(Error::SizeTooSmall("scale list is empty".into()));
    };
    if width < 2 * w_max || height < 2 * w_max {
        return Err(Error::ImageTooSmall(format!("{width}x{height} cannot hold scale {w_max}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let image = GrayImage::from_fn(width, height, |_, _| rng.random::<f64>());
    let (p, q) = (fast_size(width + 2 * w_max), fast_size(height + 2 * w_max));
    let strategy = options.strategy;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::InvalidConfig {
            field: "threads",
            reason: e.to_string(),
        })?;
    pool.install(|| {
        let plan = Fft2d::new(p, q);
        let bank: Vec<_> = scales
            .iter()
            .map(|&w| kernel_spectrum_with(&kernel(kind, order, w, strategy)?, &plan))
            .collect::<Result<_>>()?;
        let run_once = |path: BenchPath, si: usize| -> Result<f64> {
            let w = scales[si];
            let start = Instant::now();
            match path {
                BenchPath::Spatial => {
                    let k = kernel(kind, order, w, strategy)?;
                    std::hint::black_box(dense_spatial(&image, &k)?);
                }
                BenchPath::Fft => {
                    let spec = kernel_spectrum_with(&kernel(kind, order, w, strategy)?, &plan)?;
                    let img = ImageSpectrum::new(&image, p, q)?;
                    std::hint::black_box(img.apply(&spec, w)?);
                }
                BenchPath::FftBank => {
                    let img = ImageSpectrum::new(&image, p, q)?;
                    std::hint::black_box(img.apply(&bank[si], w)?);
                }
            }
            Ok(start.elapsed().as_secs_f64())
        };

        // rounds are interleaved over scales and paths so slow drifts in
        // machine speed affect every entry alike
        let mut samples = vec![vec![Vec::with_capacity(options.runs); scales.len()]; paths.len()];
        for round in 0..=options.runs.max(1) {
            #[allow(clippy::needless_range_loop)]
            for si in 0..scales.len() {
                for (pi, &path) in paths.iter().enumerate() {
                    let t = run_once(path, si)?;
                    if round > 0 {
                        samples[pi][si].push(t);
                    }
                }
            }
        }
        Ok(paths
            .iter()
            .zip(samples)
            .map(|(&path, per_scale)| DtReport {
                path,
                width,
                height,
                scales: scales.to_vec(),
                seconds: per_scale
                    .into_iter()
                    .map(|mut t| {
                        t.sort_by(f64::total_cmp);
                        t[t.len() / 2]
                    })
                    .collect(),
            })
            .collect())
    })
}

/// Unity-image moment computed from the kernel sum.
pub fn unity_moment(kind: BasisKind, order: OrderPair, w: usize, strategy: IntegrationStrategy) -> Result<Complex64> {
    Ok(kernel(kind, order, w, strategy)?.sum())
}
