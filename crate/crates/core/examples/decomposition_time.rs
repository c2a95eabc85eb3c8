//! Single-thread decomposition time of one dense channel versus window size,
//! for the sliding-window path, the FFT path and the FFT path with a
//! precomputed kernel spectrum.
//!
//! Usage: cargo run --release --example decomposition_time [size] [max_w] [paths]
//!
//! `paths` is a comma-separated subset of `spatial,fft,fft+bank`.

use direp::basis::{BasisKind, OrderPair};
use direp::metrics::{decomposition_benchmark, BenchOptions, BenchPath};

fn main() -> direp::Result<()> {
    let mut args = std::env::args().skip(1);
    let size: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(256);
    let max_w: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(size / 2 - 8);
    let paths: Vec<BenchPath> = args
        .next()
        .unwrap_or_else(|| "spatial,fft,fft+bank".into())
        .split(',')
        .map(str::parse)
        .collect::<direp::Result<_>>()?;
    let scales: Vec<usize> = (1..).map(|i| 5 * i).take_while(|&w| w <= max_w).step_by(4).collect();

    let reports = decomposition_benchmark(
        (size, size),
        BasisKind::Pct,
        OrderPair::new(1, 1),
        &scales,
        &paths,
        BenchOptions::default(),
    )?;
    print!("{:>6}", "w");
    for r in &reports {
        print!("{:>12}", r.path.tag());
    }
    println!();
    for (i, w) in scales.iter().enumerate() {
        print!("{w:>6}");
        for r in &reports {
            print!("{:>12.4}", r.seconds[i]);
        }
        println!();
    }
    Ok(())
}
