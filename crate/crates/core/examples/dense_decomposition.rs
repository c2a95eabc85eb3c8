//! Dense moment field of an image over a scale set, by the sliding-window
//! and FFT paths, with magnitude features pooled over scales.
//!
//! Usage: cargo run --release --example dense_decomposition [image] [out.dirf]
//!
//! Without an image a synthetic texture is used.

use std::time::Instant;

use direp::basis::{order_set, BasisKind, Norm};
use direp::formats::load_image;
use direp::invariants::{magnitude_features, pool_scales, Pooling};
use direp::kernelgen::IntegrationStrategy;
use direp::synth::multiscale_texture;
use direp::transform::{decompose, DecompositionPath};

fn main() -> direp::Result<()> {
    let mut args = std::env::args().skip(1);
    let image = match args.next() {
        Some(p) => load_image(p)?,
        None => multiscale_texture(256, 256, 1),
    };
    let out = args.next();
    let kind = BasisKind::Pct;
    let orders = order_set(kind, Norm::L1, 3);
    let scales = [8, 12, 16];
    let strategy = IntegrationStrategy::Zoa;

    let t = Instant::now();
    let fft = decompose(&image, kind, &orders, &scales, strategy, DecompositionPath::Fft, None)?;
    let t_fft = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let spatial = decompose(&image, kind, &orders, &scales, strategy, DecompositionPath::Spatial, None)?;
    let t_spatial = t.elapsed().as_secs_f64();

    let mut diff = 0.0f64;
    for ((_, _, a), (_, _, b)) in fft.iter().zip(spatial.iter()) {
        for (p, q) in a.as_slice().iter().zip(b.as_slice()) {
            diff = diff.max((p - q).norm());
        }
    }
    println!(
        "{}x{} image, {} orders x {} scales = {} channels",
        image.width(),
        image.height(),
        orders.len(),
        scales.len(),
        fft.len()
    );
    println!("fft {t_fft:.3} s, spatial {t_spatial:.3} s, max difference {diff:.2e}");

    let pooled = pool_scales(&magnitude_features(&fft, &orders)?, Pooling::Average)?;
    let (u, v) = (image.width() / 2, image.height() / 2);
    println!("pooled feature at ({u}, {v}):");
    for (o, x) in orders.iter().zip(pooled.vector(u, v)) {
        println!("  |Z{o}| = {x:.5}");
    }
    if let Some(path) = out {
        fft.write_dirf(std::io::BufWriter::new(std::fs::File::create(&path)?))?;
        println!("wrote {path}");
    }
    Ok(())
}
