//! Dense correspondence between a texture and its rotated copy, with
//! magnitude features pooled over scales and with raw pixel patches of the
//! same dimension.
//!
//! Usage: cargo run --release --example dense_matching [degrees] [seed]

use direp::basis::{order_set, BasisKind, Norm};
use direp::invariants::{pooled_features, Pooling};
use direp::kernelgen::IntegrationStrategy;
use direp::matching::{dense_match, pixel_patch_features, repeatability, Affine, MatchOptions};
use direp::synth::multiscale_texture;

fn main() -> direp::Result<()> {
    let mut args = std::env::args().skip(1);
    let degrees: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(20.0);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);

    let size = 256;
    let center = (size as f64 / 2.0, size as f64 / 2.0);
    let phi = degrees.to_radians();
    let src = multiscale_texture(size, size, seed);
    let dst = src.rotated(phi, center, 0.0);
    let gt = Affine::rotation(phi, center);

    let orders = order_set(BasisKind::Pct, Norm::L1, 3);
    let scales = [8, 11, 13, 16, 19, 21, 24, 27, 29, 32];
    let options = MatchOptions { seed, ..Default::default() };

    let a = pooled_features(&src, BasisKind::Pct, &orders, &scales, IntegrationStrategy::Zoa, Pooling::Average)?;
    let b = pooled_features(&dst, BasisKind::Pct, &orders, &scales, IntegrationStrategy::Zoa, Pooling::Average)?;
    let dir = repeatability(&dense_match(&a, &b, options)?, &gt, 3.0);

    for spacing in [1.0, 2.0, 4.0] {
        let a = pixel_patch_features(&src, orders.len(), spacing)?;
        let b = pixel_patch_features(&dst, orders.len(), spacing)?;
        let raw = repeatability(&dense_match(&a, &b, options)?, &gt, 3.0);
        println!("raw patches, spacing {spacing}: {raw:.3}");
    }
    println!("pooled magnitudes: {dir:.3}");
    Ok(())
}
