//! Moment magnitudes are unchanged by rotation and the phases carry the
//! angle: a texture is rotated by resampling and the angle is estimated
//! back from the moments at the rotation center.
//!
//! Usage: cargo run --release --example rotation_invariance [w] [seed]

use direp::basis::{order_set, BasisKind, Norm};
use direp::invariants::{estimate_rotation, moment_vector};
use direp::kernelgen::IntegrationStrategy;
use direp::raster::GrayImage;
use direp::synth::smooth_texture;
use direp::transform::{decompose, DecompositionPath};

fn main() -> direp::Result<()> {
    let mut args = std::env::args().skip(1);
    let w: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(32);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let size = 4 * w;
    let c = size / 2;
    let kind = BasisKind::Pct;
    let orders = order_set(kind, Norm::LInf, 3);
    let img = smooth_texture(size, size, 3.0, seed);
    let at_center = |im: &GrayImage| -> direp::Result<_> {
        let f = decompose(im, kind, &orders, &[w], IntegrationStrategy::Zoa, DecompositionPath::Fft, None)?;
        moment_vector(&f, &orders, c, c, w)
    };
    let a = at_center(&img)?;

    println!("{:>8} {:>10} {:>14}", "degrees", "estimate", "magnitude rel");
    for deg in (0..=180).step_by(15) {
        let phi = (deg as f64).to_radians();
        let b = at_center(&img.rotated(phi, (c as f64, c as f64), 0.0))?;
        let num: f64 = a.iter().zip(&b).map(|(x, y)| (x.norm() - y.norm()).powi(2)).sum();
        let den: f64 = a.iter().map(|x| x.norm_sqr()).sum();
        let est = if deg == 0 { 0.0 } else { estimate_rotation(&a, &b, &orders)?.to_degrees() };
        println!("{deg:>8} {est:>10.2} {:>14.2e}", (num / den).sqrt());
    }
    Ok(())
}
