//! Calculation error on the unity image: the sum of `|moment|` over all
//! orders with `m != 0` up to `K`, which vanishes for exact integration.
//!
//! Usage: cargo run --release --example kernel_accuracy [K] [w]

use direp::basis::BasisKind;
use direp::kernelgen::IntegrationStrategy;
use direp::metrics::calculation_error;

fn main() -> direp::Result<()> {
    let mut args = std::env::args().skip(1);
    let k: u32 = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let w: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(8);
    let strategies = [
        IntegrationStrategy::Zoa,
        IntegrationStrategy::Upsample(2),
        IntegrationStrategy::Upsample(4),
        IntegrationStrategy::Upsample(8),
    ];

    print!("{:<6}", "basis");
    for s in strategies {
        print!("{:>12}", s.to_string());
    }
    println!();
    for kind in BasisKind::ALL {
        print!("{:<6}", kind.tag());
        for s in strategies {
            print!("{:>12.4}", calculation_error(kind, s, k, w)?.ce);
        }
        println!();
    }
    println!("K = {k}, w = {w}");
    Ok(())
}
