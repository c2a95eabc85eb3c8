//! Kernel-spectrum banks: build, save, reload, and compare spectra derived
//! from the smallest scale by frequency rescaling with direct ones.
//!
//! Usage: cargo run --release --example kernel_bank [w0] [w]

use direp::basis::{order_set, BasisKind, Norm};
use direp::kernelgen::{bank_build, IntegrationStrategy, KernelBank};
use direp::transform::padded_size;

fn main() -> direp::Result<()> {
    let mut args = std::env::args().skip(1);
    let w0: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(16);
    let w: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(32);
    let kind = BasisKind::Pct;
    let orders = order_set(kind, Norm::LInf, 2);
    let (m0, n0) = padded_size(128, 128, w);

    for strategy in [IntegrationStrategy::Zoa, IntegrationStrategy::Upsample(8)] {
        let direct = bank_build(kind, &orders, &[w0, w], m0, n0, strategy, false)?;
        let rescaled = bank_build(kind, &orders, &[w0, w], m0, n0, strategy, true)?;

        let mut bytes = Vec::new();
        direct.write_to(&mut bytes)?;
        let back = KernelBank::read_from(bytes.as_slice())?;
        assert_eq!(back.len(), direct.len());

        println!("{strategy}: {} spectra of {m0}x{n0}, {} bytes on disk", direct.len(), bytes.len());
        for o in orders.iter() {
            let err = rescaled.get(kind, o, w).unwrap().relative_l2(direct.get(kind, o, w).unwrap());
            println!("  {o}  rescaled {w0} -> {w}: relative L2 {:.2}%", 100.0 * err);
        }
    }
    Ok(())
}
