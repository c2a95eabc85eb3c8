//! Gram matrices of the radial functions of every basis family, evaluated
//! by quadrature on `[0, 1]`. Orthonormal bases give `delta / (2 pi)`.
//!
//! Usage: cargo run --release --example basis_orthogonality [max_n] [points]

use std::f64::consts::PI;

use direp::basis::{radial_orthogonality, validate_order, BasisKind, OrderPair};

fn main() -> direp::Result<()> {
    let mut args = std::env::args().skip(1);
    let max_n: i32 = args.next().and_then(|s| s.parse().ok()).unwrap_or(6);
    let points: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(4096);

    println!("{:<6} {:>7} {:>12} {:>12}", "basis", "orders", "max |diag|", "max |off|");
    for kind in BasisKind::ALL {
        // PST starts at n = 1; ZM needs n - |m| even, so use m = 0
        let orders: Vec<OrderPair> = (0..=max_n)
            .map(|n| OrderPair::new(n, 0))
            .filter(|&o| validate_order(kind, o).is_ok())
            .collect();
        let (mut diag, mut off) = (0.0f64, 0.0f64);
        for &a in &orders {
            for &b in &orders {
                let g = radial_orthogonality(kind, a, b, points)?;
                if a == b {
                    diag = diag.max((g.re - 1.0 / (2.0 * PI)).abs().max(g.im.abs()));
                } else {
                    off = off.max(g.norm());
                }
            }
        }
        println!("{:<6} {:>7} {diag:>12.2e} {off:>12.2e}", kind.tag(), orders.len());
    }
    println!("(diagonal entries are compared against 1/(2 pi))");
    Ok(())
}
