//! Transformation laws of dense moment fields, checked on random images.

use num_complex::Complex64;
use proptest::prelude::*;

use direp::basis::{order_set, BasisKind, LocalFrame, Norm, OrderPair};
use direp::invariants::rotation_predict;
use direp::kernelgen::{bank_build, IntegrationStrategy};
use direp::synth::random_image;
use direp::transform::{decompose, moments_at, padded_size, DecompositionPath, MomentField};

fn kind_strategy() -> impl Strategy<Value = BasisKind> {
    prop::sample::select(BasisKind::ALL.to_vec())
}

fn field(img: &direp::raster::GrayImage, kind: BasisKind, w: usize) -> MomentField {
    let orders = order_set(kind, Norm::LInf, 2);
    decompose(img, kind, &orders, &[w], IntegrationStrategy::Zoa, DecompositionPath::Fft, None).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn integer_translation_is_equivariant(kind in kind_strategy(), dx in -5i64..=5, dy in -5i64..=5, seed in 0u64..1000) {
        let (size, w) = (40usize, 6usize);
        let img = random_image(size, size, seed);
        let a = field(&img, kind, w);
        let b = field(&img.shifted(dx, dy, 0.0), kind, w);
        let (lo, hi) = (w as i64, (size - w) as i64);
        for (o, _, ch) in b.iter() {
            let base = a.channel(o, w).unwrap();
            for v in lo..=hi {
                for u in lo..=hi {
                    // the disk must lie in the part that came from the image
                    if u < lo + dx.max(0) || u > hi + dx.min(0) || v < lo + dy.max(0) || v > hi + dy.min(0) {
                        continue;
                    }
                    let (su, sv) = (u - dx, v - dy);
                    let d = (ch.get(u as usize, v as usize) - base.get(su as usize, sv as usize)).norm();
                    prop_assert!(d <= 1e-10, "{kind} {o} at ({u}, {v}): {d}");
                }
            }
        }
    }

    #[test]
    fn quarter_turn_multiplies_by_phase(kind in kind_strategy(), seed in 0u64..1000) {
        let (size, w) = (36usize, 7usize);
        let img = random_image(size, size, seed);
        let a = field(&img, kind, w);
        let b = field(&img.rotated90(), kind, w);
        for (o, _, ch) in a.iter() {
            let rot = b.channel(o, w).unwrap();
            for v in w..=size - w {
                for u in w..=size - w {
                    let z = *ch.get(u, v);
                    let want = rotation_predict(z, o.m, std::f64::consts::FRAC_PI_2);
                    let got = *rot.get(v, size - u);
                    prop_assert!((got - want).norm() <= 1e-9 * (1.0 + z.norm()));
                }
            }
        }
    }

    #[test]
    fn mirror_conjugates(kind in kind_strategy(), seed in 0u64..1000) {
        let (size, w) = (30usize, 6usize);
        let img = random_image(size, size, seed);
        let orders = order_set(kind, Norm::LInf, 2);
        let a = field(&img, kind, w);
        let b = field(&img.flipped_vertical(), kind, w);
        for o in orders.iter() {
            let partner = if kind.has_real_radial() { o } else { OrderPair::new(-o.n, o.m) };
            let Ok(src) = a.channel(partner, w) else { continue };
            let dst = b.channel(o, w).unwrap();
            for v in w..=size - w {
                for u in w..=size - w {
                    prop_assert!((dst.get(u, size - v) - src.get(u, v).conj()).norm() <= 1e-10);
                }
            }
        }
    }
}

#[test]
fn every_path_agrees_with_direct_summation() {
    let img = random_image(48, 40, 17);
    let scales = [5, 9];
    for kind in BasisKind::ALL {
        let orders = order_set(kind, Norm::L1, 3);
        for strat in [IntegrationStrategy::Zoa, IntegrationStrategy::Upsample(3)] {
            let (p, q) = padded_size(48, 40, 9);
            let bank = bank_build(kind, &orders, &scales, p, q, strat, false).unwrap();
            let fields = [
                decompose(&img, kind, &orders, &scales, strat, DecompositionPath::Spatial, None).unwrap(),
                decompose(&img, kind, &orders, &scales, strat, DecompositionPath::Fft, None).unwrap(),
                decompose(&img, kind, &orders, &scales, strat, DecompositionPath::Fft, Some(&bank)).unwrap(),
            ];
            for (o, w, _) in fields[0].iter() {
                for (u, v) in [(w, w), (24, 20), (48 - w, 40 - w), (17, 22)] {
                    let want = moments_at(&img, kind, o, LocalFrame::new(u as f64, v as f64, w as f64), strat).unwrap();
                    for f in &fields {
                        let got: Complex64 = *f.channel(o, w).unwrap().get(u, v);
                        assert!((got - want).norm() <= 1e-10, "{kind} {strat} {o} w={w} ({u}, {v})");
                    }
                }
            }
        }
    }
}
