//! Template detection in a scene of rotated and mirrored letter instances
//! among distractor letters, scored by F1, clean and with added noise.
//!
//! Usage: cargo run --release --example pattern_detection [noise_sigma] [map.pgm]

use direp::basis::{order_set, BasisKind, Norm};
use direp::detect::{detect_peaks, f1_score, multiscale_distance_map, scene_threshold, template_signature, GroundTruthPoint};
use direp::formats::{encode_pgm8, normalized_map};
use direp::kernelgen::IntegrationStrategy;
use direp::synth::{add_gaussian_noise, letter_scene, GridTransform};

fn main() -> direp::Result<()> {
    let mut args = std::env::args().skip(1);
    let sigma: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.1);
    let map_path = args.next();

    let transforms = [
        GridTransform::Identity,
        GridTransform::Rot90,
        GridTransform::Rot180,
        GridTransform::Rot270,
        GridTransform::FlipVertical,
        GridTransform::FlipHorizontal,
    ];
    let scene = letter_scene('F', &transforms, &['E', 'P', 'L', 'T'], 4, 48, 5)?;
    let orders = order_set(BasisKind::Pct, Norm::LInf, 3);
    let strategy = IntegrationStrategy::Zoa;
    let sig = template_signature(&scene.template, BasisKind::Pct, &orders, &[14, 18, 22], strategy)?;
    let truth: Vec<GroundTruthPoint> = scene
        .instances
        .iter()
        .map(|&(u, v)| GroundTruthPoint { u: u as f64, v: v as f64, tolerance: 8.0 })
        .collect();

    for (label, image) in [("clean", scene.scene.clone()), ("noisy", add_gaussian_noise(&scene.scene, sigma, 1))] {
        let map = multiscale_distance_map(&image, &sig, BasisKind::Pct, &orders, strategy)?;
        // half of the best distance found away from every instance
        let t = scene_threshold(&map, &truth, 0.5)?;
        let found = detect_peaks(&map, t, 16.0);
        let s = f1_score(&found.detections, &truth);
        println!(
            "{label}: threshold {t:.4}, {} detections, precision {:.3} recall {:.3} F1 {:.3}",
            found.detections.len(),
            s.precision,
            s.recall,
            s.f1
        );
        if label == "noisy" {
            if let Some(p) = &map_path {
                std::fs::write(p, encode_pgm8(&normalized_map(&map.values)))?;
            }
        }
    }
    Ok(())
}
