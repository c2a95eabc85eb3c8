//! Template detection over dense magnitude features with F1 scoring.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::basis::{BasisKind, OrderSet};
use crate::error::{Error, Result};
use crate::invariants::FeatureField;
use crate::kernelgen::{kernel, IntegrationStrategy, Kernel};
use crate::raster::{GrayImage, Grid};
use crate::transform::{is_interior, padded_size, FftScratch, ImageSpectrum};

/// Magnitude vector per scale at the template's central corner.
#[derive(Clone, Debug, PartialEq)]
pub struct Signature {
    pub scales: Vec<usize>,
    pub vectors: Vec<Vec<f64>>,
}

fn kernel_dot(image: &GrayImage, k: &Kernel, u: usize, v: usize) -> Complex64 {
    let w = k.w;
    let mut acc = Complex64::new(0.0, 0.0);
    for l in 0..k.side() {
        let row = image.row(v - w + l);
        for (kk, &f) in row[u - w..u + w].iter().enumerate() {
            acc += k.at(kk, l) * f;
        }
    }
    acc
}

/// Signature of `template` at corner `(W/2, H/2)`, one vector per scale.
pub fn template_signature(
    template: &GrayImage,
    kind: BasisKind,
    orders: &OrderSet,
    scales: &[usize],
    strategy: IntegrationStrategy,
) -> Result<Signature> {
    let (u, v) = (template.width() / 2, template.height() / 2);
    let vectors = scales
        .iter()
        .map(|&w| {
            if w == 0 || !is_interior(u, v, w, template.width(), template.height()) {
                return Err(Error::ImageTooSmall(format!(
                    "{}x{} template cannot hold scale {w}",
                    template.width(),
                    template.height()
                )));
            }
            orders
                .iter()
                .map(|o| Ok(kernel_dot(template, &kernel(kind, o, w, strategy)?, u, v).norm()))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(Signature {
        scales: scales.to_vec(),
        vectors,
    })
}

/// Distances with `+inf` at invalid positions, tagged with the scale used
/// when reporting detections.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMap {
    pub values: Grid<f64>,
    pub w: usize,
}

/// Euclidean distance between every valid feature vector and `signature`.
pub fn distance_map(features: &FeatureField, signature: &[f64], w: usize) -> Result<DistanceMap> {
    if signature.len() != features.dim() {
        return Err(Error::DimMismatch {
            expected: features.dim(),
            got: signature.len(),
        });
    }
    let values = Grid::from_fn(features.width(), features.height(), |u, v| {
        if !features.is_valid(u, v) {
            return f64::INFINITY;
        }
        features
            .vector(u, v)
            .iter()
            .zip(signature)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    });
    Ok(DistanceMap { values, w })
}

/// Multi-scale distance: the L2 norm of the per-scale distances, i.e. the
/// distance between concatenated per-scale vectors. Valid where every scale
/// is valid. Scales are processed one at a time.
pub fn multiscale_distance_map(
    scene: &GrayImage,
    signature: &Signature,
    kind: BasisKind,
    orders: &OrderSet,
    strategy: IntegrationStrategy,
) -> Result<DistanceMap> {
    let Some(&w_max) = signature.scales.iter().max() else {
        return Err(Error::SizeTooSmall("signature has no scales".into()));
    };
    if scene.width() < 2 * w_max || scene.height() < 2 * w_max {
        return Err(Error::ImageTooSmall(format!(
            "{}x{} scene cannot hold scale {w_max}",
            scene.width(),
            scene.height()
        )));
    }
    for v in &signature.vectors {
        if v.len() != orders.len() {
            return Err(Error::DimMismatch {
                expected: orders.len(),
                got: v.len(),
            });
        }
    }
    let (width, height) = (scene.width(), scene.height());
    let (p, q) = padded_size(width, height, w_max);
    let img = ImageSpectrum::new(scene, p, q)?;
    let mut sq = vec![0.0f64; width * height];
    for (&w, sig) in signature.scales.iter().zip(&signature.vectors) {
        let parts: Vec<Vec<f64>> = orders
            .pairs()
            .par_iter()
            .zip(sig.par_iter())
            .map_init(FftScratch::default, |scratch, (&o, &s)| -> Result<Vec<f64>> {
                let mut part = Vec::with_capacity(width * height);
                img.respond(&kernel(kind, o, w, strategy)?, scratch, |_, row| {
                    part.extend(row.iter().map(|z| (z.norm() - s).powi(2)))
                })?;
                Ok(part)
            })
            .collect::<Result<_>>()?;
        for part in parts {
            for (a, b) in sq.iter_mut().zip(part) {
                *a += b;
            }
        }
    }
    let values = Grid::from_fn(width, height, |u, v| {
        if is_interior(u, v, w_max, width, height) {
            sq[v * width + u].sqrt()
        } else {
            f64::INFINITY
        }
    });
    Ok(DistanceMap { values, w: w_max })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub u: usize,
    pub v: usize,
    pub w: usize,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionResult {
    pub detections: Vec<Detection>,
    pub threshold: f64,
    pub nms_radius: f64,
}

/// Positions below `threshold`, kept in ascending score order unless within
/// `nms_radius` of an already kept detection.
pub fn detect_peaks(map: &DistanceMap, threshold: f64, nms_radius: f64) -> DetectionResult {
    let values = &map.values;
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for v in 0..values.height() {
        for u in 0..values.width() {
            let s = *values.get(u, v);
            if s < threshold {
                candidates.push((s, v, u));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let r2 = nms_radius * nms_radius;
    let mut kept: Vec<Detection> = Vec::new();
    for (score, v, u) in candidates {
        let clear = kept.iter().all(|d| {
            let dx = d.u as f64 - u as f64;
            let dy = d.v as f64 - v as f64;
            dx * dx + dy * dy > r2
        });
        if clear {
            kept.push(Detection { u, v, w: map.w, score });
        }
    }
    DetectionResult {
        detections: kept,
        threshold,
        nms_radius,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundTruthPoint {
    pub u: f64,
    pub v: f64,
    pub tolerance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Greedy one-to-one matching in ascending score order: each detection
/// takes the nearest unmatched ground-truth point within its tolerance.
/// Empty detection or ground-truth sets score 0 for the undefined ratios.
pub fn f1_score(detections: &[Detection], truth: &[GroundTruthPoint]) -> Scores {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| detections[a].score.total_cmp(&detections[b].score));
    let mut taken = vec![false; truth.len()];
    let mut hits = 0usize;
    for i in order {
        let d = detections[i];
        let best = truth
            .iter()
            .enumerate()
            .filter(|(j, _)| !taken[*j])
            .map(|(j, g)| (j, (g.u - d.u as f64).hypot(g.v - d.v as f64), g.tolerance))
            .filter(|&(_, dist, tol)| dist <= tol)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((j, _, _)) = best {
            taken[j] = true;
            hits += 1;
        }
    }
    let precision = if detections.is_empty() { 0.0 } else { hits as f64 / detections.len() as f64 };
    let recall = if truth.is_empty() { 0.0 } else { hits as f64 / truth.len() as f64 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Scores { precision, recall, f1 }
}

/// `fraction` times the smallest finite map value farther than each
/// point's tolerance from every ground-truth point.
pub fn scene_threshold(map: &DistanceMap, truth: &[GroundTruthPoint], fraction: f64) -> Result<f64> {
    let values = &map.values;
    let mut best = f64::INFINITY;
    for v in 0..values.height() {
        for u in 0..values.width() {
            let s = *values.get(u, v);
            if !s.is_finite() {
                continue;
            }
            let near = truth.iter().any(|g| (g.u - u as f64).hypot(g.v - v as f64) <= g.tolerance);
            if !near {
                best = best.min(s);
            }
        }
    }
    if !best.is_finite() {
        return Err(Error::Degenerate("no valid positions away from the ground truth".into()));
    }
    Ok(fraction * best)
}
