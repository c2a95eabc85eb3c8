//! Approximate nearest-neighbor fields between feature fields and the
//! repeatability score.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::formats::{self, ChannelTag, FieldPayload, MATCH_CHANNEL_KIND};
use crate::invariants::{FeatureField, ScaleInfo};
use crate::raster::{GrayImage, Grid};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchOptions {
    pub iterations: usize,
    pub seed: u64,
    /// Offsets shorter than this (Euclidean, pixels) are never accepted.
    pub min_offset: f64,
}

impl Default for MatchOptions {
    fn default() -> Self {
        Self {
            iterations: 3,
            seed: 0,
            min_offset: 0.0,
        }
    }
}

/// Per-position offset into the target field and its feature distance.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchField {
    width: usize,
    height: usize,
    target_width: usize,
    target_height: usize,
    dx: Vec<i32>,
    dy: Vec<i32>,
    distance: Vec<f64>,
    valid: Vec<bool>,
    target_valid: Vec<bool>,
}

impl MatchField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.valid[v * self.width + u]
    }

    #[inline]
    pub fn offset(&self, u: usize, v: usize) -> (i32, i32) {
        let i = v * self.width + u;
        (self.dx[i], self.dy[i])
    }

    #[inline]
    pub fn distance(&self, u: usize, v: usize) -> f64 {
        self.distance[v * self.width + u]
    }

    pub fn distances(&self) -> &[f64] {
        &self.distance
    }

    /// True when `(x, y)` is a valid position of the target field.
    pub fn target_is_valid(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.target_width
            && (y as usize) < self.target_height
            && self.target_valid[y as usize * self.target_width + x as usize]
    }

    /// Offset lengths, zero at invalid positions.
    pub fn offset_length_map(&self) -> Grid<f64> {
        Grid::from_fn(self.width, self.height, |u, v| {
            if self.is_valid(u, v) {
                let (dx, dy) = self.offset(u, v);
                (dx as f64).hypot(dy as f64)
            } else {
                0.0
            }
        })
    }

    /// `DIRF` container with three real channels: dx, dy, distance
    /// (invalid positions hold NaN).
    pub fn write_dirf(&self, out: impl std::io::Write) -> Result<()> {
        let pick = |f: &dyn Fn(usize) -> f64| -> Vec<f64> {
            (0..self.valid.len()).map(|i| if self.valid[i] { f(i) } else { f64::NAN }).collect()
        };
        let channels = vec![
            pick(&|i| self.dx[i] as f64),
            pick(&|i| self.dy[i] as f64),
            pick(&|i| self.distance[i]),
        ];
        let tags: Vec<ChannelTag> = (0..3)
            .map(|c| ChannelTag {
                kind: MATCH_CHANNEL_KIND,
                n: c,
                m: 0,
                w: 0,
            })
            .collect();
        formats::write_dirf(out, self.width, self.height, &tags, &FieldPayload::Real(channels))
    }
}

struct Matcher<'a> {
    src: &'a FeatureField,
    dst: &'a FeatureField,
    min_offset2: f64,
}

impl Matcher<'_> {
    #[inline]
    fn dist2(&self, u: usize, v: usize, x: i64, y: i64) -> Option<f64> {
        if x < 0 || y < 0 || x as usize >= self.dst.width() || y as usize >= self.dst.height() {
            return None;
        }
        let (x, y) = (x as usize, y as usize);
        if !self.dst.is_valid(x, y) {
            return None;
        }
        let (ox, oy) = (x as f64 - u as f64, y as f64 - v as f64);
        if ox * ox + oy * oy < self.min_offset2 {
            return None;
        }
        let a = self.src.vector(u, v);
        let b = self.dst.vector(x, y);
        Some(a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum())
    }
}

/// Simplified PatchMatch between two feature fields.
///
/// Every valid source position starts at a random valid target (seeded),
/// then each iteration scans in alternating order, trying the offsets of
/// the two already-visited neighbors, their first-order extrapolations, and
/// a random search whose radius halves from the field size down to one
/// pixel. A candidate replaces the
/// current match only when strictly closer, so distances never increase.
pub fn dense_match(src: &FeatureField, dst: &FeatureField, options: MatchOptions) -> Result<MatchField> {
    if src.dim() != dst.dim() {
        return Err(Error::DimMismatch {
            expected: src.dim(),
            got: dst.dim(),
        });
    }
    if options.iterations == 0 {
        return Err(Error::InvalidConfig {
            field: "iterations",
            reason: "at least one iteration is required".into(),
        });
    }
    let (width, height) = (src.width(), src.height());
    let m = Matcher {
        src,
        dst,
        min_offset2: options.min_offset.max(0.0).powi(2),
    };
    let targets: Vec<(u32, u32)> = (0..dst.height())
        .flat_map(|y| (0..dst.width()).map(move |x| (x as u32, y as u32)))
        .filter(|&(x, y)| dst.is_valid(x as usize, y as usize))
        .collect();

    let n = width * height;
    let mut dx = vec![0i32; n];
    let mut dy = vec![0i32; n];
    let mut best = vec![f64::INFINITY; n];
    let mut valid = vec![false; n];
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);

    if !targets.is_empty() {
        for v in 0..height {
            for u in 0..width {
                if !src.is_valid(u, v) {
                    continue;
                }
                let i = v * width + u;
                for _ in 0..32 {
                    let (x, y) = targets[rng.random_range(0..targets.len())];
                    if let Some(d) = m.dist2(u, v, x as i64, y as i64) {
                        dx[i] = x as i32 - u as i32;
                        dy[i] = y as i32 - v as i32;
                        best[i] = d;
                        valid[i] = true;
                        break;
                    }
                }
            }
        }
    }

    let max_radius = dst.width().max(dst.height()) as i64;
    for it in 0..options.iterations {
        let forward = it % 2 == 0;
        let step: i64 = if forward { 1 } else { -1 };
        for k in 0..n {
            let i = if forward { k } else { n - 1 - k };
            let (u, v) = (i % width, i / width);
            if !src.is_valid(u, v) {
                continue;
            }
            let try_offset = |ox: i32, oy: i32, dx: &mut [i32], dy: &mut [i32], best: &mut [f64], valid: &mut [bool]| {
                if let Some(d) = m.dist2(u, v, u as i64 + ox as i64, v as i64 + oy as i64) {
                    if d < best[i] {
                        best[i] = d;
                        dx[i] = ox;
                        dy[i] = oy;
                        valid[i] = true;
                    }
                }
            };
            // propagation from the previously visited neighbors: their offset,
            // and its linear extrapolation from the neighbor before them, which
            // follows offsets that vary linearly (rotated or resized copies)
            for (sx, sy) in [(step, 0), (0, step)] {
                let at = |k: i64, valid: &[bool]| -> Option<usize> {
                    let (nu, nv) = (u as i64 - k * sx, v as i64 - k * sy);
                    if nu < 0 || nv < 0 || nu as usize >= width || nv as usize >= height {
                        return None;
                    }
                    let j = nv as usize * width + nu as usize;
                    valid[j].then_some(j)
                };
                let Some(j1) = at(1, &valid) else { continue };
                let j2 = at(2, &valid);
                let (o1x, o1y) = (dx[j1], dy[j1]);
                try_offset(o1x, o1y, &mut dx, &mut dy, &mut best, &mut valid);
                if let Some(j2) = j2 {
                    let (ex, ey) = (2 * o1x - dx[j2], 2 * o1y - dy[j2]);
                    if (ex, ey) != (o1x, o1y) {
                        try_offset(ex, ey, &mut dx, &mut dy, &mut best, &mut valid);
                    }
                }
            }
            // random search around the current match
            let mut r = max_radius;
            while r >= 1 {
                let (cx, cy) = if valid[i] {
                    (u as i64 + dx[i] as i64, v as i64 + dy[i] as i64)
                } else {
                    (u as i64, v as i64)
                };
                let x = cx + rng.random_range(-r..=r);
                let y = cy + rng.random_range(-r..=r);
                try_offset((x - u as i64) as i32, (y - v as i64) as i32, &mut dx, &mut dy, &mut best, &mut valid);
                r /= 2;
            }
        }
    }

    let distance = best
        .iter()
        .zip(&valid)
        .map(|(&d, &ok)| if ok { d.sqrt() } else { f64::INFINITY })
        .collect();
    Ok(MatchField {
        width,
        height,
        target_width: dst.width(),
        target_height: dst.height(),
        dx,
        dy,
        distance,
        valid,
        target_valid: dst.valid_mask().to_vec(),
    })
}

/// Point map `p -> A p + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine {
    pub a: [[f64; 2]; 2],
    pub t: [f64; 2],
}

impl Affine {
    pub fn identity() -> Self {
        Self {
            a: [[1.0, 0.0], [0.0, 1.0]],
            t: [0.0, 0.0],
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            t: [tx, ty],
            ..Self::identity()
        }
    }

    /// Where a point of the original image lands in
    /// `GrayImage::rotated(phi, center, _)`.
    pub fn rotation(phi: f64, center: (f64, f64)) -> Self {
        let (s, c) = phi.sin_cos();
        // inverse of d -> R(phi) d about the center
        let a = [[c, s], [-s, c]];
        let t = [
            center.0 - a[0][0] * center.0 - a[0][1] * center.1,
            center.1 - a[1][0] * center.0 - a[1][1] * center.1,
        ];
        Self { a, t }
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.a[0][0] * x + self.a[0][1] * y + self.t[0],
            self.a[1][0] * x + self.a[1][1] * y + self.t[1],
        )
    }
}

/// Fraction of matched positions whose target lies within `epsilon` of the
/// ground-truth image of the position.
///
/// Only positions whose ground-truth image is a valid target position are
/// counted; elsewhere no correct match exists. Returns 0 when nothing is
/// countable.
pub fn repeatability(mf: &MatchField, gt: &Affine, epsilon: f64) -> f64 {
    let (mut hits, mut total) = (0usize, 0usize);
    for v in 0..mf.height {
        for u in 0..mf.width {
            if !mf.is_valid(u, v) {
                continue;
            }
            let (gx, gy) = gt.apply(u as f64, v as f64);
            if !mf.target_is_valid(gx.round() as i64, gy.round() as i64) {
                continue;
            }
            total += 1;
            let (dx, dy) = mf.offset(u, v);
            let (tx, ty) = (u as f64 + dx as f64, v as f64 + dy as f64);
            if (tx - gx).hypot(ty - gy) <= epsilon {
                hits += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// Raw intensity descriptor: image samples at the `dim` points of a square
/// lattice (pitch `spacing`) closest to each corner position, in a fixed
/// order. Positions whose samples leave the image are invalid.
pub fn pixel_patch_features(image: &GrayImage, dim: usize, spacing: f64) -> Result<FeatureField> {
    if dim == 0 {
        return Err(Error::InvalidConfig {
            field: "dim",
            reason: "descriptor needs at least one sample".into(),
        });
    }
    let side = (dim as f64).sqrt().ceil() as i64 + 1;
    let mut lattice: Vec<(f64, f64)> = Vec::new();
    for j in -side..=side {
        for i in -side..=side {
            // lattice offset by half a pitch so the pattern is centered on the corner
            lattice.push(((i as f64 + 0.5) * spacing, (j as f64 + 0.5) * spacing));
        }
    }
    lattice.sort_by(|a, b| {
        let ra = a.0.hypot(a.1);
        let rb = b.0.hypot(b.1);
        ra.total_cmp(&rb).then(a.1.atan2(a.0).total_cmp(&b.1.atan2(b.0)))
    });
    lattice.truncate(dim);
    let reach = lattice.iter().map(|p| p.0.abs().max(p.1.abs())).fold(0.0, f64::max) + 0.5;
    let (width, height) = (image.width(), image.height());
    let mut data = Vec::with_capacity(width * height * dim);
    let mut valid = Vec::with_capacity(width * height);
    for v in 0..height {
        for u in 0..width {
            let ok = u as f64 - reach >= 0.0
                && v as f64 - reach >= 0.0
                && u as f64 + reach <= width as f64
                && v as f64 + reach <= height as f64;
            valid.push(ok);
            for &(ox, oy) in &lattice {
                data.push(image.sample_bilinear(u as f64 + ox, v as f64 + oy, 0.0));
            }
        }
    }
    FeatureField::new(width, height, dim, data, valid, ScaleInfo::Single(reach.ceil() as usize))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{order_set, BasisKind, Norm};
    use crate::invariants::{pooled_features, Pooling};
    use crate::kernelgen::IntegrationStrategy;
    use crate::synth::{multiscale_texture, random_image};

    fn field(img: &GrayImage) -> FeatureField {
        let orders = order_set(BasisKind::Pct, Norm::L1, 3);
        pooled_features(img, BasisKind::Pct, &orders, &[4, 6, 8], IntegrationStrategy::Zoa, Pooling::Average).unwrap()
    }

    #[test]
    fn self_match_reaches_identity_distance() {
        let f = field(&multiscale_texture(64, 64, 1));
        let mf = dense_match(&f, &f, MatchOptions { iterations: 4, seed: 3, min_offset: 0.0 }).unwrap();
        let (mut good, mut total) = (0, 0);
        for v in 0..64 {
            for u in 0..64 {
                if f.is_valid(u, v) {
                    total += 1;
                    if mf.distance(u, v) <= 1e-12 {
                        good += 1;
                    }
                }
            }
        }
        assert!(good as f64 >= 0.95 * total as f64, "{good}/{total}");
        assert_eq!(repeatability(&mf, &Affine::identity(), 0.5), good as f64 / total as f64);
    }

    #[test]
    fn recovers_constructed_shift() {
        let base = multiscale_texture(96, 80, 2);
        let shifted = base.shifted(10, 0, 0.0);
        let (a, b) = (field(&base), field(&shifted));
        let mf = dense_match(&a, &b, MatchOptions { seed: 1, ..Default::default() }).unwrap();
        let r = repeatability(&mf, &Affine::translation(10.0, 0.0), 2.0);
        assert!(r >= 0.9, "{r}");
    }

    #[test]
    fn more_iterations_never_hurt_and_seed_is_deterministic() {
        let a = field(&random_image(48, 48, 4));
        let b = field(&random_image(48, 48, 5));
        let m2 = dense_match(&a, &b, MatchOptions { iterations: 2, seed: 9, min_offset: 0.0 }).unwrap();
        let m3 = dense_match(&a, &b, MatchOptions { iterations: 3, seed: 9, min_offset: 0.0 }).unwrap();
        for (d2, d3) in m2.distances().iter().zip(m3.distances()) {
            assert!(d3 <= d2);
        }
        let again = dense_match(&a, &b, MatchOptions { iterations: 3, seed: 9, min_offset: 0.0 }).unwrap();
        assert_eq!(again, m3);
        assert!(dense_match(&a, &b, MatchOptions { iterations: 0, ..Default::default() }).is_err());
    }

    #[test]
    fn min_offset_is_respected() {
        let f = field(&multiscale_texture(64, 64, 6));
        let mf = dense_match(&f, &f, MatchOptions { iterations: 2, seed: 0, min_offset: 12.0 }).unwrap();
        for v in 0..64 {
            for u in 0..64 {
                if mf.is_valid(u, v) {
                    let (dx, dy) = mf.offset(u, v);
                    assert!((dx as f64).hypot(dy as f64) >= 12.0);
                }
            }
        }
    }

    #[test]
    fn random_offsets_rarely_repeat() {
        let a = field(&random_image(256, 256, 7));
        let b = field(&random_image(256, 256, 8));
        // one iteration on unrelated content: matches are close to random
        let mf = dense_match(&a, &b, MatchOptions { iterations: 1, seed: 2, min_offset: 0.0 }).unwrap();
        assert!(repeatability(&mf, &Affine::identity(), 2.0) <= 0.01);
    }

    #[test]
    fn rotation_map_agrees_with_image_rotation() {
        let phi = 0.3;
        let c = (20.0, 20.0);
        let gt = Affine::rotation(phi, c);
        // the rotated image at pixel center q reads the original at c + R(phi)(q - c)
        let img = GrayImage::from_fn(40, 40, |x, y| (x * 40 + y) as f64);
        let rot = img.rotated(phi, c, -1.0);
        let (s, co) = phi.sin_cos();
        let q = (23.5, 18.5);
        let (dx, dy) = (q.0 - c.0, q.1 - c.1);
        let p = (c.0 + co * dx - s * dy, c.1 + s * dx + co * dy);
        assert!((rot.get(23, 18) - img.sample_bilinear(p.0, p.1, -1.0)).abs() < 1e-12);
        let (x, y) = gt.apply(p.0, p.1);
        assert!((x - q.0).abs() < 1e-12 && (y - q.1).abs() < 1e-12);
    }

    #[test]
    fn pixel_patch_descriptor_shape() {
        let f = pixel_patch_features(&random_image(20, 20, 1), 10, 2.0).unwrap();
        assert_eq!(f.dim(), 10);
        assert!(!f.is_valid(0, 0));
        assert!(f.is_valid(10, 10));
    }

    #[test]
    fn dirf_export_has_three_channels() {
        let f = field(&random_image(24, 24, 1));
        let mf = dense_match(&f, &f, MatchOptions::default()).unwrap();
        let mut bytes = Vec::new();
        mf.write_dirf(&mut bytes).unwrap();
        let dump = formats::read_dirf(bytes.as_slice()).unwrap();
        assert_eq!(dump.tags.len(), 3);
        assert!(dump.tags.iter().all(|t| t.kind == MATCH_CHANNEL_KIND));
    }
}
