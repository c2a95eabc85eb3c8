//! Rotation-invariant magnitude features, scale pooling and phase-based
//! rotation estimation.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::basis::{BasisKind, OrderPair, OrderSet};
use crate::error::{Error, Result};
use crate::formats::{self, ChannelTag, FieldPayload};
use crate::kernelgen::{kernel, IntegrationStrategy};
use crate::raster::GrayImage;
use crate::transform::{is_interior, padded_size, FftScratch, ImageSpectrum, MomentField};

/// Scale(s) a feature field was computed at.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ScaleInfo {
    Single(usize),
    Pooled(Vec<usize>),
}

/// Per-position real feature vectors with a validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureField {
    width: usize,
    height: usize,
    dim: usize,
    data: Vec<f64>,
    valid: Vec<bool>,
    scale: ScaleInfo,
}

impl FeatureField {
    pub fn new(width: usize, height: usize, dim: usize, data: Vec<f64>, valid: Vec<bool>, scale: ScaleInfo) -> Result<Self> {
        if data.len() != width * height * dim || valid.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} values / {} flags for a {width}x{height}x{dim} feature field",
                data.len(),
                valid.len()
            )));
        }
        Ok(Self {
            width,
            height,
            dim,
            data,
            valid,
            scale,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scale(&self) -> &ScaleInfo {
        &self.scale
    }

    #[inline]
    pub fn vector(&self, u: usize, v: usize) -> &[f64] {
        let p = (v * self.width + u) * self.dim;
        &self.data[p..p + self.dim]
    }

    #[inline]
    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.valid[v * self.width + u]
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    /// Copy with every vector scaled to unit L2 norm (zero vectors stay zero).
    pub fn l2_normalized(&self) -> FeatureField {
        let mut out = self.clone();
        for chunk in out.data.chunks_exact_mut(self.dim) {
            let n = chunk.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                chunk.iter_mut().for_each(|v| *v /= n);
            }
        }
        out
    }

    /// Writes a real-payload `DIRF` container, one channel per component.
    ///
    /// Pooled fields carry `w = 0` in their channel tags.
    pub fn write_dirf(&self, out: impl std::io::Write, kind: BasisKind, orders: &OrderSet) -> Result<()> {
        if orders.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: orders.len(),
            });
        }
        let w = match self.scale {
            ScaleInfo::Single(w) => w as u32,
            ScaleInfo::Pooled(_) => 0,
        };
        let tags: Vec<ChannelTag> = orders
            .iter()
            .map(|o| ChannelTag {
                kind: kind.code(),
                n: o.n,
                m: o.m,
                w,
            })
            .collect();
        let channels: Vec<Vec<f64>> = (0..self.dim)
            .map(|k| {
                self.data
                    .chunks_exact(self.dim)
                    .zip(&self.valid)
                    .map(|(c, &ok)| if ok { c[k] } else { f64::NAN })
                    .collect()
            })
            .collect();
        formats::write_dirf(out, self.width, self.height, &tags, &FieldPayload::Real(channels))
    }
}

/// One magnitude field per scale present in the moment field.
pub fn magnitude_features(field: &MomentField, orders: &OrderSet) -> Result<Vec<FeatureField>> {
    let (width, height) = (field.width(), field.height());
    let dim = orders.len();
    field
        .scales()
        .into_iter()
        .map(|w| {
            let mut data = vec![0.0; width * height * dim];
            for (k, order) in orders.iter().enumerate() {
                let ch = field.channel(order, w)?;
                for (pos, z) in ch.as_slice().iter().enumerate() {
                    data[pos * dim + k] = z.norm();
                }
            }
            let valid = (0..width * height)
                .map(|p| is_interior(p % width, p / width, w, width, height))
                .collect();
            FeatureField::new(width, height, dim, data, valid, ScaleInfo::Single(w))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pooling {
    Average,
    Max,
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pooling::Average => "average",
            Pooling::Max => "max",
        })
    }
}

impl FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "average" | "avg" | "mean" => Ok(Pooling::Average),
            "max" => Ok(Pooling::Max),
            other => Err(Error::InvalidConfig {
                field: "pooling",
                reason: format!("expected `average` or `max`, got `{other}`"),
            }),
        }
    }
}

/// Component-wise pooling across scales; the valid mask is the intersection.
pub fn pool_scales(fields: &[FeatureField], mode: Pooling) -> Result<FeatureField> {
    let Some(first) = fields.first() else {
        return Err(Error::ShapeMismatch("no feature fields to pool".into()));
    };
    let mut scales = Vec::new();
    for f in fields {
        if f.width != first.width || f.height != first.height || f.dim != first.dim {
            return Err(Error::ShapeMismatch(format!(
                "{}x{}x{} field pooled with {}x{}x{}",
                f.width, f.height, f.dim, first.width, first.height, first.dim
            )));
        }
        match &f.scale {
            ScaleInfo::Single(w) => scales.push(*w),
            ScaleInfo::Pooled(ws) => scales.extend(ws),
        }
    }
    scales.sort_unstable();
    // summing in a fixed (scale-sorted) order keeps the result independent of input order
    let mut order: Vec<usize> = (0..fields.len()).collect();
    order.sort_by(|&a, &b| scale_key(&fields[a].scale).cmp(&scale_key(&fields[b].scale)));

    let mut data = fields[order[0]].data.clone();
    for &i in &order[1..] {
        for (acc, &v) in data.iter_mut().zip(&fields[i].data) {
            match mode {
                Pooling::Average => *acc += v,
                Pooling::Max => *acc = acc.max(v),
            }
        }
    }
    if mode == Pooling::Average {
        let inv = 1.0 / fields.len() as f64;
        data.iter_mut().for_each(|v| *v *= inv);
    }
    let valid = (0..first.valid.len()).map(|p| fields.iter().all(|f| f.valid[p])).collect();
    FeatureField::new(first.width, first.height, first.dim, data, valid, ScaleInfo::Pooled(scales))
}

fn scale_key(s: &ScaleInfo) -> Vec<usize> {
    match s {
        ScaleInfo::Single(w) => vec![*w],
        ScaleInfo::Pooled(ws) => ws.clone(),
    }
}

/// Pooled magnitude features computed channel by channel without holding
/// the full moment field; equal to `pool_scales(magnitude_features(..))`.
pub fn pooled_features(
    image: &GrayImage,
    kind: BasisKind,
    orders: &OrderSet,
    scales: &[usize],
    strategy: IntegrationStrategy,
    mode: Pooling,
) -> Result<FeatureField> {
    let Some(&w_max) = scales.iter().max() else {
        return Err(Error::SizeTooSmall("scale list is empty".into()));
    };
    if image.width() < 2 * w_max || image.height() < 2 * w_max {
        return Err(Error::ImageTooSmall(format!(
            "{}x{} image cannot hold a disk of radius {w_max}",
            image.width(),
            image.height()
        )));
    }
    let mut sorted = scales.to_vec();
    sorted.sort_unstable();
    let (width, height) = (image.width(), image.height());
    let dim = orders.len();
    let (p, q) = padded_size(width, height, w_max);
    let img_spec = ImageSpectrum::new(image, p, q)?;

    // one column (component k) at a time, scales folded in ascending order
    let columns: Vec<Vec<f64>> = orders
        .pairs()
        .par_iter()
        .map_init(FftScratch::default, |scratch, &order| -> Result<Vec<f64>> {
            let mut acc = vec![0.0f64; width * height];
            for (si, &w) in sorted.iter().enumerate() {
                img_spec.respond(&kernel(kind, order, w, strategy)?, scratch, |y, row| {
                    let dst = &mut acc[y * width..(y + 1) * width];
                    for (a, z) in dst.iter_mut().zip(row) {
                        if si == 0 {
                            *a = z.norm();
                        } else {
                            match mode {
                                Pooling::Average => *a += z.norm(),
                                Pooling::Max => *a = a.max(z.norm()),
                            }
                        }
                    }
                })?;
            }
            if mode == Pooling::Average {
                let inv = 1.0 / sorted.len() as f64;
                acc.iter_mut().for_each(|v| *v *= inv);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;

    let mut data = vec![0.0; width * height * dim];
    for (k, col) in columns.iter().enumerate() {
        for (pos, &v) in col.iter().enumerate() {
            data[pos * dim + k] = v;
        }
    }
    let valid = (0..width * height)
        .map(|p| is_interior(p % width, p / width, w_max, width, height))
        .collect();
    FeatureField::new(width, height, dim, data, valid, ScaleInfo::Pooled(sorted))
}

/// `z * exp(j m phi)`: the moment of the image rotated by `phi`.
#[inline]
pub fn rotation_predict(z: Complex64, m: i32, phi: f64) -> Complex64 {
    z * Complex64::from_polar(1.0, m as f64 * phi)
}

fn wrap_angle(a: f64) -> f64 {
    let t = (a + PI).rem_euclid(2.0 * PI) - PI;
    if t <= -PI {
        t + 2.0 * PI
    } else {
        t
    }
}

const ROTATION_GRID: usize = 1024;

/// Rotation angle relating moment vectors `a` (original) and `b` (rotated).
///
/// Minimizes `sum_k |a_k||b_k| wrap(arg b_k - arg a_k - m_k phi)^2` by a
/// grid search over `[0, 2 pi)` followed by golden-section refinement.
pub fn estimate_rotation(a: &[Complex64], b: &[Complex64], orders: &OrderSet) -> Result<f64> {
    if a.len() != orders.len() || b.len() != orders.len() {
        return Err(Error::DimMismatch {
            expected: orders.len(),
            got: a.len().min(b.len()),
        });
    }
    let terms: Vec<(f64, f64, f64)> = orders
        .iter()
        .zip(a.iter().zip(b))
        .filter(|(o, _)| o.m != 0)
        .map(|(o, (za, zb))| (za.norm() * zb.norm(), zb.arg() - za.arg(), o.m as f64))
        .collect();
    let total: f64 = terms.iter().map(|t| t.0).sum();
    if terms.is_empty() || total < 1e-300 {
        return Err(Error::Degenerate("no weighted m != 0 moments to estimate a rotation from".into()));
    }
    let cost = |phi: f64| -> f64 {
        terms
            .iter()
            .map(|&(wt, d, m)| {
                let e = wrap_angle(d - m * phi);
                wt * e * e
            })
            .sum()
    };
    let step = 2.0 * PI / ROTATION_GRID as f64;
    let (best, _) = (0..ROTATION_GRID)
        .map(|i| {
            let phi = i as f64 * step;
            (phi, cost(phi))
        })
        .fold((0.0, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc });

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (best - step, best + step);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (cost(x1), cost(x2));
    for _ in 0..60 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = cost(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = cost(x2);
        }
    }
    let refined = 0.5 * (lo + hi);
    let phi = if cost(refined) <= cost(best) { refined } else { best };
    Ok(phi.rem_euclid(2.0 * PI))
}

/// Moment vector of one frame in `orders` ordering.
pub fn moment_vector(field: &MomentField, orders: &OrderSet, u: usize, v: usize, w: usize) -> Result<Vec<Complex64>> {
    orders
        .iter()
        .map(|o: OrderPair| Ok(*field.channel(o, w)?.get(u, v)))
        .collect()
}
