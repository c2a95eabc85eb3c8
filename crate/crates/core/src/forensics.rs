//! Copy-move forgery localization and a perceptual hash with tamper
//! localization.

use std::io::{Read, Write};
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::basis::{order_set, BasisKind, Norm, OrderSet};
use crate::detect::Scores;
use crate::error::{Error, Result};
use crate::invariants::{pooled_features, Pooling};
use crate::kernelgen::{kernel, read_exact, read_u32, IntegrationStrategy, Kernel};
use crate::matching::{dense_match, MatchField, MatchOptions};
use crate::raster::{GrayImage, Grid};

/// `count` integers spread evenly over `[lo, hi]`, rounded, duplicates removed.
pub fn linear_scales(lo: usize, hi: usize, count: usize) -> Vec<usize> {
    if count <= 1 || hi <= lo {
        return vec![lo];
    }
    let mut out: Vec<usize> = (0..count)
        .map(|i| (lo as f64 + (hi - lo) as f64 * i as f64 / (count - 1) as f64).round() as usize)
        .collect();
    out.dedup();
    out
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// How neighboring matches are checked for agreement.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Consistency {
    /// Neighbor offsets within `offset_tolerance` of the position's own.
    Translation,
    /// Neighbor targets within `offset_tolerance` of a least-squares affine
    /// map fitted to the neighborhood; accepts rotated and resized copies.
    Affine,
}

impl std::str::FromStr for Consistency {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "translation" => Ok(Consistency::Translation),
            "affine" => Ok(Consistency::Affine),
            other => Err(Error::InvalidConfig {
                field: "consistency",
                reason: format!("expected `translation` or `affine`, got `{other}`"),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CopyMoveConfig {
    pub kind: BasisKind,
    pub norm: Norm,
    pub order_bound: u32,
    pub scales: Vec<usize>,
    pub pooling: Pooling,
    pub strategy: IntegrationStrategy,
    /// Images whose long edge is shorter are upsampled to this length.
    pub upsample_long_edge: usize,
    /// Shortest accepted match offset, in pixels of the analyzed image.
    pub min_offset: f64,
    pub iterations: usize,
    pub consistency: Consistency,
    pub consistency_radius: usize,
    pub consistency_fraction: f64,
    /// Offsets closer than this count as agreeing.
    pub offset_tolerance: f64,
    pub morph_open: usize,
    pub morph_close: usize,
}

impl Default for CopyMoveConfig {
    fn default() -> Self {
        Self {
            kind: BasisKind::Pct,
            norm: Norm::L1,
            order_bound: 3,
            scales: linear_scales(8, 32, 10),
            pooling: Pooling::Average,
            strategy: IntegrationStrategy::Zoa,
            upsample_long_edge: 2000,
            min_offset: 50.0,
            iterations: 3,
            consistency: Consistency::Affine,
            consistency_radius: 8,
            consistency_fraction: 0.5,
            offset_tolerance: 2.0,
            morph_open: 3,
            morph_close: 7,
        }
    }
}

impl CopyMoveConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason: &str| Err(Error::InvalidConfig { field, reason: reason.into() });
        if self.scales.is_empty() || self.scales[0] == 0 {
            return bad("scales", "need at least one positive scale");
        }
        if self.scales.windows(2).any(|p| p[1] <= p[0]) {
            return bad("scales", "must be strictly increasing");
        }
        if self.min_offset <= *self.scales.last().unwrap() as f64 {
            return bad("min_offset", "must exceed the largest scale");
        }
        if self.iterations == 0 {
            return bad("iterations", "at least one iteration is required");
        }
        if !(0.0..=1.0).contains(&self.consistency_fraction) {
            return bad("consistency_fraction", "must lie in [0, 1]");
        }
        if self.order_bound == 0 {
            return bad("order_bound", "must be positive");
        }
        Ok(())
    }

    pub fn orders(&self) -> OrderSet {
        order_set(self.kind, self.norm, self.order_bound)
    }

    pub fn hash(&self) -> u64 {
        fnv1a(format!("{self:?}").as_bytes())
    }
}

/// Binary localization map at the input resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct ForgeryMask {
    pub mask: Grid<bool>,
    pub config_hash: u64,
    /// Wall time in seconds.
    pub runtime: f64,
}

impl ForgeryMask {
    pub fn positives(&self) -> usize {
        self.mask.as_slice().iter().filter(|&&b| b).count()
    }
}

/// Disk offsets `(dy, half_width)` of a radius-`r` structuring element.
fn disk_rows(r: usize) -> Vec<(i64, i64)> {
    let r = r as i64;
    (-r..=r)
        .map(|dy| (dy, (((r * r - dy * dy) as f64).sqrt()).floor() as i64))
        .collect()
}

fn disk_filter(mask: &Grid<bool>, r: usize, erode: bool) -> Grid<bool> {
    if r == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width(), mask.height());
    // per-row prefix counts of set pixels
    let prefix: Vec<Vec<u32>> = (0..h)
        .map(|y| {
            let mut acc = vec![0u32; w + 1];
            for (x, &b) in mask.row(y).iter().enumerate() {
                acc[x + 1] = acc[x] + b as u32;
            }
            acc
        })
        .collect();
    let rows = disk_rows(r);
    let data: Vec<bool> = (0..h)
        .into_par_iter()
        .flat_map_iter(|y| {
            let prefix = &prefix;
            let rows = &rows;
            (0..w).map(move |x| {
                let mut hit = erode;
                for &(dy, hw) in rows {
                    let yy = y as i64 + dy;
                    // rows outside the image never change the result
                    if yy < 0 || yy >= h as i64 {
                        continue;
                    }
                    let lo = (x as i64 - hw).max(0) as usize;
                    let hi = ((x as i64 + hw) as usize).min(w - 1);
                    let count = prefix[yy as usize][hi + 1] - prefix[yy as usize][lo];
                    if erode && count < (hi + 1 - lo) as u32 {
                        hit = false;
                        break;
                    }
                    if !erode && count > 0 {
                        hit = true;
                        break;
                    }
                }
                hit
            })
        })
        .collect();
    Grid::from_vec(w, h, data).expect("same shape")
}

/// Dilation by a disk; pixels outside the image count as unset.
pub fn dilate(mask: &Grid<bool>, r: usize) -> Grid<bool> {
    disk_filter(mask, r, false)
}

/// Erosion by a disk; pixels outside the image count as set.
pub fn erode(mask: &Grid<bool>, r: usize) -> Grid<bool> {
    disk_filter(mask, r, true)
}

pub fn open(mask: &Grid<bool>, r: usize) -> Grid<bool> {
    dilate(&erode(mask, r), r)
}

pub fn close(mask: &Grid<bool>, r: usize) -> Grid<bool> {
    erode(&dilate(mask, r), r)
}

/// Pixel scores ignoring the band of `exclude_border` pixels on either side
/// of the truth boundary. Undefined ratios are reported as 0.
pub fn score_mask(predicted: &Grid<bool>, truth: &Grid<bool>, exclude_border: usize) -> Result<Scores> {
    if !predicted.same_shape(truth) {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} mask scored against {}x{} truth",
            predicted.width(),
            predicted.height(),
            truth.width(),
            truth.height()
        )));
    }
    let (outer, inner) = if exclude_border > 0 {
        (dilate(truth, exclude_border), erode(truth, exclude_border))
    } else {
        (truth.clone(), truth.clone())
    };
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for i in 0..truth.as_slice().len() {
        if outer.as_slice()[i] != inner.as_slice()[i] {
            continue;
        }
        match (predicted.as_slice()[i], truth.as_slice()[i]) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(Scores { precision, recall, f1 })
}

/// Smallest `|det A|` accepted from an affine fit; smaller values mean the
/// neighborhood collapses onto a few targets.
const MIN_AFFINE_DET: f64 = 0.25;

/// Positions whose match is supported by their neighborhood.
pub fn consistency_mask(mf: &MatchField, cfg: &CopyMoveConfig) -> Vec<bool> {
    let (w, h) = (mf.width(), mf.height());
    let rows = disk_rows(cfg.consistency_radius);
    let tol2 = cfg.offset_tolerance * cfg.offset_tolerance;
    (0..h)
        .into_par_iter()
        .flat_map_iter(|v| {
            let rows = &rows;
            let mut hood: Vec<(f64, f64, f64, f64)> = Vec::new();
            (0..w).map(move |u| {
                if !mf.is_valid(u, v) {
                    return false;
                }
                // neighbors as (x, y, dx, dy), the position itself first
                hood.clear();
                let (dx, dy) = mf.offset(u, v);
                hood.push((u as f64, v as f64, dx as f64, dy as f64));
                for &(oy, hw) in rows {
                    let y = v as i64 + oy;
                    if y < 0 || y >= h as i64 {
                        continue;
                    }
                    for x in (u as i64 - hw).max(0)..=(u as i64 + hw).min(w as i64 - 1) {
                        let (x, y) = (x as usize, y as usize);
                        if (x, y) != (u, v) && mf.is_valid(x, y) {
                            let (ex, ey) = mf.offset(x, y);
                            hood.push((x as f64, y as f64, ex as f64, ey as f64));
                        }
                    }
                }
                if hood.len() < 2 {
                    return false;
                }
                let agrees: Vec<bool> = match cfg.consistency {
                    Consistency::Translation => hood
                        .iter()
                        .map(|&(_, _, ex, ey)| (ex - dx as f64).powi(2) + (ey - dy as f64).powi(2) <= tol2)
                        .collect(),
                    Consistency::Affine => match affine_residuals(&hood) {
                        Some(res) => res.into_iter().map(|r2| r2 <= tol2).collect(),
                        None => return false,
                    },
                };
                let agree = agrees[1..].iter().filter(|&&a| a).count();
                agrees[0] && agree as f64 >= cfg.consistency_fraction * (hood.len() - 1) as f64
            })
        })
        .collect()
}

/// Squared residuals of the least-squares affine map from positions to
/// match targets, or `None` for a degenerate or collapsing fit.
fn affine_residuals(hood: &[(f64, f64, f64, f64)]) -> Option<Vec<f64>> {
    let n = hood.len() as f64;
    let (mut mx, mut my, mut mtx, mut mty) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y, dx, dy) in hood {
        mx += x;
        my += y;
        mtx += x + dx;
        mty += y + dy;
    }
    let (mx, my, mtx, mty) = (mx / n, my / n, mtx / n, mty / n);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    let (mut ax, mut bx, mut ay, mut by) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y, dx, dy) in hood {
        let (px, py) = (x - mx, y - my);
        let (tx, ty) = (x + dx - mtx, y + dy - mty);
        sxx += px * px;
        sxy += px * py;
        syy += py * py;
        ax += px * tx;
        bx += py * tx;
        ay += px * ty;
        by += py * ty;
    }
    let det = sxx * syy - sxy * sxy;
    if det.abs() < 1e-9 {
        return None;
    }
    // rows of A solve [sxx sxy; sxy syy] a = [sum px t, sum py t]
    let a11 = (syy * ax - sxy * bx) / det;
    let a12 = (sxx * bx - sxy * ax) / det;
    let a21 = (syy * ay - sxy * by) / det;
    let a22 = (sxx * by - sxy * ay) / det;
    if (a11 * a22 - a12 * a21).abs() < MIN_AFFINE_DET {
        return None;
    }
    Some(
        hood.iter()
            .map(|&(x, y, dx, dy)| {
                let (px, py) = (x - mx, y - my);
                let ex = x + dx - mtx - (a11 * px + a12 * py);
                let ey = y + dy - mty - (a21 * px + a22 * py);
                ex * ex + ey * ey
            })
            .collect(),
    )
}

/// Copy-move localization.
///
/// The image is upsampled so its long edge reaches `upsample_long_edge`,
/// pooled magnitude features are matched against themselves (offsets
/// shorter than `min_offset` excluded), positions that agree with their own
/// neighborhood model and with at least `consistency_fraction` of the valid
/// neighbors within `consistency_radius` (see [`Consistency`]) are kept and
/// marked together with their match targets, and the mask is opened,
/// closed and sampled back to the input resolution.
pub fn copymove_detect(image: &GrayImage, cfg: &CopyMoveConfig, seed: u64) -> Result<ForgeryMask> {
    let start = Instant::now();
    cfg.validate()?;
    let (w0, h0) = (image.width(), image.height());
    let long = w0.max(h0);
    let work = if long > 0 && long < cfg.upsample_long_edge {
        let s = cfg.upsample_long_edge as f64 / long as f64;
        image.resized(((w0 as f64 * s).round() as usize).max(1), ((h0 as f64 * s).round() as usize).max(1))
    } else {
        image.clone()
    };
    let (w, h) = (work.width(), work.height());
    let w_max = *cfg.scales.last().unwrap();
    if w < 2 * w_max || h < 2 * w_max {
        return Err(Error::ImageTooSmall(format!("{w}x{h} (after resize) cannot hold scale {w_max}")));
    }
    let features = pooled_features(&work, cfg.kind, &cfg.orders(), &cfg.scales, cfg.strategy, cfg.pooling)?;
    let mf = dense_match(
        &features,
        &features,
        MatchOptions {
            iterations: cfg.iterations,
            seed,
            min_offset: cfg.min_offset,
        },
    )?;
    drop(features);

    let consistent = consistency_mask(&mf, cfg);
    let mut marked = Grid::filled(w, h, false);
    for v in 0..h {
        for u in 0..w {
            if !consistent[v * w + u] {
                continue;
            }
            let (dx, dy) = mf.offset(u, v);
            let (tx, ty) = (u as i64 + dx as i64, v as i64 + dy as i64);
            // corner (u, v) is the upper-left corner of pixel (u, v)
            *marked.get_mut(u.min(w - 1), v.min(h - 1)) = true;
            if tx >= 0 && ty >= 0 && (tx as usize) < w && (ty as usize) < h {
                *marked.get_mut(tx as usize, ty as usize) = true;
            }
        }
    }
    let cleaned = close(&open(&marked, cfg.morph_open), cfg.morph_close);
    let mask = if (w, h) == (w0, h0) {
        cleaned
    } else {
        Grid::from_fn(w0, h0, |x, y| {
            let sx = (((x as f64 + 0.5) * w as f64 / w0 as f64) as usize).min(w - 1);
            let sy = (((y as f64 + 0.5) * h as f64 / h0 as f64) as usize).min(h - 1);
            *cleaned.get(sx, sy)
        })
    };
    Ok(ForgeryMask {
        mask,
        config_hash: cfg.hash(),
        runtime: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct HashConfig {
    pub stride: usize,
    pub kind: BasisKind,
    pub norm: Norm,
    pub order_bound: u32,
    pub scales: Vec<usize>,
    pub pooling: Pooling,
    pub strategy: IntegrationStrategy,
}

impl Default for HashConfig {
    fn default() -> Self {
        Self {
            stride: 8,
            kind: BasisKind::Pct,
            norm: Norm::LInf,
            order_bound: 3,
            scales: vec![8, 10, 12],
            pooling: Pooling::Average,
            strategy: IntegrationStrategy::Zoa,
        }
    }
}

impl HashConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::InvalidConfig {
                field: "stride",
                reason: "must be at least 1".into(),
            });
        }
        if self.scales.is_empty() || self.scales.contains(&0) {
            return Err(Error::InvalidConfig {
                field: "scales",
                reason: "need at least one positive scale".into(),
            });
        }
        Ok(())
    }

    pub fn orders(&self) -> OrderSet {
        order_set(self.kind, self.norm, self.order_bound)
    }

    pub fn hash(&self) -> u64 {
        fnv1a(format!("{self:?}").as_bytes())
    }
}

/// Quantized per-cell feature vectors with per-component ranges.
#[derive(Clone, Debug, PartialEq)]
pub struct HashDigest {
    pub config_hash: u64,
    pub grid_width: usize,
    pub grid_height: usize,
    pub dim: usize,
    /// `(min, max)` per component; byte `b` decodes to `min + b (max - min) / 255`.
    pub ranges: Vec<(f64, f64)>,
    /// Row-major cells, `dim` bytes each.
    pub bytes: Vec<u8>,
}

const DIRH_MAGIC: &[u8; 4] = b"DIRH";

impl HashDigest {
    /// Quantizes row-major cell vectors, each component to its own range.
    pub fn quantize(config_hash: u64, grid_width: usize, grid_height: usize, dim: usize, values: &[f64]) -> Result<Self> {
        if values.len() != grid_width * grid_height * dim || dim == 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {grid_width}x{grid_height} grid of {dim}-vectors",
                values.len()
            )));
        }
        let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); dim];
        for cell in values.chunks_exact(dim) {
            for (r, &v) in ranges.iter_mut().zip(cell) {
                r.0 = r.0.min(v);
                r.1 = r.1.max(v);
            }
        }
        if ranges.iter().any(|r| !r.0.is_finite() || !r.1.is_finite()) {
            return Err(Error::Degenerate("non-finite feature values".into()));
        }
        let bytes = values
            .chunks_exact(dim)
            .flat_map(|cell| {
                cell.iter().zip(&ranges).map(|(&v, &(lo, hi))| {
                    if hi > lo {
                        ((v - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8
                    } else {
                        0
                    }
                })
            })
            .collect();
        Ok(Self {
            config_hash,
            grid_width,
            grid_height,
            dim,
            ranges,
            bytes,
        })
    }

    pub fn cells(&self) -> usize {
        self.grid_width * self.grid_height
    }

    /// Payload size in bytes (one byte per component per cell).
    pub fn payload_len(&self) -> usize {
        self.bytes.len()
    }

    pub fn header_len(&self) -> usize {
        4 + 8 + 3 * 4 + 16 * self.dim
    }

    pub fn dequantized(&self, cell: usize) -> Vec<f64> {
        self.bytes[cell * self.dim..(cell + 1) * self.dim]
            .iter()
            .zip(&self.ranges)
            .map(|(&b, &(lo, hi))| lo + b as f64 * (hi - lo) / 255.0)
            .collect()
    }

    /// `DIRH` layout: magic, u64 config hash, u32 grid width, u32 grid
    /// height, u32 dim, `dim` (f64 min, f64 max) pairs, payload bytes.
    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        out.write_all(DIRH_MAGIC)?;
        out.write_all(&self.config_hash.to_le_bytes())?;
        for v in [self.grid_width, self.grid_height, self.dim] {
            out.write_all(&(v as u32).to_le_bytes())?;
        }
        for &(lo, hi) in &self.ranges {
            out.write_all(&lo.to_le_bytes())?;
            out.write_all(&hi.to_le_bytes())?;
        }
        out.write_all(&self.bytes)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.header_len() + self.payload_len());
        self.write_to(&mut out).expect("writing to memory");
        out
    }

    pub fn read_from(mut input: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut input, &mut magic)?;
        if &magic != DIRH_MAGIC {
            return Err(Error::UnsupportedFormat("not a DIRH digest".into()));
        }
        let mut h = [0u8; 8];
        read_exact(&mut input, &mut h)?;
        let config_hash = u64::from_le_bytes(h);
        let grid_width = read_u32(&mut input)? as usize;
        let grid_height = read_u32(&mut input)? as usize;
        let dim = read_u32(&mut input)? as usize;
        if dim == 0 || dim > 4096 || grid_width.saturating_mul(grid_height) > 1 << 28 {
            return Err(Error::CorruptHeader(format!("implausible digest shape {grid_width}x{grid_height}x{dim}")));
        }
        let mut ranges = Vec::with_capacity(dim);
        for _ in 0..dim {
            let mut b = [0u8; 16];
            read_exact(&mut input, &mut b)?;
            let lo = f64::from_le_bytes(b[..8].try_into().unwrap());
            let hi = f64::from_le_bytes(b[8..].try_into().unwrap());
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::CorruptHeader("non-finite quantization range".into()));
            }
            ranges.push((lo, hi));
        }
        let mut bytes = vec![0u8; grid_width * grid_height * dim];
        read_exact(&mut input, &mut bytes)?;
        Ok(Self {
            config_hash,
            grid_width,
            grid_height,
            dim,
            ranges,
            bytes,
        })
    }
}

/// Kernel response at corner `(u, v)`, pixels outside the image read 0.
fn padded_response(image: &GrayImage, k: &Kernel, u: usize, v: usize) -> Complex64 {
    let w = k.w as i64;
    let (iw, ih) = (image.width() as i64, image.height() as i64);
    let mut acc = Complex64::new(0.0, 0.0);
    for l in 0..k.side() {
        let y = v as i64 - w + l as i64;
        if y < 0 || y >= ih {
            continue;
        }
        let row = image.row(y as usize);
        for kk in 0..k.side() {
            let x = u as i64 - w + kk as i64;
            if x >= 0 && x < iw {
                acc += k.at(kk, l) * row[x as usize];
            }
        }
    }
    acc
}

fn grid_dims(image: &GrayImage, stride: usize) -> Result<(usize, usize)> {
    let (gw, gh) = (image.width() / stride, image.height() / stride);
    if gw == 0 || gh == 0 {
        return Err(Error::ImageTooSmall(format!(
            "{}x{} image holds no {stride}-pixel cell",
            image.width(),
            image.height()
        )));
    }
    Ok((gw, gh))
}

/// Pooled magnitude features at the cell centers `(stride i + stride/2,
/// stride j + stride/2)`, quantized to one byte per component.
///
/// Disks reaching past the image border read zeros there.
pub fn phash_generate(image: &GrayImage, cfg: &HashConfig) -> Result<HashDigest> {
    cfg.validate()?;
    let (gw, gh) = grid_dims(image, cfg.stride)?;
    let orders = cfg.orders();
    let kernels: Vec<Vec<Kernel>> = orders
        .iter()
        .map(|o| cfg.scales.iter().map(|&w| kernel(cfg.kind, o, w, cfg.strategy)).collect())
        .collect::<Result<_>>()?;
    let dim = orders.len();
    let values: Vec<f64> = (0..gw * gh)
        .into_par_iter()
        .flat_map_iter(|cell| {
            let (u, v) = ((cell % gw) * cfg.stride + cfg.stride / 2, (cell / gw) * cfg.stride + cfg.stride / 2);
            let kernels = &kernels;
            (0..dim).map(move |k| {
                let mags = kernels[k].iter().map(|kern| padded_response(image, kern, u, v).norm());
                match cfg.pooling {
                    Pooling::Average => mags.sum::<f64>() / kernels[k].len() as f64,
                    Pooling::Max => mags.fold(0.0, f64::max),
                }
            })
        })
        .collect();
    HashDigest::quantize(cfg.hash(), gw, gh, dim, &values)
}

/// Per-cell distances, the Otsu threshold and the cells above it.
#[derive(Clone, Debug, PartialEq)]
pub struct HashComparison {
    pub distances: Grid<f64>,
    pub mask: Grid<bool>,
    pub threshold: f64,
}

/// Cells must also exceed this multiple of the median cell distance to be
/// flagged. Otsu always splits, even a unimodal set of distances; the floor
/// keeps uniform changes (recompression, brightness) from being flagged.
pub const MEDIAN_FLOOR: f64 = 3.0;

/// Compares two digests cell by cell on dequantized vectors, flagging
/// cells above `max(otsu, MEDIAN_FLOOR * median)`.
pub fn phash_compare(a: &HashDigest, b: &HashDigest) -> Result<HashComparison> {
    phash_compare_with(a, b, MEDIAN_FLOOR)
}

/// [`phash_compare`] with an explicit median floor; 0 gives plain Otsu.
///
/// When every distance is equal no cell is flagged and the threshold is
/// that common distance.
pub fn phash_compare_with(a: &HashDigest, b: &HashDigest, median_floor: f64) -> Result<HashComparison> {
    if a.config_hash != b.config_hash {
        return Err(Error::ConfigMismatch(format!(
            "digests made with configs {:016x} and {:016x}",
            a.config_hash, b.config_hash
        )));
    }
    if (a.grid_width, a.grid_height, a.dim) != (b.grid_width, b.grid_height, b.dim) {
        return Err(Error::ConfigMismatch(format!(
            "{}x{}x{} digest compared with {}x{}x{}",
            a.grid_width, a.grid_height, a.dim, b.grid_width, b.grid_height, b.dim
        )));
    }
    let dist: Vec<f64> = (0..a.cells())
        .map(|c| {
            a.dequantized(c)
                .iter()
                .zip(b.dequantized(c))
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let otsu = match otsu_threshold(&dist) {
        Ok(t) => t,
        Err(Error::Degenerate(_)) => dist[0],
        Err(e) => return Err(e),
    };
    let mut sorted = dist.clone();
    sorted.sort_by(f64::total_cmp);
    let threshold = otsu.max(median_floor * sorted[sorted.len() / 2]);
    let mask = Grid::from_vec(a.grid_width, a.grid_height, dist.iter().map(|&d| d > threshold).collect())?;
    Ok(HashComparison {
        distances: Grid::from_vec(a.grid_width, a.grid_height, dist)?,
        mask,
        threshold,
    })
}

const OTSU_BINS: usize = 256;

/// Otsu's threshold on a 256-bin histogram spanning `[min, max]`.
///
/// Values above the threshold form the upper class. The split maximizing
/// the between-class variance is taken at the lowest such bin; when the
/// bins after it are empty the variance stays tied across them, and the
/// threshold is the middle of that empty run.
pub fn otsu_threshold(values: &[f64]) -> Result<f64> {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if finite.len() < 2 || hi <= lo {
        return Err(Error::Degenerate("Otsu threshold needs at least two distinct values".into()));
    }
    let width = (hi - lo) / OTSU_BINS as f64;
    let mut hist = [0usize; OTSU_BINS];
    for &v in &finite {
        hist[(((v - lo) / width) as usize).min(OTSU_BINS - 1)] += 1;
    }
    let total = finite.len() as f64;
    let center = |i: usize| lo + (i as f64 + 0.5) * width;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| c as f64 * center(i)).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_k) = (f64::NEG_INFINITY, 0);
    for (k, &c) in hist.iter().enumerate().take(OTSU_BINS - 1) {
        w0 += c as f64;
        sum0 += c as f64 * center(k);
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best {
            best = between;
            best_k = k;
        }
    }
    let mut end = best_k;
    while end + 1 < OTSU_BINS - 1 && hist[end + 1] == 0 {
        end += 1;
    }
    Ok(lo + (best_k + end + 2) as f64 * 0.5 * width)
}

/// Comparison digest with `dim` low-frequency DCT-II coefficients (zigzag
/// order) of each `stride x stride` cell.
pub fn dct_digest(image: &GrayImage, stride: usize, dim: usize) -> Result<HashDigest> {
    if stride == 0 || dim == 0 || dim > stride * stride {
        return Err(Error::InvalidConfig {
            field: "dim",
            reason: format!("{dim} coefficients do not fit a {stride}x{stride} cell"),
        });
    }
    let (gw, gh) = grid_dims(image, stride)?;
    let mut zigzag: Vec<(usize, usize)> = (0..stride).flat_map(|j| (0..stride).map(move |i| (i, j))).collect();
    zigzag.sort_by_key(|&(i, j)| (i + j, if (i + j) % 2 == 0 { j } else { i }));
    zigzag.truncate(dim);
    let n = stride as f64;
    let basis: Vec<Vec<f64>> = (0..stride)
        .map(|k| {
            (0..stride)
                .map(|x| (std::f64::consts::PI * (x as f64 + 0.5) * k as f64 / n).cos())
                .collect()
        })
        .collect();
    let mut values = Vec::with_capacity(gw * gh * dim);
    for cy in 0..gh {
        for cx in 0..gw {
            for &(ki, kj) in &zigzag {
                let mut acc = 0.0;
                for y in 0..stride {
                    let row = image.row(cy * stride + y);
                    for x in 0..stride {
                        acc += row[cx * stride + x] * basis[ki][x] * basis[kj][y];
                    }
                }
                values.push(acc);
            }
        }
    }
    HashDigest::quantize(fnv1a(format!("dct/{stride}/{dim}").as_bytes()), gw, gh, dim, &values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{brightness, multiscale_texture};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn square(w: usize, h: usize, x0: usize, y0: usize, s: usize) -> Grid<bool> {
        Grid::from_fn(w, h, |x, y| x >= x0 && y >= y0 && x < x0 + s && y < y0 + s)
    }

    #[test]
    fn scale_lists() {
        assert_eq!(linear_scales(8, 32, 10), vec![8, 11, 13, 16, 19, 21, 24, 27, 29, 32]);
        assert_eq!(linear_scales(8, 12, 3), vec![8, 10, 12]);
        assert_eq!(linear_scales(5, 5, 4), vec![5]);
    }

    #[test]
    fn config_validation() {
        assert!(CopyMoveConfig::default().validate().is_ok());
        let c = CopyMoveConfig { min_offset: 20.0, ..Default::default() };
        assert!(matches!(c.validate(), Err(Error::InvalidConfig { field: "min_offset", .. })));
        let c = CopyMoveConfig { scales: vec![8, 8], ..Default::default() };
        assert!(c.validate().is_err());
        assert_eq!(CopyMoveConfig::default().orders().len(), 10);
        assert_eq!(HashConfig::default().orders().len(), 16);
        assert_ne!(CopyMoveConfig::default().hash(), CopyMoveConfig { morph_close: 5, ..Default::default() }.hash());
    }

    #[test]
    fn morphology_on_squares() {
        let m = square(40, 40, 10, 10, 12);
        // a convex set is closed; a dilated set is open
        assert_eq!(close(&m, 3), m);
        let round = dilate(&square(40, 40, 16, 16, 6), 3);
        assert_eq!(open(&round, 3), round);
        // a lone pixel does not survive opening
        let mut speck = m.clone();
        *speck.get_mut(35, 35) = true;
        assert_eq!(open(&speck, 1), open(&m, 1));
        assert!(!*open(&speck, 1).get(35, 35));
        let d = dilate(&m, 2);
        assert!(*d.get(8, 15) && !*d.get(7, 15) && !*d.get(8, 8));
        let e = erode(&m, 2);
        assert!(*e.get(12, 15) && !*e.get(11, 15));
        // the image border does not erode
        let full = Grid::filled(10, 10, true);
        assert_eq!(erode(&full, 3), full);
    }

    #[test]
    fn mask_score_examples() {
        let truth = square(64, 64, 16, 16, 32);
        assert_eq!(score_mask(&truth, &truth, 0).unwrap(), Scores { precision: 1.0, recall: 1.0, f1: 1.0 });
        let empty = Grid::filled(64, 64, false);
        assert_eq!(score_mask(&empty, &truth, 2).unwrap(), Scores { precision: 0.0, recall: 0.0, f1: 0.0 });
        let half = Grid::from_fn(64, 64, |x, y| *truth.get(x, y) && x < 32);
        let s = score_mask(&half, &truth, 0).unwrap();
        assert_eq!(s.precision, 1.0);
        assert_eq!(s.recall, 0.5);
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-12);
        // a one-pixel miss along the edge vanishes inside the excluded band
        let shrunk = erode(&truth, 1);
        assert!(score_mask(&shrunk, &truth, 0).unwrap().recall < 1.0);
        assert_eq!(score_mask(&shrunk, &truth, 2).unwrap().f1, 1.0);
        assert!(score_mask(&Grid::filled(3, 3, false), &truth, 0).is_err());
    }

    fn brute_otsu(values: &[f64]) -> f64 {
        // direct between-class variance over every split of the sorted values
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let (mut best, mut t) = (f64::NEG_INFINITY, 0.0);
        for k in 1..v.len() {
            if v[k] == v[k - 1] {
                continue;
            }
            let m0 = v[..k].iter().sum::<f64>() / k as f64;
            let m1 = v[k..].iter().sum::<f64>() / (n - k as f64);
            let b = k as f64 * (n - k as f64) * (m0 - m1).powi(2);
            if b > best {
                best = b;
                t = 0.5 * (v[k - 1] + v[k]);
            }
        }
        t
    }

    #[test]
    fn otsu_examples() {
        let mut bimodal = vec![0.0; 100];
        bimodal.extend(vec![10.0; 100]);
        let t = otsu_threshold(&bimodal).unwrap();
        assert!(t > 0.0 && t < 10.0);
        let t = otsu_threshold(&[1.0, 2.0]).unwrap();
        assert!(t > 1.0 && t <= 2.0);
        assert!(matches!(otsu_threshold(&[3.0, 3.0, 3.0]), Err(Error::Degenerate(_))));

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (a, b) = (Normal::new(0.1, 0.02).unwrap(), Normal::new(0.9, 0.02).unwrap());
        let mut mix: Vec<f64> = (0..1000).map(|_| a.sample(&mut rng)).collect();
        mix.extend((0..1000).map(|_| b.sample(&mut rng)));
        let t = otsu_threshold(&mix).unwrap();
        assert!((0.3..=0.7).contains(&t), "{t}");
        // both separate the same two groups
        let reference = brute_otsu(&mix);
        assert_eq!(mix.iter().filter(|&&v| v > t).count(), mix.iter().filter(|&&v| v > reference).count());
    }

    #[test]
    fn digest_size_and_round_trip() {
        let img = multiscale_texture(256, 256, 1);
        let cfg = HashConfig::default();
        let d = phash_generate(&img, &cfg).unwrap();
        assert_eq!((d.grid_width, d.grid_height, d.dim), (32, 32, 16));
        assert_eq!(d.payload_len(), 32 * 32 * 16);
        let bytes = d.to_bytes();
        assert_eq!(bytes.len(), d.header_len() + 32 * 32 * 16);
        assert_eq!(HashDigest::read_from(bytes.as_slice()).unwrap(), d);
        assert!(matches!(HashDigest::read_from(&bytes[..100]), Err(Error::CorruptHeader(_))));
        assert_eq!(phash_generate(&img, &cfg).unwrap().to_bytes(), bytes);
        let baseline = dct_digest(&img, 8, 32).unwrap();
        assert_eq!(2 * d.payload_len(), baseline.payload_len());
        assert!(phash_generate(&GrayImage::filled(7, 30, 0.0), &cfg).is_err());
    }

    #[test]
    fn identical_digests_compare_clean() {
        let img = multiscale_texture(128, 128, 2);
        let d = phash_generate(&img, &HashConfig::default()).unwrap();
        let c = phash_compare(&d, &d).unwrap();
        assert!(c.distances.as_slice().iter().all(|&v| v == 0.0));
        assert!(c.mask.as_slice().iter().all(|&b| !b));
        let other = phash_generate(&img, &HashConfig { scales: vec![8, 10], ..Default::default() }).unwrap();
        assert!(matches!(phash_compare(&d, &other), Err(Error::ConfigMismatch(_))));
    }

    #[test]
    fn quantization_round_trip_error_is_bounded() {
        let img = brightness(&multiscale_texture(64, 64, 3), 0.0);
        let d = phash_generate(&img, &HashConfig::default()).unwrap();
        for (k, &(lo, hi)) in d.ranges.iter().enumerate() {
            assert!(hi >= lo, "component {k}");
        }
        let cell = d.dequantized(5);
        for (v, &(lo, hi)) in cell.iter().zip(&d.ranges) {
            assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
        }
    }

    #[test]
    fn flat_image_has_no_forgery() {
        let cfg = CopyMoveConfig {
            upsample_long_edge: 0,
            ..Default::default()
        };
        let m = copymove_detect(&GrayImage::filled(160, 160, 0.5), &cfg, 0).unwrap();
        assert_eq!(m.positives(), 0);
        assert_eq!((m.mask.width(), m.mask.height()), (160, 160));
        assert!(copymove_detect(&GrayImage::filled(40, 40, 0.5), &cfg, 0).is_err());
    }
}
