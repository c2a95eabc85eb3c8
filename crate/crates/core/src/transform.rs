//! Dense moment fields over all corner positions `(u, v)` and a scale set.
//!
//! Entry `(u, v)` of a channel at scale `w` is the moment of the disk of
//! radius `w` centered at the pixel corner `(u, v)`. Positions closer than
//! `w` to any border are computed with zero padding and flagged invalid.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::basis::{basis_eval, BasisKind, LocalFrame, OrderPair, OrderSet};
use crate::error::{Error, Result};
use crate::fft::{fast_size, Fft2d};
use crate::formats::{self, ChannelTag, FieldPayload};
use crate::kernelgen::{kernel, IntegrationStrategy, Kernel, KernelBank, Spectrum};
use crate::raster::{GrayImage, Grid};

/// Moment at one frame by direct summation over pixels (and sub-samples).
///
/// Evaluates the basis through [`basis_eval`] rather than a prebuilt
/// kernel, so it serves as the reference for every dense path.
pub fn moments_at(
    image: &GrayImage,
    kind: BasisKind,
    order: OrderPair,
    frame: LocalFrame,
    strategy: IntegrationStrategy,
) -> Result<Complex64> {
    let (iw, ih) = (image.width() as f64, image.height() as f64);
    if frame.u - frame.w < 0.0 || frame.v - frame.w < 0.0 || frame.u + frame.w > iw || frame.v + frame.w > ih {
        return Err(Error::DiskOutOfBounds {
            u: frame.u,
            v: frame.v,
            w: frame.w,
            width: image.width(),
            height: image.height(),
        });
    }
    crate::basis::validate_order(kind, order)?;
    let l = strategy.side() as usize;
    let offsets: Vec<f64> = (0..l).map(|a| (a as f64 + 0.5) / l as f64 - 0.5).collect();
    let x0 = (frame.u - frame.w).floor().max(0.0) as usize;
    let x1 = ((frame.u + frame.w).ceil() as usize).min(image.width());
    let y0 = (frame.v - frame.w).floor().max(0.0) as usize;
    let y1 = ((frame.v + frame.w).ceil() as usize).min(image.height());
    let weight = 1.0 / (frame.w * frame.w * (l * l) as f64);

    let mut acc = Complex64::new(0.0, 0.0);
    for y in y0..y1 {
        for x in x0..x1 {
            let f = image.get(x, y);
            let mut pix = Complex64::new(0.0, 0.0);
            for &oy in &offsets {
                let py = y as f64 + 0.5 + oy;
                for &ox in &offsets {
                    let px = x as f64 + 0.5 + ox;
                    if frame.contains(px, py) {
                        pix += basis_eval(kind, order, frame, px, py)?.conj();
                    }
                }
            }
            acc += pix * f;
        }
    }
    Ok(acc * weight)
}

/// Which dense evaluation route to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecompositionPath {
    Spatial,
    Fft,
}

impl fmt::Display for DecompositionPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecompositionPath::Spatial => "spatial",
            DecompositionPath::Fft => "fft",
        })
    }
}

impl FromStr for DecompositionPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spatial" => Ok(DecompositionPath::Spatial),
            "fft" => Ok(DecompositionPath::Fft),
            other => Err(Error::InvalidConfig {
                field: "path",
                reason: format!("expected `spatial` or `fft`, got `{other}`"),
            }),
        }
    }
}

fn check_fits(image: &GrayImage, w: usize) -> Result<()> {
    if image.width() < 2 * w || image.height() < 2 * w {
        return Err(Error::ImageTooSmall(format!(
            "{}x{} image cannot hold a disk of radius {w}",
            image.width(),
            image.height()
        )));
    }
    Ok(())
}

/// Sliding-window evaluation of one kernel at every corner position.
pub fn dense_spatial(image: &GrayImage, kernel: &Kernel) -> Result<Grid<Complex64>> {
    check_fits(image, kernel.w)?;
    let (width, height) = (image.width(), image.height());
    let w = kernel.w as i64;
    let side = kernel.side();
    let mut re = vec![0.0f64; width * height];
    let mut im = vec![0.0f64; width * height];

    // F(u, v) = sum_{k,l} h(k, l) f(u - w + k, v - w + l)
    for v in 0..height {
        let out_re = &mut re[v * width..(v + 1) * width];
        let out_im = &mut im[v * width..(v + 1) * width];
        for l in 0..side {
            let y = v as i64 - w + l as i64;
            if y < 0 || y >= height as i64 {
                continue;
            }
            let src = image.row(y as usize);
            for k in 0..side {
                let h = kernel.at(k, l);
                if h.re == 0.0 && h.im == 0.0 {
                    continue;
                }
                // x = u - w + k must lie in [0, width)
                let shift = k as i64 - w;
                let u_lo = (-shift).max(0) as usize;
                let u_hi = (width as i64 - shift).min(width as i64);
                if u_hi <= u_lo as i64 {
                    continue;
                }
                let u_hi = u_hi as usize;
                let s_lo = (u_lo as i64 + shift) as usize;
                let src_run = &src[s_lo..s_lo + (u_hi - u_lo)];
                for ((o_re, o_im), &f) in out_re[u_lo..u_hi].iter_mut().zip(&mut out_im[u_lo..u_hi]).zip(src_run) {
                    *o_re += h.re * f;
                    *o_im += h.im * f;
                }
            }
        }
    }
    let data = re.into_iter().zip(im).map(|(a, b)| Complex64::new(a, b)).collect();
    Grid::from_vec(width, height, data)
}

/// Forward transform of a zero-padded image, reusable across kernels.
pub struct ImageSpectrum {
    image_width: usize,
    image_height: usize,
    plan: Fft2d,
    bins: Vec<Complex64>,
}

impl ImageSpectrum {
    /// Places the image at the origin of a `p x q` zero grid and transforms it.
    pub fn new(image: &GrayImage, p: usize, q: usize) -> Result<Self> {
        Self::with_plan(image, Fft2d::new(p, q))
    }

    pub fn with_plan(image: &GrayImage, plan: Fft2d) -> Result<Self> {
        let (p, q) = (plan.width(), plan.height());
        if p < image.width() || q < image.height() {
            return Err(Error::SpectrumSizeMismatch {
                got_w: p,
                got_h: q,
                need_w: image.width(),
                need_h: image.height(),
            });
        }
        let mut bins = vec![Complex64::new(0.0, 0.0); p * q];
        for y in 0..image.height() {
            for (dst, &src) in bins[y * p..y * p + image.width()].iter_mut().zip(image.row(y)) {
                *dst = Complex64::new(src, 0.0);
            }
        }
        plan.forward(&mut bins);
        Ok(Self {
            image_width: image.width(),
            image_height: image.height(),
            plan,
            bins,
        })
    }

    pub fn width(&self) -> usize {
        self.plan.width()
    }

    pub fn height(&self) -> usize {
        self.plan.height()
    }

    /// Field of one kernel given its spectrum on the same grid.
    pub fn apply(&self, spectrum: &Spectrum, w: usize) -> Result<Grid<Complex64>> {
        let (p, q) = (self.width(), self.height());
        let (need_w, need_h) = (self.image_width + 2 * w, self.image_height + 2 * w);
        if spectrum.width() != p || spectrum.height() != q || p < need_w || q < need_h {
            return Err(Error::SpectrumSizeMismatch {
                got_w: spectrum.width(),
                got_h: spectrum.height(),
                need_w: need_w.max(p),
                need_h: need_h.max(q),
            });
        }
        let mut prod: Vec<Complex64> = self.bins.iter().zip(spectrum.bins()).map(|(a, b)| a * b).collect();
        self.plan.inverse(&mut prod);
        let mut out = Vec::with_capacity(self.image_width * self.image_height);
        for y in 0..self.image_height {
            out.extend_from_slice(&prod[y * p..y * p + self.image_width]);
        }
        Grid::from_vec(self.image_width, self.image_height, out)
    }

    /// Dense response to `kernel`, handed to `visit` one image row at a
    /// time. Equal to `apply` with the kernel's spectrum, without holding
    /// the spectrum or the output grid.
    pub fn respond(&self, kernel: &Kernel, scratch: &mut FftScratch, mut visit: impl FnMut(usize, &[Complex64])) -> Result<()> {
        let (p, q) = (self.width(), self.height());
        let w = kernel.w;
        if p < self.image_width + 2 * w || q < self.image_height + 2 * w {
            return Err(Error::SpectrumSizeMismatch {
                got_w: p,
                got_h: q,
                need_w: self.image_width + 2 * w,
                need_h: self.image_height + 2 * w,
            });
        }
        let FftScratch { buf, transposed } = scratch;
        buf.clear();
        buf.resize(p * q, Complex64::new(0.0, 0.0));
        let side = kernel.side();
        let mut rows = Vec::with_capacity(side);
        for j in 0..side {
            let y = (w as i64 - j as i64).rem_euclid(q as i64) as usize;
            rows.push(y);
            for i in 0..side {
                let x = (w as i64 - i as i64).rem_euclid(p as i64) as usize;
                buf[y * p + x] = kernel.at(i, j);
            }
        }
        self.plan.forward_sparse_with(buf, &rows, transposed);
        for (k, a) in buf.iter_mut().zip(&self.bins) {
            *k = a * *k;
        }
        self.plan.inverse_with(buf, transposed);
        for y in 0..self.image_height {
            visit(y, &buf[y * p..y * p + self.image_width]);
        }
        Ok(())
    }
}

/// Reusable buffers for [`ImageSpectrum::respond`].
#[derive(Default)]
pub struct FftScratch {
    buf: Vec<Complex64>,
    transposed: Vec<Complex64>,
}

/// Frequency-domain evaluation of one kernel, given its spectrum.
pub fn dense_fft(image: &GrayImage, spectrum: &Spectrum, w: usize) -> Result<Grid<Complex64>> {
    check_fits(image, w)?;
    let (need_w, need_h) = (image.width() + 2 * w, image.height() + 2 * w);
    if spectrum.width() < need_w || spectrum.height() < need_h {
        return Err(Error::SpectrumSizeMismatch {
            got_w: spectrum.width(),
            got_h: spectrum.height(),
            need_w,
            need_h,
        });
    }
    ImageSpectrum::new(image, spectrum.width(), spectrum.height())?.apply(spectrum, w)
}

/// FFT grid size used when no bank is supplied.
pub fn padded_size(width: usize, height: usize, w_max: usize) -> (usize, usize) {
    (fast_size(width + 2 * w_max), fast_size(height + 2 * w_max))
}

/// Complex moment channels keyed by `(order, w)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentField {
    width: usize,
    height: usize,
    kind: BasisKind,
    channels: BTreeMap<(OrderPair, usize), Grid<Complex64>>,
}

impl MomentField {
    pub fn new(width: usize, height: usize, kind: BasisKind) -> Self {
        Self {
            width,
            height,
            kind,
            channels: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, order: OrderPair, w: usize, channel: Grid<Complex64>) -> Result<()> {
        if channel.width() != self.width || channel.height() != self.height {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} channel in a {}x{} field",
                channel.width(),
                channel.height(),
                self.width,
                self.height
            )));
        }
        self.channels.insert((order, w), channel);
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn channel(&self, order: OrderPair, w: usize) -> Result<&Grid<Complex64>> {
        self.channels
            .get(&(order, w))
            .ok_or_else(|| Error::MissingChannel(format!("{} {order} w={w}", self.kind)))
    }

    pub fn iter(&self) -> impl Iterator<Item = (OrderPair, usize, &Grid<Complex64>)> {
        self.channels.iter().map(|(&(o, w), g)| (o, w, g))
    }

    /// Distinct scales present, ascending.
    pub fn scales(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.channels.keys().map(|&(_, w)| w).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Border width flagged invalid at scale `w`.
    pub fn valid_margin(&self, w: usize) -> usize {
        w
    }

    /// True when the disk of radius `w` at corner `(u, v)` lies inside the image.
    pub fn is_valid(&self, u: usize, v: usize, w: usize) -> bool {
        is_interior(u, v, w, self.width, self.height)
    }

    /// Writes the `DIRF` container with a complex payload.
    pub fn write_dirf(&self, out: impl std::io::Write) -> Result<()> {
        let tags: Vec<ChannelTag> = self
            .channels
            .keys()
            .map(|&(o, w)| ChannelTag {
                kind: self.kind.code(),
                n: o.n,
                m: o.m,
                w: w as u32,
            })
            .collect();
        let data: Vec<Vec<Complex64>> = self.channels.values().map(|g| g.as_slice().to_vec()).collect();
        formats::write_dirf(out, self.width, self.height, &tags, &FieldPayload::Complex(data))
    }

    pub fn read_dirf(input: impl std::io::Read) -> Result<Self> {
        let dump = formats::read_dirf(input)?;
        let FieldPayload::Complex(data) = dump.payload else {
            return Err(Error::UnsupportedFormat("DIRF payload is not complex".into()));
        };
        let kind = match dump.tags.first() {
            Some(t) => BasisKind::from_code(t.kind)
                .ok_or_else(|| Error::CorruptHeader(format!("unknown basis code {}", t.kind)))?,
            None => BasisKind::Pct,
        };
        let mut field = MomentField::new(dump.width, dump.height, kind);
        for (tag, values) in dump.tags.into_iter().zip(data) {
            if tag.kind != kind.code() {
                return Err(Error::CorruptHeader("mixed basis kinds in one moment field".into()));
            }
            field.insert(
                OrderPair::new(tag.n, tag.m),
                tag.w as usize,
                Grid::from_vec(dump.width, dump.height, values)?,
            )?;
        }
        Ok(field)
    }
}

#[inline]
pub(crate) fn is_interior(u: usize, v: usize, w: usize, width: usize, height: usize) -> bool {
    u >= w && v >= w && u + w <= width && v + w <= height
}

/// Computes every `(order, w)` channel along the requested path.
///
/// With a bank, spectra are looked up (and must exist for every channel);
/// otherwise they are built on a grid of [`padded_size`]. Channels are
/// evaluated in parallel.
pub fn decompose(
    image: &GrayImage,
    kind: BasisKind,
    orders: &OrderSet,
    scales: &[usize],
    strategy: IntegrationStrategy,
    path: DecompositionPath,
    bank: Option<&KernelBank>,
) -> Result<MomentField> {
    let Some(&w_max) = scales.iter().max() else {
        return Err(Error::SizeTooSmall("scale list is empty".into()));
    };
    if scales.contains(&0) {
        return Err(Error::SizeTooSmall("scale must be at least 1".into()));
    }
    check_fits(image, w_max)?;
    if orders.kind != kind {
        return Err(Error::ConfigMismatch(format!(
            "order set built for {} used with {kind}",
            orders.kind
        )));
    }
    let jobs: Vec<(OrderPair, usize)> = orders
        .iter()
        .flat_map(|o| scales.iter().map(move |&w| (o, w)))
        .collect();

    let channels: Vec<Grid<Complex64>> = match path {
        DecompositionPath::Spatial => jobs
            .par_iter()
            .map(|&(o, w)| dense_spatial(image, &kernel(kind, o, w, strategy)?))
            .collect::<Result<_>>()?,
        DecompositionPath::Fft => {
            let (p, q) = match bank {
                Some(b) => {
                    if b.strategy() != strategy {
                        return Err(Error::ConfigMismatch(format!(
                            "bank built with {} but {strategy} requested",
                            b.strategy()
                        )));
                    }
                    (b.width(), b.height())
                }
                None => padded_size(image.width(), image.height(), w_max),
            };
            let img_spec = ImageSpectrum::new(image, p, q)?;
            let (width, height) = (image.width(), image.height());
            jobs.par_iter()
                .map_init(FftScratch::default, |scratch, &(o, w)| match bank {
                    Some(b) => {
                        let spec = b
                            .get(kind, o, w)
                            .ok_or_else(|| Error::MissingChannel(format!("bank has no {kind} {o} w={w}")))?;
                        img_spec.apply(spec, w)
                    }
                    None => {
                        let mut out = Vec::with_capacity(width * height);
                        img_spec.respond(&kernel(kind, o, w, strategy)?, scratch, |_, row| out.extend_from_slice(row))?;
                        Grid::from_vec(width, height, out)
                    }
                })
                .collect::<Result<_>>()?
        }
    };

    let mut field = MomentField::new(image.width(), image.height(), kind);
    for ((o, w), ch) in jobs.into_iter().zip(channels) {
        field.insert(o, w, ch)?;
    }
    Ok(field)
}
