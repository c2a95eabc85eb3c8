//! Discretized kernels `H_nm^w` and their frequency spectra.
//!
//! A kernel of scale `w` is a `2w x 2w` grid. Pixel `(i, j)` (0-based) has its
//! center at offset `(i + 0.5 - w, j + 0.5 - w)` from the disk center, so the
//! disk sits on a pixel corner and tiles the grid exactly. Each entry
//! approximates the integral of the conjugated basis over the pixel, scaled
//! by `1 / w^2`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::basis::{angular_eval, validate_order, wrapped_atan2, BasisKind, OrderPair, OrderSet, RadialBasis};
use crate::error::{Error, Result};
use crate::fft::Fft2d;

/// How each pixel's integral over the disk is approximated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IntegrationStrategy {
    /// One sample at the pixel center.
    Zoa,
    /// `L x L` equal-weight sub-samples per pixel.
    Upsample(u32),
}

impl IntegrationStrategy {
    /// Samples per pixel side.
    pub fn side(self) -> u32 {
        match self {
            IntegrationStrategy::Zoa => 1,
            IntegrationStrategy::Upsample(l) => l.max(1),
        }
    }

    /// Container code: 0 for ZOA, otherwise the sub-sample side.
    pub fn code(self) -> u32 {
        match self {
            IntegrationStrategy::Zoa => 0,
            IntegrationStrategy::Upsample(l) => l,
        }
    }

    pub fn from_code(code: u32) -> Self {
        if code == 0 {
            IntegrationStrategy::Zoa
        } else {
            IntegrationStrategy::Upsample(code)
        }
    }
}

impl fmt::Display for IntegrationStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntegrationStrategy::Zoa => f.write_str("zoa"),
            IntegrationStrategy::Upsample(l) => write!(f, "up{l}"),
        }
    }
}

impl FromStr for IntegrationStrategy {
    type Err = Error;

    /// Accepts `zoa`, `upN` or `upsampleN`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        if s == "zoa" {
            return Ok(IntegrationStrategy::Zoa);
        }
        let digits = s.trim_start_matches("upsample").trim_start_matches("up");
        match digits.parse::<u32>() {
            Ok(l) if l >= 1 && digits.len() < s.len() => Ok(IntegrationStrategy::Upsample(l)),
            _ => Err(Error::InvalidConfig {
                field: "strategy",
                reason: format!("expected `zoa` or `upN`, got `{s}`"),
            }),
        }
    }
}

/// Discretized conjugate basis on a `2w x 2w` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    pub kind: BasisKind,
    pub order: OrderPair,
    pub w: usize,
    pub strategy: IntegrationStrategy,
    grid: Vec<Complex64>,
}

impl Kernel {
    pub fn side(&self) -> usize {
        2 * self.w
    }

    /// Entry at column `i`, row `j`.
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.grid[j * self.side() + i]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.grid
    }

    /// Sum of all entries: the moment of a unity image.
    pub fn sum(&self) -> Complex64 {
        self.grid.iter().sum()
    }
}

/// Zero-order approximation: the conjugated basis at each pixel center.
pub fn kernel_zoa(kind: BasisKind, order: OrderPair, w: usize) -> Result<Kernel> {
    build_kernel(kind, order, w, IntegrationStrategy::Zoa)
}

/// Pseudo up-sampling with `l_side x l_side` sub-samples per pixel.
pub fn kernel_upsampled(kind: BasisKind, order: OrderPair, w: usize, l_side: u32) -> Result<Kernel> {
    if l_side == 0 {
        return Err(Error::SizeTooSmall("up-sampling side must be at least 1".into()));
    }
    build_kernel(kind, order, w, IntegrationStrategy::Upsample(l_side))
}

pub fn kernel(kind: BasisKind, order: OrderPair, w: usize, strategy: IntegrationStrategy) -> Result<Kernel> {
    build_kernel(kind, order, w, strategy)
}

fn build_kernel(kind: BasisKind, order: OrderPair, w: usize, strategy: IntegrationStrategy) -> Result<Kernel> {
    validate_order(kind, order)?;
    if w == 0 {
        return Err(Error::SizeTooSmall("kernel scale must be at least 1".into()));
    }
    let radial = RadialBasis::new(kind, order)?;
    let side = 2 * w;
    let l = strategy.side() as usize;
    let offsets: Vec<f64> = (0..l).map(|a| (a as f64 + 0.5) / l as f64 - 0.5).collect();
    let wf = w as f64;
    let r2max = wf * wf;
    let weight = 1.0 / (wf * wf * (l * l) as f64);

    let mut grid = vec![Complex64::new(0.0, 0.0); side * side];
    for j in 0..side {
        for i in 0..side {
            let cx = i as f64 + 0.5 - wf;
            let cy = j as f64 + 0.5 - wf;
            let mut acc = Complex64::new(0.0, 0.0);
            for &oy in &offsets {
                let dy = cy + oy;
                for &ox in &offsets {
                    let dx = cx + ox;
                    let d2 = dx * dx + dy * dy;
                    if d2 > r2max {
                        continue;
                    }
                    acc += conj_basis(&radial, order.m, dx, dy, wf);
                }
            }
            grid[j * side + i] = acc * weight;
        }
    }
    Ok(Kernel {
        kind,
        order,
        w,
        strategy,
        grid,
    })
}

/// `conj(V(dx, dy))` for offsets from the disk center in pixels.
#[inline]
pub(crate) fn conj_basis(radial: &RadialBasis, m: i32, dx: f64, dy: f64, w: f64) -> Complex64 {
    let x = dx / w;
    let y = dy / w;
    let r = x.hypot(y);
    let theta = wrapped_atan2(y, x);
    (radial.eval(r) * angular_eval(m, theta)).conj()
}

/// Complex spectrum on a fixed `width x height` frequency grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    width: usize,
    height: usize,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn from_vec(width: usize, height: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} bins for a {width}x{height} spectrum",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bins(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn at(&self, kx: usize, ky: usize) -> Complex64 {
        self.data[ky * self.width + kx]
    }

    pub fn dc(&self) -> Complex64 {
        self.data[0]
    }

    /// Relative L2 distance `||self - other|| / ||other||`.
    pub fn relative_l2(&self, other: &Spectrum) -> f64 {
        let num: f64 = self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = other.data.iter().map(|b| b.norm_sqr()).sum();
        (num / den).sqrt()
    }
}

/// Places the kernel so that circular convolution with a zero-padded image
/// yields the moment at every corner position: entry `(i, j)` goes to
/// `((w - i) mod M0, (w - j) mod N0)`.
pub fn arrange_kernel(kernel: &Kernel, m0: usize, n0: usize) -> Result<Vec<Complex64>> {
    let side = kernel.side();
    if m0 < side || n0 < side {
        return Err(Error::SizeTooSmall(format!(
            "spectrum {m0}x{n0} cannot hold a {side}x{side} kernel"
        )));
    }
    let w = kernel.w as i64;
    let mut buf = vec![Complex64::new(0.0, 0.0); m0 * n0];
    for j in 0..side {
        let y = (w - j as i64).rem_euclid(n0 as i64) as usize;
        for i in 0..side {
            let x = (w - i as i64).rem_euclid(m0 as i64) as usize;
            buf[y * m0 + x] = kernel.at(i, j);
        }
    }
    Ok(buf)
}

/// DFT of the arranged kernel (see [`arrange_kernel`]).
pub fn kernel_spectrum(kernel: &Kernel, m0: usize, n0: usize) -> Result<Spectrum> {
    kernel_spectrum_with(kernel, &Fft2d::new(m0, n0))
}

pub fn kernel_spectrum_with(kernel: &Kernel, plan: &Fft2d) -> Result<Spectrum> {
    let mut buf = arrange_kernel(kernel, plan.width(), plan.height())?;
    plan.forward(&mut buf);
    Spectrum::from_vec(plan.width(), plan.height(), buf)
}

#[inline]
fn signed_bin(k: usize, size: usize) -> f64 {
    if k < size.div_ceil(2) {
        k as f64
    } else {
        k as f64 - size as f64
    }
}

/// Derives the spectrum at scale `w` from the one at `w0` by the Fourier
/// scaling theorem.
///
/// Kernels carry the `1/w^2` area factor, so their spectra satisfy
/// `S_w(xi) = S_w0(w xi / w0)` with no extra amplitude term. The arranged
/// kernel sits half a pixel off the grid origin; that linear phase is
/// removed before interpolation and restored afterwards. Interpolation is
/// bilinear over signed frequencies; bins mapping outside the source band
/// are zero.
pub fn spectrum_rescale(spectrum_w0: &Spectrum, w0: usize, w: usize) -> Spectrum {
    let (mw, nh) = (spectrum_w0.width, spectrum_w0.height);
    if w == w0 {
        return spectrum_w0.clone();
    }
    let ratio = w as f64 / w0 as f64;
    let half_shift = |k: f64, size: usize| Complex64::from_polar(1.0, std::f64::consts::PI * k / size as f64);

    // centered spectrum with the half-pixel phase removed
    let centered = |kx: i64, ky: i64| -> Option<Complex64> {
        let lo_x = -(mw as i64 / 2);
        let hi_x = (mw as i64 - 1) / 2;
        let lo_y = -(nh as i64 / 2);
        let hi_y = (nh as i64 - 1) / 2;
        if kx < lo_x || kx > hi_x || ky < lo_y || ky > hi_y {
            return None;
        }
        let ix = kx.rem_euclid(mw as i64) as usize;
        let iy = ky.rem_euclid(nh as i64) as usize;
        Some(spectrum_w0.at(ix, iy) * half_shift(kx as f64, mw) * half_shift(ky as f64, nh))
    };

    let mut out = vec![Complex64::new(0.0, 0.0); mw * nh];
    for ky in 0..nh {
        let fy = signed_bin(ky, nh);
        let sy = fy * ratio;
        for kx in 0..mw {
            let fx = signed_bin(kx, mw);
            let sx = fx * ratio;
            let x0 = sx.floor();
            let y0 = sy.floor();
            let ax = sx - x0;
            let ay = sy - y0;
            let (x0, y0) = (x0 as i64, y0 as i64);
            let mut acc = Complex64::new(0.0, 0.0);
            let mut inside = true;
            for (dx, dy, wt) in [
                (0, 0, (1.0 - ax) * (1.0 - ay)),
                (1, 0, ax * (1.0 - ay)),
                (0, 1, (1.0 - ax) * ay),
                (1, 1, ax * ay),
            ] {
                if wt == 0.0 {
                    continue;
                }
                match centered(x0 + dx, y0 + dy) {
                    Some(v) => acc += v * wt,
                    None => {
                        inside = false;
                        break;
                    }
                }
            }
            if inside {
                out[ky * mw + kx] = acc * half_shift(fx, mw).conj() * half_shift(fy, nh).conj();
            }
        }
    }
    Spectrum {
        width: mw,
        height: nh,
        data: out,
    }
}

/// Lookup key of a bank entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BankKey {
    pub kind: BasisKind,
    pub order: OrderPair,
    pub w: usize,
}

/// Precomputed kernel spectra indexed by `(kind, n, m, w)`, all of one size.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelBank {
    width: usize,
    height: usize,
    strategy: IntegrationStrategy,
    entries: BTreeMap<BankKey, Spectrum>,
}

impl KernelBank {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn strategy(&self) -> IntegrationStrategy {
        self.strategy
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, kind: BasisKind, order: OrderPair, w: usize) -> Option<&Spectrum> {
        self.entries.get(&BankKey { kind, order, w })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&BankKey, &Spectrum)> {
        self.entries.iter()
    }

    /// Serializes to the `DIRB` container.
    ///
    /// Layout (little-endian): magic `DIRB`, `u32` entry count, then per
    /// entry a header `u8 kind, i32 n, i32 m, u32 w, u32 M0, u32 N0,
    /// u32 strategy` followed by `M0*N0` row-major `(f64 re, f64 im)` pairs.
    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        out.write_all(b"DIRB")?;
        out.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for (key, spec) in &self.entries {
            out.write_all(&[key.kind.code()])?;
            out.write_all(&key.order.n.to_le_bytes())?;
            out.write_all(&key.order.m.to_le_bytes())?;
            out.write_all(&(key.w as u32).to_le_bytes())?;
            out.write_all(&(self.width as u32).to_le_bytes())?;
            out.write_all(&(self.height as u32).to_le_bytes())?;
            out.write_all(&self.strategy.code().to_le_bytes())?;
            let mut buf = Vec::with_capacity(spec.data.len() * 16);
            for c in &spec.data {
                buf.extend_from_slice(&c.re.to_le_bytes());
                buf.extend_from_slice(&c.im.to_le_bytes());
            }
            out.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from(mut input: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut input, &mut magic)?;
        if &magic != b"DIRB" {
            return Err(Error::UnsupportedFormat("missing DIRB magic".into()));
        }
        let count = read_u32(&mut input)? as usize;
        let mut entries = BTreeMap::new();
        let mut dims: Option<(usize, usize, IntegrationStrategy)> = None;
        for _ in 0..count {
            let mut code = [0u8; 1];
            read_exact(&mut input, &mut code)?;
            let kind = BasisKind::from_code(code[0])
                .ok_or_else(|| Error::CorruptHeader(format!("unknown basis code {}", code[0])))?;
            let n = read_u32(&mut input)? as i32;
            let m = read_u32(&mut input)? as i32;
            let w = read_u32(&mut input)? as usize;
            let m0 = read_u32(&mut input)? as usize;
            let n0 = read_u32(&mut input)? as usize;
            let strategy = IntegrationStrategy::from_code(read_u32(&mut input)?);
            match dims {
                None => dims = Some((m0, n0, strategy)),
                Some(d) if d != (m0, n0, strategy) => {
                    return Err(Error::CorruptHeader("bank entries disagree on size or strategy".into()))
                }
                _ => {}
            }
            if m0.checked_mul(n0).is_none_or(|s| s > (1 << 28)) {
                return Err(Error::CorruptHeader(format!("implausible spectrum size {m0}x{n0}")));
            }
            let mut raw = vec![0u8; m0 * n0 * 16];
            read_exact(&mut input, &mut raw)?;
            let data = raw
                .chunks_exact(16)
                .map(|c| {
                    Complex64::new(
                        f64::from_le_bytes(c[..8].try_into().unwrap()),
                        f64::from_le_bytes(c[8..].try_into().unwrap()),
                    )
                })
                .collect();
            entries.insert(
                BankKey {
                    kind,
                    order: OrderPair::new(n, m),
                    w,
                },
                Spectrum {
                    width: m0,
                    height: n0,
                    data,
                },
            );
        }
        let (width, height, strategy) = dims.unwrap_or((0, 0, IntegrationStrategy::Zoa));
        Ok(Self {
            width,
            height,
            strategy,
            entries,
        })
    }
}

pub(crate) fn read_exact(input: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    input.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::CorruptHeader("unexpected end of data".into())
        } else {
            Error::Io(e)
        }
    })
}

pub(crate) fn read_u32(input: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(input, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Builds one spectrum per `(order, scale)`.
///
/// With `use_rescale`, only the smallest scale of each order is transformed
/// directly; the others come from [`spectrum_rescale`]. Entries are computed
/// in parallel; the result does not depend on scheduling.
pub fn bank_build(
    kind: BasisKind,
    orders: &OrderSet,
    scales: &[usize],
    m0: usize,
    n0: usize,
    strategy: IntegrationStrategy,
    use_rescale: bool,
) -> Result<KernelBank> {
    let Some(&w_max) = scales.iter().max() else {
        return Err(Error::SizeTooSmall("scale list is empty".into()));
    };
    if 2 * w_max > m0.min(n0) {
        return Err(Error::SizeTooSmall(format!(
            "scale {w_max} needs a spectrum of at least {0}x{0}, got {m0}x{n0}",
            2 * w_max
        )));
    }
    let mut sorted: Vec<usize> = scales.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let w_min = sorted[0];
    let plan = Fft2d::new(m0, n0);

    let per_order: Vec<Vec<(BankKey, Spectrum)>> = orders
        .pairs()
        .par_iter()
        .map(|&order| -> Result<Vec<(BankKey, Spectrum)>> {
            let mut out = Vec::with_capacity(sorted.len());
            let base = if use_rescale {
                Some(kernel_spectrum_with(&kernel(kind, order, w_min, strategy)?, &plan)?)
            } else {
                None
            };
            for &w in &sorted {
                let spec = match &base {
                    Some(b) => spectrum_rescale(b, w_min, w),
                    None => kernel_spectrum_with(&kernel(kind, order, w, strategy)?, &plan)?,
                };
                out.push((BankKey { kind, order, w }, spec));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    Ok(KernelBank {
        width: m0,
        height: n0,
        strategy,
        entries: per_order.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{order_set, Norm};
    use std::f64::consts::PI;

    fn pct(n: i32, m: i32) -> OrderPair {
        OrderPair::new(n, m)
    }

    #[test]
    fn zoa_unity_sums() {
        let k01 = kernel_zoa(BasisKind::Pct, pct(0, 1), 8).unwrap();
        assert!(k01.sum().norm() <= 0.05);
        // 208 pixel centers fall inside the radius-8 disk; each contributes 1/(64 sqrt(pi))
        let k00 = kernel_zoa(BasisKind::Pct, pct(0, 0), 8).unwrap();
        let inside = (0..16)
            .flat_map(|j| (0..16).map(move |i| (i as f64 - 7.5, j as f64 - 7.5)))
            .filter(|(x, y)| x * x + y * y <= 64.0)
            .count();
        assert_eq!(inside, 208);
        let want = inside as f64 / (64.0 * PI.sqrt());
        assert!((k00.sum() - Complex64::new(want, 0.0)).norm() < 1e-12);
        assert!((k00.sum().re - PI.sqrt()).abs() < 0.07);
        // direct pixel-center sum of sqrt(2/pi) cos(2 pi r^2)
        let k20 = kernel_zoa(BasisKind::Pct, pct(2, 0), 8).unwrap();
        let want: f64 = (0..16)
            .flat_map(|j| (0..16).map(move |i| ((i as f64 - 7.5).powi(2) + (j as f64 - 7.5).powi(2)) / 64.0))
            .filter(|&r2| r2 <= 1.0)
            .map(|r2| (2.0 / PI).sqrt() * (2.0 * PI * r2).cos() / 64.0)
            .sum();
        assert!((k20.sum() - Complex64::new(want, 0.0)).norm() < 1e-12);
        assert!(k20.sum().norm() < 0.1);
        let k20_up = kernel_upsampled(BasisKind::Pct, pct(2, 0), 8, 8).unwrap();
        assert!(k20_up.sum().norm() < 0.01);
    }

    #[test]
    fn upsampled_unity_sums() {
        let k00 = kernel_upsampled(BasisKind::Pct, pct(0, 0), 8, 8).unwrap();
        assert!((k00.sum() - Complex64::new(PI.sqrt(), 0.0)).norm() <= 5e-3);
        let up = kernel_upsampled(BasisKind::Pct, pct(0, 1), 8, 8).unwrap().sum().norm();
        let zoa = kernel_zoa(BasisKind::Pct, pct(0, 1), 8).unwrap().sum().norm();
        // 4-fold symmetry of the grid about the disk center cancels m = 1 exactly
        assert!(up <= zoa + 1e-15);
        let up4 = kernel_upsampled(BasisKind::Pct, pct(3, 4), 8, 8).unwrap().sum().norm();
        let zoa4 = kernel_zoa(BasisKind::Pct, pct(3, 4), 8).unwrap().sum().norm();
        assert!(up4 < zoa4);
    }

    #[test]
    fn single_subsample_degenerates_to_zoa() {
        for kind in BasisKind::ALL {
            let order = if kind == BasisKind::Pst { pct(2, 1) } else { pct(2, 2) };
            let a = kernel_upsampled(kind, order, 8, 1).unwrap();
            let b = kernel_zoa(kind, order, 8).unwrap();
            assert_eq!(a.values(), b.values());
        }
    }

    #[test]
    fn support_is_inside_disk() {
        let w = 6usize;
        let k = kernel_upsampled(BasisKind::Pct, pct(1, 1), w, 4).unwrap();
        // distance from the disk center to the nearest point of pixel i along one axis
        let gap = |i: usize| -> f64 {
            let (lo, hi) = (i as f64 - w as f64, i as f64 + 1.0 - w as f64);
            if hi <= 0.0 { -hi } else if lo >= 0.0 { lo } else { 0.0 }
        };
        for j in 0..2 * w {
            for i in 0..2 * w {
                if gap(i).powi(2) + gap(j).powi(2) >= (w * w) as f64 {
                    assert_eq!(k.at(i, j), Complex64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn spectrum_examples() {
        let k = kernel_zoa(BasisKind::Pct, pct(0, 0), 8).unwrap();
        let zero = Kernel {
            grid: vec![Complex64::new(0.0, 0.0); 256],
            ..k.clone()
        };
        let s0 = kernel_spectrum(&zero, 32, 32).unwrap();
        assert!(s0.bins().iter().all(|c| c.norm() == 0.0));

        let s = kernel_spectrum(&k, 32, 32).unwrap();
        assert!((s.dc() - k.sum()).norm() < 1e-12);

        let plan = Fft2d::new(32, 32);
        let mut back = s.bins().to_vec();
        plan.inverse(&mut back);
        let arranged = arrange_kernel(&k, 32, 32).unwrap();
        for (a, b) in back.iter().zip(&arranged) {
            assert!((a - b).norm() < 1e-12);
        }

        assert!(matches!(kernel_spectrum(&k, 15, 32), Err(Error::SizeTooSmall(_))));
    }

    #[test]
    fn identity_rescale() {
        let k = kernel_upsampled(BasisKind::Pct, pct(1, 1), 16, 4).unwrap();
        let s = kernel_spectrum(&k, 64, 64).unwrap();
        let r = spectrum_rescale(&s, 16, 16);
        assert!(r.relative_l2(&s) < 1e-12);
    }

    #[test]
    fn integer_ratio_rescale_reads_exact_bins() {
        let m = 64usize;
        let s8 = kernel_spectrum(&kernel_zoa(BasisKind::Pct, pct(1, 1), 8).unwrap(), m, m).unwrap();
        let r = spectrum_rescale(&s8, 8, 16);
        for ky in 0..m {
            for kx in 0..m {
                let (fx, fy) = (signed_bin(kx, m), signed_bin(ky, m));
                let (sx, sy) = (2.0 * fx, 2.0 * fy);
                let inside = |v: f64| v >= -(m as f64) / 2.0 && v <= m as f64 / 2.0 - 1.0;
                let want = if inside(sx) && inside(sy) {
                    let src = s8.at((sx as i64).rem_euclid(m as i64) as usize, (sy as i64).rem_euclid(m as i64) as usize);
                    src * Complex64::from_polar(1.0, PI * (sx - fx + sy - fy) / m as f64)
                } else {
                    Complex64::new(0.0, 0.0)
                };
                assert!((r.at(kx, ky) - want).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn rescaled_spectrum_tracks_direct_spectrum() {
        // Doubling the scale needs source frequencies beyond Nyquist, which
        // are zeroed; the disk edge puts 10-15% of the energy there.
        for (strategy, bound) in [(IntegrationStrategy::Zoa, 0.25), (IntegrationStrategy::Upsample(8), 0.12)] {
            for (m0, n0) in [(128, 128), (150, 96)] {
                let s16 = kernel_spectrum(&kernel(BasisKind::Pct, pct(1, 1), 16, strategy).unwrap(), m0, n0).unwrap();
                let direct = kernel_spectrum(&kernel(BasisKind::Pct, pct(1, 1), 32, strategy).unwrap(), m0, n0).unwrap();
                let err = spectrum_rescale(&s16, 16, 32).relative_l2(&direct);
                assert!(err <= bound, "{strategy} {m0}x{n0}: {err}");
            }
        }
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!("zoa".parse::<IntegrationStrategy>().unwrap(), IntegrationStrategy::Zoa);
        assert_eq!("up8".parse::<IntegrationStrategy>().unwrap(), IntegrationStrategy::Upsample(8));
        assert!("8".parse::<IntegrationStrategy>().is_err());
        assert!("upx".parse::<IntegrationStrategy>().is_err());
    }

    #[test]
    fn bank_cardinality_and_determinism() {
        let orders = order_set(BasisKind::Pct, Norm::L1, 3);
        let scales: Vec<usize> = (0..10).map(|i| 4 + i).collect();
        let a = bank_build(BasisKind::Pct, &orders, &scales, 32, 32, IntegrationStrategy::Zoa, false).unwrap();
        assert_eq!(a.len(), 100);
        let b = bank_build(BasisKind::Pct, &orders, &scales, 32, 32, IntegrationStrategy::Zoa, false).unwrap();
        for ((ka, sa), (kb, sb)) in a.iter().zip(b.iter()) {
            assert_eq!(ka, kb);
            let ba: Vec<u64> = sa.bins().iter().flat_map(|c| [c.re.to_bits(), c.im.to_bits()]).collect();
            let bb: Vec<u64> = sb.bins().iter().flat_map(|c| [c.re.to_bits(), c.im.to_bits()]).collect();
            assert_eq!(ba, bb);
        }
        assert!(bank_build(BasisKind::Pct, &orders, &[20], 32, 32, IntegrationStrategy::Zoa, false).is_err());
        assert!(bank_build(BasisKind::Pct, &orders, &[], 32, 32, IntegrationStrategy::Zoa, false).is_err());
    }

    #[test]
    fn bank_container_round_trip() {
        let orders = order_set(BasisKind::Zm, Norm::LInf, 2);
        let bank = bank_build(BasisKind::Zm, &orders, &[3, 5], 16, 12, IntegrationStrategy::Upsample(2), false).unwrap();
        let mut bytes = Vec::new();
        bank.write_to(&mut bytes).unwrap();
        let header = 4 + 4;
        let per_entry = 1 + 4 * 6 + 16 * 12 * 16;
        assert_eq!(bytes.len(), header + bank.len() * per_entry);
        let back = KernelBank::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back, bank);
        assert!(matches!(
            KernelBank::read_from(&bytes[..bytes.len() - 3]),
            Err(Error::CorruptHeader(_))
        ));
        assert!(matches!(KernelBank::read_from(&b"XXXX"[..]), Err(Error::UnsupportedFormat(_))));
    }
}
