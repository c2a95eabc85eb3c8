//! Row-major 2-D grids and the grayscale image type.
//!
//! Pixel `(x, y)` covers the continuous square `[x, x+1) x [y, y+1)`, so its
//! center sits at `(x + 0.5, y + 0.5)`. Integer continuous coordinates are
//! pixel corners; dense fields are indexed by those corners.

use crate::error::{Error, Result};

/// A dense row-major grid of values.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {width}x{height} grid",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        &mut self.data[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, y: usize) -> &[T] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Grayscale image with finite real samples, nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pixels: Grid<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ImageTooSmall(format!("{width}x{height}")));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Degenerate(format!("non-finite sample at index {bad}")));
        }
        Ok(Self {
            pixels: Grid::from_vec(width, height, data)?,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            pixels: Grid::filled(width, height, value),
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        Self {
            pixels: Grid::from_fn(width, height, |x, y| {
                let v = f(x, y);
                debug_assert!(v.is_finite());
                v
            }),
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.pixels.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.pixels.height()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        *self.pixels.get(x, y)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        *self.pixels.get_mut(x, y) = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        self.pixels.as_slice()
    }

    pub fn row(&self, y: usize) -> &[f64] {
        self.pixels.row(y)
    }

    pub fn grid(&self) -> &Grid<f64> {
        &self.pixels
    }

    pub fn map(&self, f: impl FnMut(&f64) -> f64) -> GrayImage {
        GrayImage {
            pixels: self.pixels.map(f),
        }
    }

    pub fn clamped(&self) -> GrayImage {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    /// Bilinear sample at a continuous position; outside the image reads `fill`.
    pub fn sample_bilinear(&self, x: f64, y: f64, fill: f64) -> f64 {
        // convert to pixel-center coordinates
        let fx = x - 0.5;
        let fy = y - 0.5;
        let x0 = fx.floor();
        let y0 = fy.floor();
        let ax = fx - x0;
        let ay = fy - y0;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let at = |xi: i64, yi: i64| -> f64 {
            if xi < 0 || yi < 0 || xi >= self.width() as i64 || yi >= self.height() as i64 {
                fill
            } else {
                self.get(xi as usize, yi as usize)
            }
        };
        let top = at(x0, y0) * (1.0 - ax) + at(x0 + 1, y0) * ax;
        let bottom = at(x0, y0 + 1) * (1.0 - ax) + at(x0 + 1, y0 + 1) * ax;
        top * (1.0 - ay) + bottom * ay
    }

    /// Integer translation: `out(x, y) = in(x - dx, y - dy)`, vacated pixels read `fill`.
    pub fn shifted(&self, dx: i64, dy: i64, fill: f64) -> GrayImage {
        let (w, h) = (self.width() as i64, self.height() as i64);
        GrayImage::from_fn(self.width(), self.height(), |x, y| {
            let sx = x as i64 - dx;
            let sy = y as i64 - dy;
            if sx < 0 || sy < 0 || sx >= w || sy >= h {
                fill
            } else {
                self.get(sx as usize, sy as usize)
            }
        })
    }

    /// Rotation by 90 degrees about the image center such that the content
    /// found at polar angle `theta + pi/2` moves to angle `theta`.
    pub fn rotated90(&self) -> GrayImage {
        let w = self.width();
        GrayImage::from_fn(self.height(), w, |x, y| self.get(w - 1 - y, x))
    }

    /// Mirror across the horizontal axis (`y -> -y`).
    pub fn flipped_vertical(&self) -> GrayImage {
        let h = self.height();
        GrayImage::from_fn(self.width(), h, |x, y| self.get(x, h - 1 - y))
    }

    /// Mirror across the vertical axis (`x -> -x`).
    pub fn flipped_horizontal(&self) -> GrayImage {
        let w = self.width();
        GrayImage::from_fn(w, self.height(), |x, y| self.get(w - 1 - x, y))
    }

    /// Bilinear rotation about `center` with the same orientation convention
    /// as [`GrayImage::rotated90`]: `out(c + d) = in(c + R(phi) d)`.
    pub fn rotated(&self, phi: f64, center: (f64, f64), fill: f64) -> GrayImage {
        let (s, c) = phi.sin_cos();
        GrayImage::from_fn(self.width(), self.height(), |x, y| {
            let dx = x as f64 + 0.5 - center.0;
            let dy = y as f64 + 0.5 - center.1;
            let sx = center.0 + c * dx - s * dy;
            let sy = center.1 + s * dx + c * dy;
            self.sample_bilinear(sx, sy, fill)
        })
    }

    /// Bilinear resize to the given dimensions (pixel-area aligned).
    pub fn resized(&self, width: usize, height: usize) -> GrayImage {
        let sx = self.width() as f64 / width as f64;
        let sy = self.height() as f64 / height as f64;
        GrayImage::from_fn(width, height, |x, y| {
            let px = ((x as f64 + 0.5) * sx).clamp(0.5, self.width() as f64 - 0.5);
            let py = ((y as f64 + 0.5) * sy).clamp(0.5, self.height() as f64 - 0.5);
            self.sample_bilinear(px, py, 0.0)
        })
    }

    /// Downscale by an integer factor, averaging each `factor x factor` block.
    pub fn block_averaged(&self, factor: usize) -> Result<GrayImage> {
        if factor == 0 || self.width() < factor || self.height() < factor {
            return Err(Error::ImageTooSmall(format!(
                "{}x{} cannot be block-averaged by {factor}",
                self.width(),
                self.height()
            )));
        }
        let inv = 1.0 / (factor * factor) as f64;
        Ok(GrayImage::from_fn(
            self.width() / factor,
            self.height() / factor,
            |x, y| {
                let mut acc = 0.0;
                for j in 0..factor {
                    for i in 0..factor {
                        acc += self.get(x * factor + i, y * factor + j);
                    }
                }
                acc * inv
            },
        ))
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<GrayImage> {
        if x0 + width > self.width() || y0 + height > self.height() || width == 0 || height == 0 {
            return Err(Error::ShapeMismatch(format!(
                "crop {width}x{height}+{x0}+{y0} outside {}x{}",
                self.width(),
                self.height()
            )));
        }
        Ok(GrayImage::from_fn(width, height, |x, y| {
            self.get(x0 + x, y0 + y)
        }))
    }

    /// Copies `patch` with its top-left corner at `(x0, y0)`, clipping at the borders.
    pub fn paste(&mut self, patch: &GrayImage, x0: i64, y0: i64) {
        for y in 0..patch.height() {
            let ty = y0 + y as i64;
            if ty < 0 || ty >= self.height() as i64 {
                continue;
            }
            for x in 0..patch.width() {
                let tx = x0 + x as i64;
                if tx < 0 || tx >= self.width() as i64 {
                    continue;
                }
                self.set(tx as usize, ty as usize, patch.get(x, y));
            }
        }
    }

    pub fn mean(&self) -> f64 {
        self.as_slice().iter().sum::<f64>() / self.as_slice().len() as f64
    }
}
