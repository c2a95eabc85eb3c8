//! Seeded synthetic images, corruptions and constructed test scenes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::raster::{GrayImage, Grid};

/// Independent uniform samples in `[0, 1)`.
pub fn random_image(width: usize, height: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GrayImage::from_fn(width, height, |_, _| rng.random::<f64>())
}

/// Separable Gaussian blur with mirrored borders.
pub fn gaussian_blur(image: &GrayImage, sigma: f64) -> GrayImage {
    if sigma <= 0.0 {
        return image.clone();
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-radius..=radius).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = taps.iter().sum();
    let taps: Vec<f64> = taps.iter().map(|t| t / norm).collect();
    let (w, h) = (image.width() as i64, image.height() as i64);
    let mirror = |i: i64, n: i64| -> usize {
        let period = 2 * n;
        let mut j = i.rem_euclid(period);
        if j >= n {
            j = period - 1 - j;
        }
        j as usize
    };
    let horiz = GrayImage::from_fn(image.width(), image.height(), |x, y| {
        taps.iter()
            .enumerate()
            .map(|(t, c)| c * image.get(mirror(x as i64 + t as i64 - radius, w), y))
            .sum()
    });
    GrayImage::from_fn(image.width(), image.height(), |x, y| {
        taps.iter()
            .enumerate()
            .map(|(t, c)| c * horiz.get(x, mirror(y as i64 + t as i64 - radius, h)))
            .sum()
    })
}

/// Blurred noise stretched to span `[0, 1]`: a smooth random texture.
pub fn smooth_texture(width: usize, height: usize, sigma: f64, seed: u64) -> GrayImage {
    let blurred = gaussian_blur(&random_image(width, height, seed), sigma);
    stretch(&blurred)
}

/// Affine map of the sample range onto `[0, 1]`.
pub fn stretch(image: &GrayImage) -> GrayImage {
    let (lo, hi) = image
        .as_slice()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    image.map(|v| (v - lo) / span)
}

/// A texture with structure at several sizes, closer to natural images
/// than a single blur level.
pub fn multiscale_texture(width: usize, height: usize, seed: u64) -> GrayImage {
    let layers = [(1.0, 0.25), (2.5, 0.35), (6.0, 0.4)];
    let mut acc = GrayImage::filled(width, height, 0.0);
    for (i, &(sigma, weight)) in layers.iter().enumerate() {
        let layer = smooth_texture(width, height, sigma, seed.wrapping_mul(31).wrapping_add(i as u64));
        acc = GrayImage::from_fn(width, height, |x, y| acc.get(x, y) + weight * layer.get(x, y));
    }
    stretch(&acc)
}

/// Additive zero-mean Gaussian noise; samples are not clamped.
pub fn add_gaussian_noise(image: &GrayImage, sigma: f64, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma.max(0.0)).expect("finite standard deviation");
    image.map(|&v| v + normal.sample(&mut rng))
}

/// Adds `delta` to every sample and clamps to `[0, 1]`.
pub fn brightness(image: &GrayImage, delta: f64) -> GrayImage {
    image.map(|&v| (v + delta).clamp(0.0, 1.0))
}

/// Encodes as 8-bit JPEG at `quality` (1..=100) and decodes again.
pub fn jpeg_recompress(image: &GrayImage, quality: u8) -> Result<GrayImage> {
    let (w, h) = (image.width() as u32, image.height() as u32);
    let bytes: Vec<u8> = image
        .as_slice()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let gray = image::GrayImage::from_raw(w, h, bytes).expect("buffer matches dimensions");
    let mut encoded = Vec::new();
    let encoder = image::codecs::jpeg::JpegEncoder::new_with_quality(&mut encoded, quality.clamp(1, 100));
    gray.write_with_encoder(encoder)
        .map_err(|e| Error::Degenerate(format!("JPEG encoding failed: {e}")))?;
    let decoded = image::load_from_memory_with_format(&encoded, image::ImageFormat::Jpeg)
        .map_err(|e| Error::CorruptHeader(format!("JPEG: {e}")))?
        .to_luma8();
    GrayImage::new(
        image.width(),
        image.height(),
        decoded.into_raw().into_iter().map(|b| b as f64 / 255.0).collect(),
    )
}

const GLYPHS: &[(char, [&str; 7])] = &[
    ('A', [".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"]),
    ('E', ["#####", "#....", "#....", "####.", "#....", "#....", "#####"]),
    ('F', ["#####", "#....", "#....", "####.", "#....", "#....", "#...."]),
    ('G', [".####", "#....", "#....", "#..##", "#...#", "#...#", ".###."]),
    ('H', ["#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"]),
    ('J', ["..###", "...#.", "...#.", "...#.", "...#.", "#..#.", ".##.."]),
    ('K', ["#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"]),
    ('L', ["#....", "#....", "#....", "#....", "#....", "#....", "#####"]),
    ('O', [".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."]),
    ('P', ["####.", "#...#", "#...#", "####.", "#....", "#....", "#...."]),
    ('R', ["####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"]),
    ('T', ["#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."]),
    ('X', ["#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"]),
    ('Y', ["#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#.."]),
];

/// A 5x7 bitmap letter, each dot drawn as `dot x dot` pixels, centered in
/// a `size x size` tile of background 0 and ink 1.
pub fn glyph_tile(letter: char, dot: usize, size: usize) -> Result<GrayImage> {
    let rows = GLYPHS
        .iter()
        .find(|(c, _)| *c == letter.to_ascii_uppercase())
        .map(|(_, r)| r)
        .ok_or_else(|| Error::InvalidConfig {
            field: "letter",
            reason: format!("no glyph for `{letter}`"),
        })?;
    let (gw, gh) = (5 * dot, 7 * dot);
    if gw > size || gh > size {
        return Err(Error::SizeTooSmall(format!("{gw}x{gh} glyph in a {size} tile")));
    }
    let (ox, oy) = ((size - gw) / 2, (size - gh) / 2);
    Ok(GrayImage::from_fn(size, size, |x, y| {
        if x < ox || y < oy || x >= ox + gw || y >= oy + gh {
            return 0.0;
        }
        let (cx, cy) = ((x - ox) / dot, (y - oy) / dot);
        if rows[cy].as_bytes()[cx] == b'#' {
            1.0
        } else {
            0.0
        }
    }))
}

/// Lossless grid transforms applied to scene instances.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridTransform {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    FlipVertical,
    FlipHorizontal,
}

impl GridTransform {
    pub fn apply(self, tile: &GrayImage) -> GrayImage {
        match self {
            GridTransform::Identity => tile.clone(),
            GridTransform::Rot90 => tile.rotated90(),
            GridTransform::Rot180 => tile.rotated90().rotated90(),
            GridTransform::Rot270 => tile.rotated90().rotated90().rotated90(),
            GridTransform::FlipVertical => tile.flipped_vertical(),
            GridTransform::FlipHorizontal => tile.flipped_horizontal(),
        }
    }
}

/// Template, scene and instance centers for a detection experiment.
#[derive(Clone, Debug)]
pub struct LetterScene {
    pub template: GrayImage,
    pub scene: GrayImage,
    /// Tile centers (pixel corners) of the template instances.
    pub instances: Vec<(usize, usize)>,
    /// Tile centers of the distractor letters.
    pub distractors: Vec<(usize, usize)>,
    pub tile: usize,
}

/// Tiles the template letter (under grid rotations and flips) and
/// distractor letters on a `columns`-wide grid, left to right, top to
/// bottom, leaving one empty tile between rows of content.
pub fn letter_scene(
    template_letter: char,
    transforms: &[GridTransform],
    distractor_letters: &[char],
    dot: usize,
    tile: usize,
    columns: usize,
) -> Result<LetterScene> {
    let template = glyph_tile(template_letter, dot, tile)?;
    let mut tiles: Vec<(GrayImage, bool)> = transforms.iter().map(|t| (t.apply(&template), true)).collect();
    for &c in distractor_letters {
        tiles.push((glyph_tile(c, dot, tile)?, false));
    }
    let columns = columns.max(1);
    let rows = tiles.len().div_ceil(columns);
    let mut scene = GrayImage::filled(columns * tile, rows * tile, 0.0);
    let (mut instances, mut distractors) = (Vec::new(), Vec::new());
    for (i, (img, is_instance)) in tiles.iter().enumerate() {
        let (cx, cy) = (i % columns, i / columns);
        scene.paste(img, (cx * tile) as i64, (cy * tile) as i64);
        let center = (cx * tile + tile / 2, cy * tile + tile / 2);
        if *is_instance {
            instances.push(center);
        } else {
            distractors.push(center);
        }
    }
    Ok(LetterScene {
        template,
        scene,
        instances,
        distractors,
        tile,
    })
}

/// How the copied region is transformed before pasting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CopyTransform {
    Rigid,
    Rot90,
    /// Resampled by the given factor (bilinear).
    Scaled(f64),
}

#[derive(Clone, Debug)]
pub struct CopyMoveForgery {
    pub image: GrayImage,
    /// Pixels of both the source region and the pasted copy.
    pub truth: Grid<bool>,
    pub source: (usize, usize, usize),
    pub target: (usize, usize, usize),
}

/// Copies the `size x size` block at `src` onto `dst` after `transform`.
/// The truth mask covers the source block and the pasted block.
pub fn copy_move(
    base: &GrayImage,
    src: (usize, usize),
    dst: (usize, usize),
    size: usize,
    transform: CopyTransform,
) -> Result<CopyMoveForgery> {
    let patch = base.crop(src.0, src.1, size, size)?;
    let pasted = match transform {
        CopyTransform::Rigid => patch,
        CopyTransform::Rot90 => patch.rotated90(),
        CopyTransform::Scaled(f) => {
            let s = ((size as f64) * f).round().max(1.0) as usize;
            patch.resized(s, s)
        }
    };
    let ps = pasted.width();
    if dst.0 + ps > base.width() || dst.1 + ps > base.height() {
        return Err(Error::ShapeMismatch("pasted region leaves the image".into()));
    }
    let mut image = base.clone();
    image.paste(&pasted, dst.0 as i64, dst.1 as i64);
    let in_block = |x: usize, y: usize, o: (usize, usize), s: usize| x >= o.0 && y >= o.1 && x < o.0 + s && y < o.1 + s;
    let truth = Grid::from_fn(base.width(), base.height(), |x, y| in_block(x, y, src, size) || in_block(x, y, dst, ps));
    Ok(CopyMoveForgery {
        image,
        truth,
        source: (src.0, src.1, size),
        target: (dst.0, dst.1, ps),
    })
}
