//! Page cleanup: grayscale, contrast stretch, Otsu binarization, binary
//! median filtering and dilation.
//!
//! Ink is dark, so a pixel is foreground when its intensity is at or below
//! the chosen threshold. Both filters replicate edge pixels at the borders.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingestion::{encode_png, PageImage};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PreprocessError {
    #[error("{label}: unsupported channel count {channels}")]
    Channels { label: String, channels: u8 },
    #[error("image buffer has {actual} pixels, expected {expected}")]
    Extent { expected: usize, actual: usize },
    #[error("invalid preprocessing config: {0}")]
    Config(String),
}

/// 8-bit grayscale raster; 0 is black ink, 255 white paper.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, PreprocessError> {
        let expected = width as usize * height as usize;
        if expected == 0 || pixels.len() != expected {
            return Err(PreprocessError::Extent {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    /// Single-row image, handy for histogram-level tests.
    pub fn from_row(pixels: Vec<u8>) -> Result<Self, PreprocessError> {
        let width = pixels.len() as u32;
        Self::new(width, 1, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn histogram(&self) -> [u64; 256] {
        let mut hist = [0u64; 256];
        for &p in &self.pixels {
            hist[p as usize] += 1;
        }
        hist
    }
}

/// Ink mask; `true` marks foreground.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryImage {
    width: u32,
    height: u32,
    mask: Vec<bool>,
}

impl BinaryImage {
    pub fn new(width: u32, height: u32, mask: Vec<bool>) -> Result<Self, PreprocessError> {
        let expected = width as usize * height as usize;
        if expected == 0 || mask.len() != expected {
            return Err(PreprocessError::Extent {
                expected,
                actual: mask.len(),
            });
        }
        Ok(BinaryImage {
            width,
            height,
            mask,
        })
    }

    /// All-paper mask.
    pub fn blank(width: u32, height: u32) -> Result<Self, PreprocessError> {
        Self::new(width, height, vec![false; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.mask[y as usize * self.width as usize + x as usize]
    }

    pub fn ink_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn ink_fraction(&self) -> f64 {
        self.ink_count() as f64 / self.mask.len() as f64
    }

    /// Ink as black (0), paper as white (255).
    pub fn to_png(&self) -> Result<Vec<u8>, image::ImageError> {
        let pixels: Vec<u8> = self.mask.iter().map(|&m| if m { 0 } else { 255 }).collect();
        encode_png(&pixels, self.width, self.height, image::ExtendedColorType::L8)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub contrast_stretch: bool,
    pub median_kernel: u32,
    pub dilation_kernel: u32,
    pub dilation_iterations: u32,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            contrast_stretch: true,
            median_kernel: 3,
            dilation_kernel: 3,
            dilation_iterations: 1,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        for (name, k) in [
            ("median_kernel", self.median_kernel),
            ("dilation_kernel", self.dilation_kernel),
        ] {
            if k == 0 || k % 2 == 0 {
                return Err(PreprocessError::Config(format!(
                    "{name} must be an odd integer >= 1, got {k}"
                )));
            }
        }
        Ok(())
    }
}

/// Converts RGB pages with integer luma `round(0.299 R + 0.587 G + 0.114 B)`;
/// gray pages copy through.
pub fn to_grayscale(img: &PageImage) -> Result<GrayImage, PreprocessError> {
    let pixels = match img.channels {
        1 => img.pixels.clone(),
        3 => img
            .pixels
            .chunks_exact(3)
            .map(|px| luma(px[0], px[1], px[2]))
            .collect(),
        channels => {
            return Err(PreprocessError::Channels {
                label: img.label(),
                channels,
            })
        }
    };
    GrayImage::new(img.width_px, img.height_px, pixels)
}

/// Round-half-up in exact integer arithmetic.
fn luma(r: u8, g: u8, b: u8) -> u8 {
    let y = 299 * r as u32 + 587 * g as u32 + 114 * b as u32;
    ((y + 500) / 1000) as u8
}

/// Linear min-max stretch to the full 0..=255 range. Constant images are
/// returned unchanged.
pub fn contrast_stretch(img: &GrayImage) -> GrayImage {
    let lo = *img.pixels.iter().min().unwrap_or(&0) as u32;
    let hi = *img.pixels.iter().max().unwrap_or(&255) as u32;
    if hi == lo || (lo == 0 && hi == 255) {
        return img.clone();
    }
    let span = hi - lo;
    let pixels = img
        .pixels
        .iter()
        .map(|&p| (((p as u32 - lo) * 255 * 2 + span) / (2 * span)) as u8)
        .collect();
    GrayImage {
        width: img.width,
        height: img.height,
        pixels,
    }
}

/// Otsu's threshold: the `t` maximizing between-class variance of
/// `{p <= t}` vs `{p > t}`, smallest `t` on ties.
///
/// Scores are compared as exact rationals, so ties are real ties.
pub fn otsu_threshold(img: &GrayImage) -> u8 {
    let hist = img.histogram();
    let total_count: u64 = hist.iter().sum();
    let total_sum: u64 = hist.iter().enumerate().map(|(v, &c)| v as u64 * c).sum();

    // Between-class variance is proportional to d^2 / (w0 * w1) with
    // d = s0 * w1 - s1 * w0. Empty classes score zero.
    let mut best_t = 0u8;
    let mut best: Option<(u128, u64)> = None;
    let (mut w0, mut s0) = (0u64, 0u64);
    for (t, &count) in hist.iter().enumerate() {
        w0 += count;
        s0 += t as u64 * count;
        let w1 = total_count - w0;
        let s1 = total_sum - s0;
        let score = if w0 == 0 || w1 == 0 {
            (0u128, 1u64)
        } else {
            let d = (s0 as i128 * w1 as i128 - s1 as i128 * w0 as i128).unsigned_abs();
            (d * d, w0 * w1)
        };
        let better = match best {
            None => true,
            Some(b) => ratio_gt(score, b),
        };
        if better {
            best = Some(score);
            best_t = t as u8;
        }
    }
    best_t
}

/// `a.0 / a.1 > b.0 / b.1` without overflow.
fn ratio_gt(a: (u128, u64), b: (u128, u64)) -> bool {
    wide_mul(a.0, b.1) > wide_mul(b.0, a.1)
}

/// 192-bit product as (high, low64), compared lexicographically.
fn wide_mul(a: u128, b: u64) -> (u128, u64) {
    let lo = (a as u64 as u128) * b as u128;
    let hi = (a >> 64) * b as u128 + (lo >> 64);
    (hi, lo as u64)
}

/// Ink mask with the Otsu threshold: `mask[i] = pixels[i] <= t`.
pub fn binarize(img: &GrayImage) -> BinaryImage {
    let t = otsu_threshold(img);
    BinaryImage {
        width: img.width,
        height: img.height,
        mask: img.pixels.iter().map(|&p| p <= t).collect(),
    }
}

/// Summed-area table over the mask padded by `r` replicated pixels on each side.
struct WindowCounts {
    stride: usize,
    sums: Vec<u32>,
    r: usize,
}

impl WindowCounts {
    fn new(img: &BinaryImage, r: usize) -> Self {
        let (w, h) = (img.width as usize, img.height as usize);
        let (pw, ph) = (w + 2 * r, h + 2 * r);
        let stride = pw + 1;
        let mut sums = vec![0u32; stride * (ph + 1)];
        for py in 0..ph {
            let y = py.saturating_sub(r).min(h - 1);
            let mut row = 0u32;
            for px in 0..pw {
                let x = px.saturating_sub(r).min(w - 1);
                row += img.mask[y * w + x] as u32;
                sums[(py + 1) * stride + px + 1] = sums[py * stride + px + 1] + row;
            }
        }
        WindowCounts { stride, sums, r }
    }

    /// Ink count in the (2r+1)^2 window centered on (x, y).
    fn count(&self, x: usize, y: usize) -> u32 {
        let k = 2 * self.r + 1;
        let (x0, y0, x1, y1) = (x, y, x + k, y + k);
        let s = &self.sums;
        let at = |xx: usize, yy: usize| s[yy * self.stride + xx];
        at(x1, y1) + at(x0, y0) - at(x0, y1) - at(x1, y0)
    }
}

fn map_windows(img: &BinaryImage, kernel: u32, keep: impl Fn(u32) -> bool) -> BinaryImage {
    let r = (kernel / 2) as usize;
    let counts = WindowCounts::new(img, r);
    let (w, h) = (img.width as usize, img.height as usize);
    let mut mask = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            mask.push(keep(counts.count(x, y)));
        }
    }
    BinaryImage {
        width: img.width,
        height: img.height,
        mask,
    }
}

/// Binary median (majority) over a `kernel` x `kernel` window.
pub fn median_filter(img: &BinaryImage, kernel: u32) -> BinaryImage {
    if kernel <= 1 {
        return img.clone();
    }
    let area = kernel * kernel;
    map_windows(img, kernel, |c| 2 * c > area)
}

/// `iterations` rounds of dilation with a square all-ones element.
pub fn dilate(img: &BinaryImage, kernel: u32, iterations: u32) -> BinaryImage {
    let mut out = img.clone();
    if kernel <= 1 {
        return out;
    }
    for _ in 0..iterations {
        out = map_windows(&out, kernel, |c| c > 0);
    }
    out
}

/// Median filter followed by dilation, as configured.
pub fn enhance(img: &BinaryImage, cfg: &PreprocessConfig) -> BinaryImage {
    let denoised = median_filter(img, cfg.median_kernel);
    dilate(&denoised, cfg.dilation_kernel, cfg.dilation_iterations)
}

/// Full chain for one page: grayscale, optional stretch, threshold, enhance.
pub fn preprocess_page(
    page: &PageImage,
    cfg: &PreprocessConfig,
) -> Result<BinaryImage, PreprocessError> {
    cfg.validate()?;
    let mut gray = to_grayscale(page)?;
    if cfg.contrast_stretch {
        gray = contrast_stretch(&gray);
    }
    Ok(enhance(&binarize(&gray), cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rgb_page(px: [u8; 3]) -> PageImage {
        PageImage::new("s", 1, 300, 1, 1, 3, px.to_vec()).unwrap()
    }

    #[test]
    fn luma_fixed_points() {
        let gray = |px| to_grayscale(&rgb_page(px)).unwrap().pixels()[0];
        assert_eq!(gray([255, 255, 255]), 255);
        assert_eq!(gray([0, 0, 0]), 0);
        // 0.299 * 255 = 76.245
        assert_eq!(gray([255, 0, 0]), 76);
        // 0.587 * 255 = 149.685
        assert_eq!(gray([0, 255, 0]), 150);
    }

    #[test]
    fn grayscale_passthrough_and_bad_channels() {
        let page = PageImage::new("s", 3, 300, 2, 1, 1, vec![7, 200]).unwrap();
        let g = to_grayscale(&page).unwrap();
        assert_eq!(g.pixels(), &[7, 200]);
        let again = PageImage::new("s", 3, 300, 2, 1, 1, g.pixels().to_vec()).unwrap();
        assert_eq!(to_grayscale(&again).unwrap(), g);

        let rgba = PageImage::new("s", 3, 300, 1, 1, 4, vec![0; 4]).unwrap();
        assert_eq!(
            to_grayscale(&rgba),
            Err(PreprocessError::Channels {
                label: "s_page_3".into(),
                channels: 4
            })
        );
    }

    #[test]
    fn otsu_examples() {
        let t = |px: &[u8]| otsu_threshold(&GrayImage::from_row(px.to_vec()).unwrap());
        assert_eq!(t(&[0, 0, 0, 255, 255, 255]), 0);
        assert_eq!(t(&[128; 8]), 0);
        assert_eq!(t(&[10, 10, 200, 200, 200]), 10);
    }

    #[test]
    fn binarize_examples() {
        let b = |px: &[u8]| binarize(&GrayImage::from_row(px.to_vec()).unwrap());
        assert_eq!(b(&[0, 0, 255, 255]).mask(), &[true, true, false, false]);
        assert_eq!(b(&[255; 9]).ink_count(), 0);
        assert_eq!(b(&[0; 9]).ink_count(), 9);
        assert_eq!(b(&[128; 4]).ink_count(), 0);
    }

    #[test]
    fn stretch_keeps_partition() {
        let g = GrayImage::from_row(vec![100, 110, 120, 140, 150]).unwrap();
        let s = contrast_stretch(&g);
        assert_eq!(s.pixels().first(), Some(&0));
        assert_eq!(s.pixels().last(), Some(&255));
        assert_eq!(binarize(&g).mask(), binarize(&s).mask());
    }

    #[test]
    fn dilate_point() {
        let mut mask = vec![false; 9];
        mask[4] = true;
        let img = BinaryImage::new(3, 3, mask).unwrap();
        let cfg = PreprocessConfig {
            contrast_stretch: false,
            median_kernel: 1,
            dilation_kernel: 3,
            dilation_iterations: 1,
        };
        assert_eq!(enhance(&img, &cfg).ink_count(), 9);
    }

    #[test]
    fn median_removes_isolated_pixel() {
        let mut mask = vec![false; 81];
        mask[4 * 9 + 4] = true;
        let img = BinaryImage::new(9, 9, mask).unwrap();
        assert_eq!(median_filter(&img, 3).ink_count(), 0);
    }

    #[test]
    fn median_uses_clamped_borders() {
        // Filled 2x2 corner block. The clamped window at (0,0) is all ink;
        // at (1,1) it holds only 4 of 9.
        let mut mask = vec![false; 25];
        for (x, y) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            mask[y * 5 + x] = true;
        }
        let img = BinaryImage::new(5, 5, mask).unwrap();
        let out = median_filter(&img, 3);
        assert!(out.get(0, 0));
        assert!(out.get(1, 0));
        assert!(!out.get(1, 1));
        assert!(!out.get(2, 2));
    }

    #[test]
    fn config_validation() {
        assert!(PreprocessConfig::default().validate().is_ok());
        let even = PreprocessConfig {
            median_kernel: 4,
            ..Default::default()
        };
        assert!(even.validate().is_err());
        let zero = PreprocessConfig {
            dilation_kernel: 0,
            ..Default::default()
        };
        assert!(zero.validate().is_err());
    }

    fn naive_window(img: &BinaryImage, k: u32, x: u32, y: u32) -> u32 {
        let r = (k / 2) as i64;
        let (w, h) = (img.width() as i64, img.height() as i64);
        let mut c = 0;
        for dy in -r..=r {
            for dx in -r..=r {
                let xx = (x as i64 + dx).clamp(0, w - 1) as u32;
                let yy = (y as i64 + dy).clamp(0, h - 1) as u32;
                c += img.get(xx, yy) as u32;
            }
        }
        c
    }

    fn mask_strategy() -> impl Strategy<Value = BinaryImage> {
        (1u32..9, 1u32..9).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<bool>(), (w * h) as usize)
                .prop_map(move |m| BinaryImage::new(w, h, m).unwrap())
        })
    }

    proptest! {
        #[test]
        fn filters_match_naive_windows(img in mask_strategy(), k in prop::sample::select(vec![3u32, 5])) {
            let med = median_filter(&img, k);
            let dil = dilate(&img, k, 1);
            for y in 0..img.height() {
                for x in 0..img.width() {
                    let c = naive_window(&img, k, x, y);
                    prop_assert_eq!(med.get(x, y), 2 * c > k * k);
                    prop_assert_eq!(dil.get(x, y), c > 0);
                }
            }
        }

        #[test]
        fn dilation_never_removes_ink(img in mask_strategy(), it in 0u32..3) {
            let out = dilate(&img, 3, it);
            prop_assert!(out.ink_count() >= img.ink_count());
            for (a, b) in img.mask().iter().zip(out.mask()) {
                prop_assert!(!a || *b);
            }
        }

        #[test]
        fn identity_configuration(img in mask_strategy()) {
            let cfg = PreprocessConfig { contrast_stretch: true, median_kernel: 1, dilation_kernel: 3, dilation_iterations: 0 };
            prop_assert_eq!(enhance(&img, &cfg), img);
        }
    }
}
