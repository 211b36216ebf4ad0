//! Float rasters, the LoG sharpness gate, crop/resize and augmentation.

use alloc::vec;
use alloc::vec::Vec;

use crate::rng::{self, Rng};
use crate::{Error, Result};

/// Row-major interleaved raster with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Shape(alloc::format!("channels must be 1 or 3, got {channels}")));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::Shape(alloc::format!(
                "{} pixels for {width}x{height}x{channels}",
                pixels.len()
            )));
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image pixels"));
        }
        let mut img = Self { width, height, channels, pixels };
        img.clamp();
        Ok(img)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        Self { width, height, channels, pixels: vec![value.clamp(0.0, 1.0); width * height * channels] }
    }

    /// Builds an image from a per-pixel function returning channel values.
    pub fn from_fn<F>(width: usize, height: usize, channels: usize, mut f: F) -> Self
    where
        F: FnMut(usize, usize, usize) -> f32,
    {
        let mut pixels = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    let v = f(x, y, c);
                    pixels.push(if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 });
                }
            }
        }
        Self { width, height, channels, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f32> {
        self.pixels
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        self.pixels[(y * self.width + x) * self.channels + c] = v.clamp(0.0, 1.0);
    }

    fn clamp(&mut self) {
        for v in &mut self.pixels {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// Luminance (0.299 R + 0.587 G + 0.114 B) as `f64`, row-major.
    pub fn luminance(&self) -> Vec<f64> {
        match self.channels {
            1 => self.pixels.iter().map(|&v| v as f64).collect(),
            _ => self
                .pixels
                .chunks_exact(3)
                .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
                .collect(),
        }
    }

    /// Replicates a gray image into three channels; RGB images are cloned.
    pub fn to_rgb(&self) -> Image {
        if self.channels == 3 {
            return self.clone();
        }
        let pixels = self.pixels.iter().flat_map(|&v| [v, v, v]).collect();
        Image { width: self.width, height: self.height, channels: 3, pixels }
    }

    /// Channel-planar (CHW) copy.
    pub fn to_planar(&self) -> Vec<f32> {
        let plane = self.width * self.height;
        let mut out = vec![0.0; plane * self.channels];
        for (i, px) in self.pixels.chunks_exact(self.channels).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                out[c * plane + i] = v;
            }
        }
        out
    }

    /// Multiplies every value by `factor` and clamps.
    pub fn scaled(&self, factor: f32) -> Image {
        let mut out = self.clone();
        for v in &mut out.pixels {
            *v = (*v * factor).clamp(0.0, 1.0);
        }
        out
    }

    /// Adds `offset` to every value and clamps.
    pub fn offset(&self, offset: f32) -> Image {
        let mut out = self.clone();
        for v in &mut out.pixels {
            *v = (*v + offset).clamp(0.0, 1.0);
        }
        out
    }

    /// Adds i.i.d. Gaussian noise with standard deviation `sd`.
    pub fn with_noise(&self, sd: f32, seed: u64) -> Image {
        let mut r = rng::rng(seed);
        let mut out = self.clone();
        for v in &mut out.pixels {
            *v = (*v + sd * rng::normal(&mut r) as f32).clamp(0.0, 1.0);
        }
        out
    }
}

/// Reflect-101 border handling: `-1 -> 1`, `n -> n-2`.
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let period = 2 * (n - 1);
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

/// Continuous-coordinate counterpart of [`reflect_index`].
#[inline]
fn reflect_coord(x: f32, n: usize) -> f32 {
    if n == 1 {
        return 0.0;
    }
    let max = (n - 1) as f32;
    let period = 2.0 * max;
    let mut x = x - period * libm::floorf(x / period);
    if x > max {
        x = period - x;
    }
    x.clamp(0.0, max)
}

/// Normalized Gaussian taps, radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = libm::ceil(3.0 * sigma) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| libm::exp(-((i * i) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable Gaussian blur of a single `f64` plane with reflected borders.
pub fn blur_plane(plane: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let mut tmp = vec![0.0; plane.len()];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (j, &w) in k.iter().enumerate() {
                acc += w * row[reflect_index(x as isize + j as isize - r, width)];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (j, &w) in k.iter().enumerate() {
                acc += w * tmp[reflect_index(y as isize + j as isize - r, height) * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

/// Five-point Laplacian with reflected borders.
pub fn laplacian_plane(plane: &[f64], width: usize, height: usize) -> Vec<f64> {
    let at = |x: isize, y: isize| plane[reflect_index(y, height) * width + reflect_index(x, width)];
    let mut out = Vec::with_capacity(plane.len());
    for y in 0..height as isize {
        for x in 0..width as isize {
            out.push(at(x, y - 1) + at(x - 1, y) + at(x + 1, y) + at(x, y + 1) - 4.0 * at(x, y));
        }
    }
    out
}

/// Population variance.
pub fn variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityScore {
    pub log_variance: f64,
    pub pass: bool,
}

/// Variance of the Laplacian-of-Gaussian response of the luminance plane.
pub fn log_variance(img: &Image, sigma: f64) -> Result<f64> {
    if img.is_empty() {
        return Err(Error::Empty("image"));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!("LoG sigma must be > 0, got {sigma}")));
    }
    let lum = img.luminance();
    let blurred = blur_plane(&lum, img.width, img.height, sigma);
    Ok(variance(&laplacian_plane(&blurred, img.width, img.height)))
}

/// Sharpness score with its pass/fail flag against `blur_threshold`.
pub fn log_sharpness(img: &Image, sigma: f64, blur_threshold: f64) -> Result<QualityScore> {
    let log_variance = log_variance(img, sigma)?;
    Ok(QualityScore { log_variance, pass: log_variance >= blur_threshold })
}

/// LoG blur gate settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityGate {
    pub sigma: f64,
    pub blur_threshold: f64,
}

impl Default for QualityGate {
    fn default() -> Self {
        Self { sigma: 1.0, blur_threshold: 0.0 }
    }
}

impl QualityGate {
    pub fn assess(&self, img: &Image) -> Result<QualityScore> {
        log_sharpness(img, self.sigma, self.blur_threshold)
    }

    /// Sets the threshold to the `quantile` of `scores` (nearest rank), so
    /// that roughly that share of the calibration set would be rejected.
    pub fn calibrate(&mut self, scores: &[f64], quantile: f64) -> Result<()> {
        if scores.is_empty() {
            return Err(Error::Empty("calibration scores"));
        }
        let mut sorted = scores.to_vec();
        sorted.sort_by(f64::total_cmp);
        let rank = libm::floor(quantile.clamp(0.0, 1.0) * (sorted.len() - 1) as f64) as usize;
        self.blur_threshold = sorted[rank];
        Ok(())
    }
}

/// Share of the training corpus rejected by the default calibration.
pub const DEFAULT_REJECT_QUANTILE: f64 = 0.001;

/// Crops the largest centered square and resamples it bilinearly to
/// `side x side` (half-pixel centers, edge clamped).
pub fn center_crop_resize(img: &Image, side: usize) -> Result<Image> {
    if side == 0 {
        return Err(Error::InvalidArgument("target side must be > 0".into()));
    }
    if img.is_empty() {
        return Err(Error::Empty("image"));
    }
    let sq = img.width.min(img.height);
    let x0 = (img.width - sq) / 2;
    let y0 = (img.height - sq) / 2;
    if sq == side {
        return Ok(Image::from_fn(side, side, img.channels, |x, y, c| img.get(x0 + x, y0 + y, c)));
    }
    let scale = sq as f64 / side as f64;
    let taps = |d: usize| {
        let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (sq - 1) as f64);
        let i0 = libm::floor(s) as usize;
        let i1 = (i0 + 1).min(sq - 1);
        (i0, i1, (s - i0 as f64) as f32)
    };
    let cols: Vec<_> = (0..side).map(taps).collect();
    let rows: Vec<_> = (0..side).map(taps).collect();
    Ok(Image::from_fn(side, side, img.channels, |x, y, c| {
        let (xa, xb, fx) = cols[x];
        let (ya, yb, fy) = rows[y];
        let top = img.get(x0 + xa, y0 + ya, c) * (1.0 - fx) + img.get(x0 + xb, y0 + ya, c) * fx;
        let bot = img.get(x0 + xa, y0 + yb, c) * (1.0 - fx) + img.get(x0 + xb, y0 + yb, c) * fx;
        top * (1.0 - fy) + bot * fy
    }))
}

/// Training-time augmentation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentPolicy {
    pub flip_p: f64,
    pub max_rotation_deg: f64,
    /// Maximum translation as a fraction of the side length.
    pub max_shift_frac: f64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self { flip_p: 0.5, max_rotation_deg: 15.0, max_shift_frac: 0.1 }
    }
}

impl AugmentPolicy {
    pub const IDENTITY: Self = Self { flip_p: 0.0, max_rotation_deg: 0.0, max_shift_frac: 0.0 };

    pub fn is_identity(&self) -> bool {
        self.flip_p <= 0.0 && self.max_rotation_deg == 0.0 && self.max_shift_frac == 0.0
    }
}

/// One concrete draw of the augmentation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentDraw {
    pub flip: bool,
    pub rotation_rad: f64,
    pub shift: (f64, f64),
}

impl AugmentDraw {
    pub fn sample(policy: &AugmentPolicy, side: usize, seed: u64) -> Self {
        let mut r = rng::rng(seed);
        let flip = r.gen::<f64>() < policy.flip_p;
        let u_rot = r.gen::<f64>() * 2.0 - 1.0;
        let u_dx = r.gen::<f64>() * 2.0 - 1.0;
        let u_dy = r.gen::<f64>() * 2.0 - 1.0;
        let max_shift = policy.max_shift_frac * side as f64;
        Self {
            flip,
            rotation_rad: (u_rot * policy.max_rotation_deg).to_radians(),
            shift: (u_dx * max_shift, u_dy * max_shift),
        }
    }

    /// Flip, then rotate about the center, then translate. Samples falling
    /// outside the frame are reflected back in.
    pub fn apply(&self, img: &Image) -> Image {
        if !self.flip && self.rotation_rad == 0.0 && self.shift == (0.0, 0.0) {
            return img.clone();
        }
        let pixels = match img.channels {
            1 => self.resample::<1>(img),
            3 => self.resample::<3>(img),
            4 => self.resample::<4>(img),
            c => {
                // rare layouts: resample each channel as a gray plane
                let planes: Vec<Vec<f32>> = (0..c)
                    .map(|k| {
                        let plane = Image {
                            width: img.width,
                            height: img.height,
                            channels: 1,
                            pixels: img.pixels.iter().skip(k).step_by(c).copied().collect(),
                        };
                        self.resample::<1>(&plane)
                    })
                    .collect();
                (0..img.pixels.len()).map(|i| planes[i % c][i / c]).collect()
            }
        };
        Image { width: img.width, height: img.height, channels: img.channels, pixels }
    }

    fn resample<const N: usize>(&self, img: &Image) -> Vec<f32> {
        let (w, h) = (img.width, img.height);
        let (wf, hf) = ((w - 1) as f32, (h - 1) as f32);
        let cx = wf * 0.5;
        let cy = hf * 0.5;
        let (sin, cos) = (libm::sin(self.rotation_rad) as f32, libm::cos(self.rotation_rad) as f32);
        let (dx, dy) = (self.shift.0 as f32, self.shift.1 as f32);
        let (src, _) = img.pixels.as_chunks::<N>();
        let mut out = vec![0.0f32; img.pixels.len()];
        let (dst, _) = out.as_chunks_mut::<N>();
        // inverse translation, inverse rotation and inverse flip, folded into
        // sx = ax + bx * x, sy = ay + by * x per row
        let (bx, by) = if self.flip { (-cos, -sin) } else { (cos, -sin) };
        for (y, row) in dst.chunks_exact_mut(w).enumerate() {
            let py = y as f32 - dy - cy;
            let rx = cos * (-dx - cx) + sin * py + cx;
            let ax = if self.flip { wf - rx } else { rx };
            let ay = -sin * (-dx - cx) + cos * py + cy;
            for (x, o) in row.iter_mut().enumerate() {
                let xf = x as f32;
                let mut sx = ax + bx * xf;
                let mut sy = ay + by * xf;
                if !(sx >= 0.0 && sx < wf && sy >= 0.0 && sy < hf) {
                    sx = reflect_coord(sx, w);
                    sy = reflect_coord(sy, h);
                }
                // x0 <= w - 2 keeps both neighbours in the row; at the last
                // column fx becomes 1 and the result is unchanged
                let x0 = (sx as usize).min(w.saturating_sub(2));
                let y0 = (sy as usize).min(h.saturating_sub(2));
                let fx = sx - x0 as f32;
                let fy = sy - y0 as f32;
                let i0 = y0 * w + x0;
                let i1 = if h > 1 { i0 + w } else { i0 };
                let (p00, p01) = match src[i0..].first_chunk::<2>() {
                    Some(&[a, b]) => (a, b),
                    None => (src[i0], src[i0]),
                };
                let (p10, p11) = match src[i1..].first_chunk::<2>() {
                    Some(&[a, b]) => (a, b),
                    None => (src[i1], src[i1]),
                };
                for c in 0..N {
                    let top = p00[c] * (1.0 - fx) + p01[c] * fx;
                    let bot = p10[c] * (1.0 - fx) + p11[c] * fx;
                    o[c] = (top * (1.0 - fy) + bot * fy).clamp(0.0, 1.0);
                }
            }
        }
        out
    }
}

/// Seeded augmentation of a square image.
pub fn augment(img: &Image, rng_seed: u64, policy: &AugmentPolicy) -> Result<Image> {
    if img.width != img.height {
        return Err(Error::Shape(alloc::format!("augment expects a square image, got {}x{}", img.width, img.height)));
    }
    if policy.is_identity() {
        return Ok(img.clone());
    }
    Ok(AugmentDraw::sample(policy, img.width, rng_seed).apply(img))
}

/// Gaussian blur of every channel (reflected borders).
pub fn gaussian_blur(img: &Image, sigma: f64) -> Result<Image> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!("blur sigma must be > 0, got {sigma}")));
    }
    let (w, h, ch) = (img.width, img.height, img.channels);
    let mut out = vec![0.0f32; img.pixels.len()];
    for c in 0..ch {
        let plane: Vec<f64> = (0..w * h).map(|i| img.pixels[i * ch + c] as f64).collect();
        let blurred = blur_plane(&plane, w, h, sigma);
        for (i, v) in blurred.into_iter().enumerate() {
            out[i * ch + c] = (v as f32).clamp(0.0, 1.0);
        }
    }
    Ok(Image { width: w, height: h, channels: ch, pixels: out })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(seed: u64, side: usize) -> Image {
        let mut r = rng::rng(seed);
        let f1 = r.gen_range(0.2..0.9);
        let f2 = r.gen_range(0.2..0.9);
        Image::from_fn(side, side, 3, |x, y, c| {
            0.5 + 0.2 * libm::sinf(f1 * x as f32 + c as f32) * libm::cosf(f2 * y as f32) + 0.1 * r.gen::<f32>()
        })
    }

    #[test]
    fn constant_image_scores_zero() {
        let img = Image::filled(32, 24, 3, 0.4);
        let q = log_sharpness(&img, 1.0, 1e-9).unwrap();
        assert!(q.log_variance.abs() < 1e-20);
        assert!(!q.pass);
    }

    #[test]
    fn sharpness_errors() {
        let empty = Image::new(0, 0, 1, vec![]).unwrap();
        assert_eq!(log_variance(&empty, 1.0), Err(Error::Empty("image")));
        assert!(log_variance(&Image::filled(4, 4, 1, 0.0), 0.0).is_err());
        assert!(Image::new(2, 2, 2, vec![0.0; 8]).is_err());
        assert!(Image::new(2, 2, 1, vec![0.0; 3]).is_err());
    }

    #[test]
    fn shift_invariance_and_quadratic_scaling() {
        let base = Image::from_fn(40, 40, 1, |x, y, _| {
            0.3 + 0.1 * libm::sinf(0.7 * x as f32) * libm::cosf(0.4 * y as f32)
        });
        let s0 = log_variance(&base, 1.0).unwrap();
        let s_shift = log_variance(&base.offset(0.2), 1.0).unwrap();
        assert!((s0 - s_shift).abs() <= 1e-6 * s0, "{s0} {s_shift}");
        // scaling with an exactly representable factor keeps f32 rounding out of the way
        let s_scaled = log_variance(&base.scaled(2.0), 1.0).unwrap();
        assert!((s_scaled - 4.0 * s0).abs() <= 1e-6 * 4.0 * s0, "{s_scaled} {s0}");
    }

    #[test]
    fn blurred_copies_score_lower() {
        for seed in 0..5 {
            let img = textured(seed, 48);
            let sharp = log_variance(&img, 1.0).unwrap();
            let soft = log_variance(&gaussian_blur(&img, 2.0).unwrap(), 1.0).unwrap();
            assert!(soft < sharp);
        }
    }

    #[test]
    fn gate_calibration_uses_quantile() {
        let mut gate = QualityGate::default();
        let scores: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        gate.calibrate(&scores, DEFAULT_REJECT_QUANTILE).unwrap();
        assert_eq!(gate.blur_threshold, 0.0);
        gate.calibrate(&scores, 0.5).unwrap();
        assert_eq!(gate.blur_threshold, 499.0);
        assert!(gate.calibrate(&[], 0.5).is_err());
    }

    #[test]
    fn reflect_index_matches_reflect101() {
        let got: Vec<_> = (-3..8).map(|i| reflect_index(i, 5)).collect();
        assert_eq!(got, [3, 2, 1, 0, 1, 2, 3, 4, 3, 2, 1]);
        assert_eq!(reflect_index(-4, 1), 0);
    }

    #[test]
    fn crop_resize_identity_and_errors() {
        let img = textured(3, 24);
        assert_eq!(center_crop_resize(&img, 24).unwrap(), img);
        assert!(center_crop_resize(&img, 0).is_err());
    }

    #[test]
    fn crop_takes_centered_square() {
        // 8x4 image whose value encodes the column
        let img = Image::from_fn(8, 4, 1, |x, _, _| x as f32 / 8.0);
        let out = center_crop_resize(&img, 4).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(out.get(x, y, 0), (x + 2) as f32 / 8.0);
            }
        }
    }

    #[test]
    fn bilinear_checkerboard_upsample() {
        let img = Image::new(2, 2, 1, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let out = center_crop_resize(&img, 4).unwrap();
        // Source coordinates for destination 0..4 at scale 1/2: 0 (clamped), 0.25, 0.75, 1 (clamped).
        let s = [0.0f32, 0.25, 0.75, 1.0];
        for y in 0..4 {
            for x in 0..4 {
                let (fx, fy) = (s[x], s[y]);
                let expect = (1.0 - fx) * (1.0 - fy) + fx * fy;
                assert!((out.get(x, y, 0) - expect).abs() < 1e-6, "({x},{y})");
            }
        }
    }

    #[test]
    fn augment_identity_and_flip() {
        let img = textured(9, 16);
        assert_eq!(augment(&img, 5, &AugmentPolicy::IDENTITY).unwrap(), img);
        let flip_only = AugmentPolicy { flip_p: 1.0, max_rotation_deg: 0.0, max_shift_frac: 0.0 };
        let out = augment(&img, 5, &flip_only).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                for c in 0..3 {
                    assert_eq!(out.get(x, y, c), img.get(15 - x, y, c));
                }
            }
        }
    }

    #[test]
    fn augment_is_seed_deterministic() {
        let img = textured(1, 32);
        let p = AugmentPolicy::default();
        assert_eq!(augment(&img, 77, &p).unwrap(), augment(&img, 77, &p).unwrap());
        assert_ne!(augment(&img, 77, &p).unwrap(), augment(&img, 78, &p).unwrap());
        assert!(augment(&Image::filled(4, 3, 1, 0.0), 1, &p).is_err());
    }

    #[test]
    fn augment_draw_ranges() {
        let p = AugmentPolicy::default();
        for seed in 0..200 {
            let d = AugmentDraw::sample(&p, 224, seed);
            assert!(d.rotation_rad.abs() <= 15f64.to_radians() + 1e-12);
            assert!(d.shift.0.abs() <= 22.4 + 1e-9 && d.shift.1.abs() <= 22.4 + 1e-9);
        }
    }

    #[test]
    fn planar_layout() {
        let img = Image::new(2, 1, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        assert_eq!(img.to_planar(), vec![0.1, 0.4, 0.2, 0.5, 0.3, 0.6]);
    }
}
