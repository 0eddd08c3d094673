//! Raster operations on unit-interval images.
//!
//! Every public operation returns an [`ImageBuffer`] whose values are clamped
//! to `[0, 1]`. Blurs replicate edge pixels; geometric resampling is bilinear.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::jpeg::JpegEncoder;
use image::{DynamicImage, ExtendedColorType, ImageError, ImageReader};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::homography::{Homography, Point2};

/// Row-major, channel-interleaved raster with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, mut data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!(
                "unsupported channel count {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch(format!(
                "data length {} != {width}x{height}x{channels}",
                data.len()
            )));
        }
        clamp_unit(&mut data);
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
    }

    /// Builds an image from `f(x, y, channel)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, data)
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

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Sets one value, clamped to `[0, 1]`.
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * self.channels + c] = v.clamp(0.0, 1.0);
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    fn same_shape(&self, other: &ImageBuffer, what: &str) -> Result<()> {
        if self.width != other.width
            || self.height != other.height
            || self.channels != other.channels
        {
            return Err(Error::DimensionMismatch(format!(
                "{what}: {}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )));
        }
        Ok(())
    }

    /// Replicates a single channel to three; three-channel images are returned unchanged.
    pub fn to_rgb(&self) -> ImageBuffer {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: 3,
            data,
        }
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<ImageBuffer> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(Error::invalid(format!(
                "crop {w}x{h}+{x0}+{y0} outside {}x{}",
                self.width, self.height
            )));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(w * h * c);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * c;
            data.extend_from_slice(&self.data[start..start + w * c]);
        }
        Ok(ImageBuffer {
            width: w,
            height: h,
            channels: c,
            data,
        })
    }

    /// Bilinear sample at a sub-pixel location into `out`. Returns `false`
    /// (leaving `out` untouched) outside `[0, W-1] × [0, H-1]`.
    #[inline]
    pub fn sample_bilinear(&self, x: f64, y: f64, out: &mut [f32]) -> bool {
        const EDGE_EPS: f64 = 1e-6;
        let (wmax, hmax) = ((self.width - 1) as f64, (self.height - 1) as f64);
        if !(x >= -EDGE_EPS && x <= wmax + EDGE_EPS && y >= -EDGE_EPS && y <= hmax + EDGE_EPS) {
            return false;
        }
        let x = x.clamp(0.0, wmax);
        let y = y.clamp(0.0, hmax);
        let x0 = (x.floor() as usize).min(self.width - 1);
        let y0 = (y.floor() as usize).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = (x - x0 as f64) as f32;
        let fy = (y - y0 as f64) as f32;
        let c = self.channels;
        let row0 = y0 * self.width;
        let row1 = y1 * self.width;
        for (ch, o) in out.iter_mut().enumerate().take(c) {
            let p00 = self.data[(row0 + x0) * c + ch];
            let p10 = self.data[(row0 + x1) * c + ch];
            let p01 = self.data[(row1 + x0) * c + ch];
            let p11 = self.data[(row1 + x1) * c + ch];
            let top = lerp(p00, p10, fx);
            let bottom = lerp(p01, p11, fx);
            *o = lerp(top, bottom, fy);
        }
        true
    }
}

#[inline]
fn lerp(a: f32, b: f32, t: f32) -> f32 {
    a + (b - a) * t
}

fn clamp_unit(data: &mut [f32]) {
    for v in data.iter_mut() {
        // NaN collapses to 0
        *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    }
}

/// A normalized square convolution kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2D {
    size: usize,
    weights: Vec<f64>,
}

impl Kernel2D {
    /// Normalizes `weights` to unit sum.
    pub fn new(size: usize, weights: Vec<f64>) -> Result<Self> {
        if size.is_multiple_of(2) {
            return Err(Error::invalid("kernel size must be odd"));
        }
        if weights.len() != size * size {
            return Err(Error::DimensionMismatch(format!(
                "kernel of side {size} needs {} weights, got {}",
                size * size,
                weights.len()
            )));
        }
        let sum: f64 = weights.iter().sum();
        if !(sum.abs() > 0.0) || !sum.is_finite() {
            return Err(Error::invalid(
                "kernel weights must have a non-zero finite sum",
            ));
        }
        Ok(Self {
            size,
            weights: weights.into_iter().map(|w| w / sum).collect(),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, dx: isize, dy: isize) -> f64 {
        let r = (self.size / 2) as isize;
        self.weights[((dy + r) * self.size as isize + dx + r) as usize]
    }

    fn taps(&self) -> Vec<(isize, isize, f32)> {
        let r = (self.size / 2) as isize;
        let mut taps = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                let w = self.weight(dx, dy);
                if w != 0.0 {
                    taps.push((dx, dy, w as f32));
                }
            }
        }
        taps
    }
}

/// Correlates `src` with `kernel`, replicating edge pixels.
pub fn convolve(src: &ImageBuffer, kernel: &Kernel2D) -> ImageBuffer {
    let taps = kernel.taps();
    let (w, h, c) = (src.width, src.height, src.channels);
    let mut data = vec![0.0f32; src.data.len()];
    data.par_chunks_mut(w * c).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0f32;
                for &(dx, dy, wt) in &taps {
                    let sx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                    let sy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                    acc += wt * src.data[(sy * w + sx) * c + ch];
                }
                row[x * c + ch] = acc;
            }
        }
    });
    clamp_unit(&mut data);
    ImageBuffer {
        width: w,
        height: h,
        channels: c,
        data,
    }
}

/// Inverse-mapping perspective warp: each output pixel `q` samples `src` at
/// `h⁻¹(q)` bilinearly; locations outside the source take `fill`.
pub fn warp(
    src: &ImageBuffer,
    h: &Homography,
    out_w: usize,
    out_h: usize,
    fill: &[f32],
) -> Result<ImageBuffer> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::invalid("warp output dimensions must be positive"));
    }
    let c = src.channels;
    if fill.len() != c {
        return Err(Error::DimensionMismatch(format!(
            "fill has {} values for {c} channels",
            fill.len()
        )));
    }
    let inv = h.invert()?;
    let m = *inv.matrix();
    let mut data = vec![0.0f32; out_w * out_h * c];
    data.par_chunks_mut(out_w * c)
        .enumerate()
        .for_each(|(y, row)| {
            let yf = y as f64;
            let mut px = [0.0f32; 3];
            for x in 0..out_w {
                let xf = x as f64;
                let wden = m[2][0] * xf + m[2][1] * yf + m[2][2];
                let dst = &mut row[x * c..(x + 1) * c];
                let hit = wden.abs() > 1e-12 && {
                    let sx = (m[0][0] * xf + m[0][1] * yf + m[0][2]) / wden;
                    let sy = (m[1][0] * xf + m[1][1] * yf + m[1][2]) / wden;
                    src.sample_bilinear(sx, sy, &mut px[..c])
                };
                if hit {
                    dst.copy_from_slice(&px[..c]);
                } else {
                    dst.copy_from_slice(fill);
                }
            }
        });
    clamp_unit(&mut data);
    Ok(ImageBuffer {
        width: out_w,
        height: out_h,
        channels: c,
        data,
    })
}

/// Normalized samples of the Gaussian density at integer offsets
/// `-r..=r`, `r = ceil(3σ)`.
pub fn gaussian_kernel_1d(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!(
            "gaussian sigma must be > 0, got {sigma}"
        )));
    }
    let r = (3.0 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let z: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / z).collect())
}

pub fn gaussian_blur(src: &ImageBuffer, sigma: f64) -> Result<ImageBuffer> {
    let k: Vec<f32> = gaussian_kernel_1d(sigma)?
        .into_iter()
        .map(|v| v as f32)
        .collect();
    let r = (k.len() / 2) as isize;
    let (w, h, c) = (src.width, src.height, src.channels);

    let mut tmp = vec![0.0f32; src.data.len()];
    tmp.par_chunks_mut(w * c).enumerate().for_each(|(y, row)| {
        let srow = &src.data[y * w * c..(y + 1) * w * c];
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0f32;
                for (i, &kv) in k.iter().enumerate() {
                    let sx = (x as isize + i as isize - r).clamp(0, w as isize - 1) as usize;
                    acc += kv * srow[sx * c + ch];
                }
                row[x * c + ch] = acc;
            }
        }
    });
    let mut data = vec![0.0f32; src.data.len()];
    data.par_chunks_mut(w * c).enumerate().for_each(|(y, row)| {
        for (i, &kv) in k.iter().enumerate() {
            let sy = (y as isize + i as isize - r).clamp(0, h as isize - 1) as usize;
            let trow = &tmp[sy * w * c..(sy + 1) * w * c];
            for (o, &t) in row.iter_mut().zip(trow) {
                *o += kv * t;
            }
        }
    });
    clamp_unit(&mut data);
    Ok(ImageBuffer {
        width: w,
        height: h,
        channels: c,
        data,
    })
}

/// Line-segment kernel of length `magnitude` pixels at `angle` degrees
/// (counter-clockwise from the +x axis as seen on screen, so 90° is
/// vertical).
///
/// `n = round(magnitude)` points spaced `(magnitude-1)/(n-1)` apart are
/// splatted bilinearly into the grid, so axis-aligned integer lengths give an
/// exact box.
pub fn motion_kernel(angle: f64, magnitude: f64) -> Result<Kernel2D> {
    if !(magnitude >= 1.0) || !magnitude.is_finite() || !angle.is_finite() {
        return Err(Error::invalid(format!(
            "motion blur magnitude must be >= 1, got {magnitude}"
        )));
    }
    let n = magnitude.round().max(1.0) as usize;
    let half = (magnitude - 1.0) / 2.0;
    let r = half.ceil() as usize + 1;
    let size = 2 * r + 1;
    let (s, co) = angle.to_radians().sin_cos();
    let (dx, dy) = (snap(co), -snap(s));
    let mut weights = vec![0.0f64; size * size];
    for k in 0..n {
        let t = if n == 1 {
            0.0
        } else {
            -half + (magnitude - 1.0) * k as f64 / (n - 1) as f64
        };
        let (px, py) = (t * dx + r as f64, t * dy + r as f64);
        let (x0, y0) = (px.floor(), py.floor());
        let (fx, fy) = (px - x0, py - y0);
        let (x0, y0) = (x0 as usize, y0 as usize);
        for (ox, wx) in [(0, 1.0 - fx), (1, fx)] {
            for (oy, wy) in [(0, 1.0 - fy), (1, fy)] {
                let wgt = wx * wy;
                if wgt > 0.0 {
                    weights[(y0 + oy) * size + x0 + ox] += wgt;
                }
            }
        }
    }
    Kernel2D::new(size, weights)
}

/// Rounds direction components that are within float noise of 0 or ±1.
fn snap(v: f64) -> f64 {
    for target in [-1.0, 0.0, 1.0] {
        if (v - target).abs() < 1e-12 {
            return target;
        }
    }
    v
}

pub fn motion_blur(src: &ImageBuffer, angle: f64, magnitude: f64) -> Result<ImageBuffer> {
    let k = motion_kernel(angle, magnitude)?;
    Ok(convolve(src, &k))
}

/// Spatial gamma lighting: `F(x, y) = ((x-xr)² + (y-yr)²)^γ` normalized by its
/// frame maximum, then `out = α·src + (1-α)·(src ⊙ F)`.
///
/// For `γ < 0` squared distances are floored at one pixel so the filter stays
/// finite at the center.
pub fn lighting_filter(
    src: &ImageBuffer,
    center: Point2,
    gamma: f64,
    alpha: f64,
) -> Result<ImageBuffer> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!(
            "alpha must be in [0,1], got {alpha}"
        )));
    }
    if gamma == 0.0 || !gamma.is_finite() {
        return Err(Error::invalid("gamma must be finite and non-zero"));
    }
    let (w, h, c) = (src.width, src.height, src.channels);
    if !(center.x >= 0.0
        && center.x <= (w - 1) as f64
        && center.y >= 0.0
        && center.y <= (h - 1) as f64)
    {
        return Err(Error::invalid("lighting center must lie inside the frame"));
    }
    let field = |x: usize, y: usize| -> f64 {
        let d2 = (x as f64 - center.x).powi(2) + (y as f64 - center.y).powi(2);
        let d2 = if gamma < 0.0 { d2.max(1.0) } else { d2 };
        d2.powf(gamma)
    };
    let fmax = (0..h)
        .into_par_iter()
        .map(|y| (0..w).map(|x| field(x, y)).fold(0.0f64, f64::max))
        .reduce(|| 0.0, f64::max);
    let mut data = vec![0.0f32; src.data.len()];
    data.par_chunks_mut(w * c).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            let f = if fmax > 0.0 { field(x, y) / fmax } else { 1.0 };
            for ch in 0..c {
                let s = src.data[(y * w + x) * c + ch] as f64;
                row[x * c + ch] = (alpha * s + (1.0 - alpha) * s * f) as f32;
            }
        }
    });
    clamp_unit(&mut data);
    Ok(ImageBuffer {
        width: w,
        height: h,
        channels: c,
        data,
    })
}

/// `alpha·a + (1-alpha)·b`.
pub fn alpha_blend(a: &ImageBuffer, b: &ImageBuffer, alpha: f64) -> Result<ImageBuffer> {
    a.same_shape(b, "alpha_blend")?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!(
            "alpha must be in [0,1], got {alpha}"
        )));
    }
    let mut data: Vec<f32> = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| (alpha * x as f64 + (1.0 - alpha) * y as f64) as f32)
        .collect();
    clamp_unit(&mut data);
    Ok(ImageBuffer { data, ..a.clone() })
}

/// Per-pixel `mask·fg + (1-mask)·bg` with a single-channel mask.
pub fn composite(fg: &ImageBuffer, mask: &ImageBuffer, bg: &ImageBuffer) -> Result<ImageBuffer> {
    fg.same_shape(bg, "composite fg/bg")?;
    if mask.channels != 1 || mask.dims() != fg.dims() {
        return Err(Error::DimensionMismatch(format!(
            "mask must be {}x{}x1, got {}x{}x{}",
            fg.width, fg.height, mask.width, mask.height, mask.channels
        )));
    }
    let c = fg.channels;
    let mut data = Vec::with_capacity(fg.data.len());
    for (i, &m) in mask.data.iter().enumerate() {
        for ch in 0..c {
            let (f, b) = (fg.data[i * c + ch], bg.data[i * c + ch]);
            data.push(if m == 1.0 {
                f
            } else if m == 0.0 {
                b
            } else {
                m * f + (1.0 - m) * b
            });
        }
    }
    clamp_unit(&mut data);
    Ok(ImageBuffer { data, ..fg.clone() })
}

/// ITU-R BT.601 luma.
pub fn to_grayscale(src: &ImageBuffer) -> Result<ImageBuffer> {
    if src.channels != 3 {
        return Err(Error::invalid(format!(
            "grayscale conversion needs 3 channels, got {}",
            src.channels
        )));
    }
    let mut data: Vec<f32> = src
        .data
        .chunks_exact(3)
        .map(|p| (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) as f32)
        .collect();
    clamp_unit(&mut data);
    Ok(ImageBuffer {
        width: src.width,
        height: src.height,
        channels: 1,
        data,
    })
}

/// Resize under the pixel-center convention: output pixel `i` sits at source
/// coordinate `i·(in-1)/(out-1)`, matching
/// [`crate::homography::CornerSet::rescale`]. Upscaling is plain bilinear interpolation;
/// when an axis shrinks, the triangle filter is widened by the scale factor so
/// every source pixel contributes.
pub fn resize_bilinear(src: &ImageBuffer, out_w: usize, out_h: usize) -> Result<ImageBuffer> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::invalid("resize dimensions must be positive"));
    }
    if (out_w, out_h) == src.dims() {
        return Ok(src.clone());
    }
    let sx = crate::homography::axis_scale(out_w, src.width);
    let sy = crate::homography::axis_scale(out_h, src.height);
    let c = src.channels;
    let mut data = vec![0.0f32; out_w * out_h * c];
    if sx <= 1.0 && sy <= 1.0 {
        data.par_chunks_mut(out_w * c)
            .enumerate()
            .for_each(|(y, row)| {
                let mut px = [0.0f32; 3];
                for x in 0..out_w {
                    src.sample_bilinear(x as f64 * sx, y as f64 * sy, &mut px[..c]);
                    row[x * c..(x + 1) * c].copy_from_slice(&px[..c]);
                }
            });
    } else {
        let tx = triangle_taps(out_w, src.width, sx);
        let ty = triangle_taps(out_h, src.height, sy);
        // horizontal pass into an out_w × src.height buffer, then vertical
        let mut mid = vec![0.0f32; out_w * src.height * c];
        mid.par_chunks_mut(out_w * c)
            .enumerate()
            .for_each(|(y, row)| {
                let srow = &src.data[y * src.width * c..(y + 1) * src.width * c];
                for (x, (start, ws)) in tx.iter().enumerate() {
                    for ch in 0..c {
                        let acc: f64 = ws
                            .iter()
                            .enumerate()
                            .map(|(k, &w)| w * srow[(start + k) * c + ch] as f64)
                            .sum();
                        row[x * c + ch] = acc as f32;
                    }
                }
            });
        data.par_chunks_mut(out_w * c)
            .enumerate()
            .for_each(|(y, row)| {
                let (start, ws) = &ty[y];
                for (i, v) in row.iter_mut().enumerate() {
                    let acc: f64 = ws
                        .iter()
                        .enumerate()
                        .map(|(k, &w)| w * mid[(start + k) * out_w * c + i] as f64)
                        .sum();
                    *v = acc as f32;
                }
            });
    }
    clamp_unit(&mut data);
    Ok(ImageBuffer {
        width: out_w,
        height: out_h,
        channels: c,
        data,
    })
}

/// Normalized triangle-filter taps for each output index: the first source
/// index and the weights from there on. The filter half-width is
/// `max(1, scale)`, which is exact linear interpolation when `scale ≤ 1`.
fn triangle_taps(n_out: usize, n_in: usize, scale: f64) -> Vec<(usize, Vec<f64>)> {
    let support = scale.max(1.0);
    (0..n_out)
        .map(|i| {
            let center = i as f64 * scale;
            let lo = ((center - support).floor().max(0.0) as usize).min(n_in - 1);
            let hi = ((center + support).ceil() as usize).min(n_in - 1);
            let mut ws: Vec<f64> = (lo..=hi)
                .map(|j| (1.0 - (j as f64 - center).abs() / support).max(0.0))
                .collect();
            let total: f64 = ws.iter().sum();
            for w in &mut ws {
                *w /= total;
            }
            (lo, ws)
        })
        .collect()
}

fn unsupported(path: &Path, e: impl ToString) -> Error {
    Error::UnsupportedFormat {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

/// Loads a PNG or JPEG. Gray images (with or without alpha) load as one
/// channel, everything else as RGB; alpha is discarded.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)?.with_guessed_format()?;
    // the file opened, so any decoder failure (including a truncated
    // stream) means the content is not a readable image
    let img = reader.decode().map_err(|e| unsupported(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = matches!(
        img,
        DynamicImage::ImageLuma8(_)
            | DynamicImage::ImageLumaA8(_)
            | DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_)
    );
    let bytes = if gray {
        img.into_luma8().into_raw()
    } else {
        img.into_rgb8().into_raw()
    };
    let data = bytes.into_iter().map(|b| b as f32 / 255.0).collect();
    ImageBuffer::new(w, h, if gray { 1 } else { 3 }, data)
}

pub fn to_bytes(img: &ImageBuffer) -> Vec<u8> {
    img.data
        .iter()
        .map(|&v| (255.0 * v.clamp(0.0, 1.0)).round() as u8)
        .collect()
}

/// Writes PNG, or JPEG at quality 80 for `.jpg`/`.jpeg` paths.
pub fn save_image(path: impl AsRef<Path>, img: &ImageBuffer) -> Result<()> {
    let path = path.as_ref();
    let color = if img.channels == 1 {
        ExtendedColorType::L8
    } else {
        ExtendedColorType::Rgb8
    };
    let bytes = to_bytes(img);
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    let result = match ext.as_deref() {
        Some("png") => image::save_buffer_with_format(
            path,
            &bytes,
            img.width as u32,
            img.height as u32,
            color,
            image::ImageFormat::Png,
        ),
        Some("jpg") | Some("jpeg") => {
            let out = BufWriter::new(File::create(path)?);
            JpegEncoder::new_with_quality(out, 80).encode(
                &bytes,
                img.width as u32,
                img.height as u32,
                color,
            )
        }
        _ => {
            return Err(unsupported(
                path,
                "only .png, .jpg and .jpeg outputs are supported",
            ))
        }
    };
    result.map_err(|e| match e {
        ImageError::IoError(io) => Error::Io(io),
        other => unsupported(path, other),
    })
}
