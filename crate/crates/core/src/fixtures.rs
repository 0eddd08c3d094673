//! Procedural document pages and background textures.
//!
//! These stand in for a scanned-document corpus and texture datasets in
//! tests, examples and desk-scale experiments. Everything is a function of
//! the seed.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::imaging::{self, ImageBuffer};

/// A white page with a tinted header band, paragraphs of word-like dark
/// bars and occasionally a gray figure box.
pub fn document<R: Rng + ?Sized>(rng: &mut R, width: usize, height: usize) -> Result<ImageBuffer> {
    let paper: f32 = rng.random_range(0.92..1.0);
    let mut img = ImageBuffer::filled(width, height, 3, paper)?;
    let pad = (width / 12).max(2);
    let header_h = (height / 10).max(2);
    let tint = [
        rng.random_range(0.2..0.8f32),
        rng.random_range(0.2..0.8f32),
        rng.random_range(0.2..0.8f32),
    ];
    fill_rect(&mut img, pad, pad, width - 2 * pad, header_h, tint);

    let line_h = rng.random_range(3..=6usize).min(height / 20).max(1);
    let gap = line_h + rng.random_range(2..=5usize);
    let ink: f32 = rng.random_range(0.0..0.25);
    let figure = rng.random_bool(0.5);
    let fig_rows = (height / 3, height / 3 + height / 5);
    let mut y = 2 * pad + header_h;
    while y + line_h + pad < height {
        if figure && y >= fig_rows.0 && y < fig_rows.1 {
            fill_rect(
                &mut img,
                pad,
                y,
                (width - 2 * pad) / 2,
                line_h,
                [0.55, 0.55, 0.55],
            );
            y += line_h;
            continue;
        }
        let mut x = pad;
        let end = width - pad - rng.random_range(0..(width / 4).max(1));
        while x < end {
            let w = rng.random_range(line_h..=5 * line_h).min(end - x);
            fill_rect(&mut img, x, y, w, line_h, [ink; 3]);
            x += w + rng.random_range(line_h / 2 + 1..=line_h + 1);
        }
        y += gap;
        if rng.random_bool(0.12) {
            y += 2 * gap;
        }
    }
    Ok(img)
}

fn fill_rect(img: &mut ImageBuffer, x0: usize, y0: usize, w: usize, h: usize, rgb: [f32; 3]) {
    for y in y0..(y0 + h).min(img.height()) {
        for x in x0..(x0 + w).min(img.width()) {
            for (c, &v) in rgb.iter().enumerate() {
                img.set(x, y, c, v);
            }
        }
    }
}

/// One of four texture families: smooth color noise, oriented stripes,
/// tiles, or a wood-grain-like ring pattern.
pub fn texture<R: Rng + ?Sized>(rng: &mut R, width: usize, height: usize) -> Result<ImageBuffer> {
    let base: [f32; 3] = [rng.random(), rng.random(), rng.random()];
    let alt: [f32; 3] = [rng.random(), rng.random(), rng.random()];
    let kind = rng.random_range(0..4u8);
    let freq: f64 = rng.random_range(0.02..0.15);
    let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let (s, c) = theta.sin_cos();
    let phases: Vec<f64> = (0..6)
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect();
    let img = ImageBuffer::from_fn(width, height, 3, |x, y, ch| {
        let (xf, yf) = (x as f64, y as f64);
        let t = match kind {
            0 => {
                let a = (xf * freq * 0.7 + phases[0]).sin() * (yf * freq * 0.5 + phases[1]).cos();
                let b = ((xf + yf) * freq * 0.3 + phases[2]).sin();
                0.5 + 0.25 * (a + b)
            }
            1 => 0.5 + 0.5 * ((xf * c + yf * s) * freq + phases[3]).sin(),
            2 => {
                let cell = (1.0 / freq).max(4.0);
                (((xf / cell).floor() + (yf / cell).floor()) as i64).rem_euclid(2) as f64
            }
            _ => {
                let (dx, dy) = (xf - width as f64 * 0.3, yf - height as f64 * 0.7);
                let r = (dx * dx + 0.2 * dy * dy).sqrt();
                0.5 + 0.5 * (r * freq + 2.0 * (yf * 0.05 + phases[4]).sin()).sin()
            }
        };
        let t = t.clamp(0.0, 1.0) as f32;
        base[ch] * (1.0 - t) + alt[ch] * t
    })?;
    Ok(img)
}

/// Paths of a generated fixture corpus.
#[derive(Debug, Clone)]
pub struct FixtureSet {
    pub docs: PathBuf,
    pub backgrounds: PathBuf,
}

/// Writes `n_docs` page images to `root/docs` and `n_backgrounds` textures to
/// `root/backgrounds` as PNG.
pub fn write_fixture_set(
    root: impl AsRef<Path>,
    n_docs: usize,
    n_backgrounds: usize,
    seed: u64,
) -> Result<FixtureSet> {
    let root = root.as_ref();
    let set = FixtureSet {
        docs: root.join("docs"),
        backgrounds: root.join("backgrounds"),
    };
    std::fs::create_dir_all(&set.docs)?;
    std::fs::create_dir_all(&set.backgrounds)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n_docs {
        let w = rng.random_range(240..=360usize);
        let h = (w as f64 * rng.random_range(1.25..1.45)).round() as usize;
        let img = document(&mut rng, w, h)?;
        imaging::save_image(set.docs.join(format!("doc_{i:03}.png")), &img)?;
    }
    for i in 0..n_backgrounds {
        let w = rng.random_range(320..=640usize);
        let h = rng.random_range(240..=480usize);
        let img = texture(&mut rng, w, h)?;
        imaging::save_image(set.backgrounds.join(format!("bg_{i:03}.png")), &img)?;
    }
    Ok(set)
}
