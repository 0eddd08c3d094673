//! Synthetic training data: perspective-warped document pages composited over
//! textured backgrounds, with photometric corruption and exact corner labels.
//!
//! Every sample is produced in two steps. [`plan_sample`] makes all random
//! draws in a fixed order and returns a [`SampleParams`]; [`render_sample`] is
//! a pure function of the source images and those parameters. The recorded
//! corners are obtained by pushing the page outline through the same chain of
//! transforms used to render the pixels, never by re-detecting them.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::homography::{CornerSet, Homography, Point2};
use crate::imaging::{self, ImageBuffer};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
const MAX_H_ATTEMPTS: usize = 10;
const H_DET_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranslationPolicy {
    /// Choose `h13`, `h23` so the centroid of the warped page corners is the
    /// frame center.
    #[default]
    Recenter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionBlurConfig {
    pub probability: f64,
    /// Degrees, counter-clockwise from +x.
    pub angle_range: [f64; 2],
    pub magnitude_range: [f64; 2],
}

impl Default for MotionBlurConfig {
    fn default() -> Self {
        Self {
            probability: 0.7,
            angle_range: [0.0, 180.0],
            magnitude_range: [3.0, 15.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianBlurConfig {
    pub probability: f64,
    pub sigma_range: [f64; 2],
}

impl Default for GaussianBlurConfig {
    fn default() -> Self {
        Self {
            probability: 0.7,
            sigma_range: [0.5, 2.5],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LightingConfig {
    pub probability: f64,
    pub gamma_range: [f64; 2],
    pub alpha_range: [f64; 2],
}

impl Default for LightingConfig {
    fn default() -> Self {
        Self {
            probability: 0.7,
            gamma_range: [0.4, 2.0],
            alpha_range: [0.3, 0.7],
        }
    }
}

/// Border bands zeroed after rendering, in output pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcclusionMargins {
    pub left_right: usize,
    pub top_bottom: usize,
}

impl Default for OcclusionMargins {
    fn default() -> Self {
        Self {
            left_right: 30,
            top_bottom: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub h11_h22_range: [f64; 2],
    pub h12_h21_range: [f64; 2],
    pub h31_h32_range: [f64; 2],
    pub translation_policy: TranslationPolicy,
    /// Each margin is this fraction of the matching page dimension.
    pub margin_fraction_range: [f64; 2],
    pub motion_blur: MotionBlurConfig,
    pub gaussian_blur: GaussianBlurConfig,
    pub lighting: LightingConfig,
    pub occlusion_margins: Option<OcclusionMargins>,
    /// `[width, height]` of the emitted images.
    pub output_size: [usize; 2],
    /// `[width, height]` of the frame the page is warped into before the
    /// final resize.
    pub working_size: [usize; 2],
    /// The margined page is resized to fit this fraction of the working frame
    /// (aspect preserved) before the homography is applied.
    pub page_fill: f64,
    /// Scale range of the background crop relative to the largest crop with
    /// the frame's aspect ratio.
    pub background_crop_range: [f64; 2],
    pub grayscale: bool,
    /// `[train, val, test]`.
    pub split_fractions: [f64; 3],
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            h11_h22_range: [0.7, 1.3],
            h12_h21_range: [-0.3, 0.3],
            h31_h32_range: [-0.0015, 0.0015],
            translation_policy: TranslationPolicy::Recenter,
            margin_fraction_range: [0.03, 0.12],
            motion_blur: MotionBlurConfig::default(),
            gaussian_blur: GaussianBlurConfig::default(),
            lighting: LightingConfig::default(),
            occlusion_margins: None,
            output_size: [384, 256],
            working_size: [768, 512],
            page_fill: 0.6,
            background_crop_range: [0.5, 1.0],
            grayscale: false,
            split_fractions: [0.8, 0.1, 0.1],
            seed: 0,
        }
    }
}

fn check_range(name: &str, r: [f64; 2]) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
        return Err(Error::InvalidConfig(format!(
            "{name}: need finite lo <= hi, got {r:?}"
        )));
    }
    Ok(())
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidConfig(format!(
            "{name}: probability {p} outside [0,1]"
        )));
    }
    Ok(())
}

impl GenConfig {
    /// A configuration with every random effect switched off: identity
    /// geometry (recentred), no margins, no photometric corruption.
    pub fn disabled() -> Self {
        let mut c = Self {
            h11_h22_range: [1.0, 1.0],
            h12_h21_range: [0.0, 0.0],
            h31_h32_range: [0.0, 0.0],
            margin_fraction_range: [0.0, 0.0],
            ..Self::default()
        };
        c.motion_blur.probability = 0.0;
        c.gaussian_blur.probability = 0.0;
        c.lighting.probability = 0.0;
        c
    }

    pub fn validate(&self) -> Result<()> {
        check_range("h11_h22_range", self.h11_h22_range)?;
        check_range("h12_h21_range", self.h12_h21_range)?;
        check_range("h31_h32_range", self.h31_h32_range)?;
        check_range("margin_fraction_range", self.margin_fraction_range)?;
        if self.margin_fraction_range[0] < 0.0 {
            return Err(Error::InvalidConfig(
                "margin_fraction_range must be >= 0".into(),
            ));
        }
        check_prob("motion_blur.probability", self.motion_blur.probability)?;
        check_range("motion_blur.angle_range", self.motion_blur.angle_range)?;
        check_range(
            "motion_blur.magnitude_range",
            self.motion_blur.magnitude_range,
        )?;
        if self.motion_blur.magnitude_range[0] < 1.0 {
            return Err(Error::InvalidConfig(
                "motion_blur.magnitude_range must be >= 1".into(),
            ));
        }
        check_prob("gaussian_blur.probability", self.gaussian_blur.probability)?;
        check_range("gaussian_blur.sigma_range", self.gaussian_blur.sigma_range)?;
        if !(self.gaussian_blur.sigma_range[0] > 0.0) {
            return Err(Error::InvalidConfig(
                "gaussian_blur.sigma_range must be > 0".into(),
            ));
        }
        check_prob("lighting.probability", self.lighting.probability)?;
        check_range("lighting.gamma_range", self.lighting.gamma_range)?;
        check_range("lighting.alpha_range", self.lighting.alpha_range)?;
        let [g0, g1] = self.lighting.gamma_range;
        if g0 <= 0.0 && g1 >= 0.0 {
            return Err(Error::InvalidConfig(
                "lighting.gamma_range must not contain 0".into(),
            ));
        }
        let [a0, a1] = self.lighting.alpha_range;
        if a0 < 0.0 || a1 > 1.0 {
            return Err(Error::InvalidConfig(
                "lighting.alpha_range must lie in [0,1]".into(),
            ));
        }
        let [ow, oh] = self.output_size;
        let [fw, fh] = self.working_size;
        if ow < 2 || oh < 2 || fw < 2 || fh < 2 {
            return Err(Error::InvalidConfig(
                "output_size and working_size must be >= 2".into(),
            ));
        }
        if let Some(o) = self.occlusion_margins {
            if 2 * o.left_right > ow || 2 * o.top_bottom > oh {
                return Err(Error::InvalidConfig(format!(
                    "occlusion_margins {o:?} do not fit output_size {:?}",
                    self.output_size
                )));
            }
        }
        if !(self.page_fill > 0.0 && self.page_fill <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "page_fill must be in (0,1], got {}",
                self.page_fill
            )));
        }
        check_range("background_crop_range", self.background_crop_range)?;
        let [c0, c1] = self.background_crop_range;
        if c0 <= 0.0 || c1 > 1.0 {
            return Err(Error::InvalidConfig(
                "background_crop_range must lie in (0,1]".into(),
            ));
        }
        let f = self.split_fractions;
        if f.iter().any(|&v| !(0.0..=1.0).contains(&v))
            || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::InvalidConfig(format!(
                "split_fractions must be in [0,1] and sum to 1, got {f:?}"
            )));
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        if self.grayscale {
            1
        } else {
            3
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Margins {
    pub left: usize,
    pub top: usize,
    pub right: usize,
    pub bottom: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightingDraw {
    pub center: Point2,
    pub gamma: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionDraw {
    pub angle: f64,
    pub magnitude: f64,
}

/// Every concrete value drawn for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleParams {
    pub margins: Margins,
    /// `[width, height]` of the source document.
    pub doc_size: [usize; 2],
    /// Size after the page-fit resize of the margined page.
    pub fit_size: [usize; 2],
    /// Origin of the coordinates `source_h` acts on, in fitted-page pixels.
    pub page_center: Point2,
    pub frame_size: [usize; 2],
    pub output_size: [usize; 2],
    /// `[x, y, width, height]` of the background crop.
    pub bg_crop: [usize; 4],
    pub lighting: Option<LightingDraw>,
    pub motion_blur: Option<MotionDraw>,
    pub gaussian_sigma: Option<f64>,
    pub occlusion: Option<OcclusionMargins>,
    pub grayscale: bool,
}

impl SampleParams {
    pub fn page_size(&self) -> [usize; 2] {
        let m = self.margins;
        [
            self.doc_size[0] + m.left + m.right,
            self.doc_size[1] + m.top + m.bottom,
        ]
    }

    /// Map from fitted-page pixels to working-frame pixels for the given
    /// centered homography.
    pub fn page_to_frame(&self, h: &Homography) -> Result<Homography> {
        Homography::translation(-self.page_center.x, -self.page_center.y).then(h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::invalid(format!(
                "unknown split {s:?} (train|val|test)"
            ))),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub id: String,
    /// Relative to the manifest's directory.
    pub image_path: String,
    /// Outer page corners at output resolution (TL, TR, BR, BL); may lie
    /// outside the frame.
    pub corners: CornerSet,
    /// Homography acting on fitted-page pixels relative to `page_center`.
    pub source_h: Homography,
    pub split: Split,
    pub params: SampleParams,
    pub doc_source: String,
    pub bg_source: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn get(&self, s: Split) -> usize {
        match s {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }

    /// Val and test get `floor(n·f)`; train takes the remainder.
    pub fn for_total(n: usize, fractions: [f64; 3]) -> Self {
        let val = (n as f64 * fractions[1]).floor() as usize;
        let test = ((n as f64 * fractions[2]).floor() as usize).min(n - val);
        Self {
            train: n - val - test,
            val,
            test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub config: GenConfig,
    pub counts: SplitCounts,
    pub records: Vec<SampleRecord>,
}

impl DatasetManifest {
    /// Reads and validates a manifest. Unknown or missing keys are reported
    /// by name.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let m: DatasetManifest = serde_path_to_error::deserialize(de).map_err(|e| {
            Error::InvalidConfig(format!(
                "{}: at `{}`: {}",
                path.display(),
                e.path(),
                e.inner()
            ))
        })?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::VersionMismatch {
                found: m.version,
                expected: MANIFEST_VERSION,
            });
        }
        let mut ids: Vec<&str> = m.records.iter().map(|r| r.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig(
                "manifest has duplicate record ids".into(),
            ));
        }
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &SampleRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, r: [f64; 2]) -> f64 {
    // always consume one draw so collapsed ranges keep the stream aligned
    let u: f64 = rng.random();
    if r[0] == r[1] {
        r[0]
    } else {
        (r[0] + u * (r[1] - r[0])).min(r[1])
    }
}

/// Draws a homography acting on page coordinates centered at the page
/// center. `page` is the size of the page in the frame, `frame` the size of
/// the frame; the translation is solved so the warped corner centroid lands
/// on the frame center.
pub fn sample_homography<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &GenConfig,
    page: (usize, usize),
    frame: (usize, usize),
) -> Result<Homography> {
    let hx = page.0.saturating_sub(1) as f64 / 2.0;
    let hy = page.1.saturating_sub(1) as f64 / 2.0;
    let centered = [(-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)];
    let cx = frame.0.saturating_sub(1) as f64 / 2.0;
    let cy = frame.1.saturating_sub(1) as f64 / 2.0;
    for _ in 0..MAX_H_ATTEMPTS {
        let h11 = uniform(rng, cfg.h11_h22_range);
        let h22 = uniform(rng, cfg.h11_h22_range);
        let h12 = uniform(rng, cfg.h12_h21_range);
        let h21 = uniform(rng, cfg.h12_h21_range);
        let h31 = uniform(rng, cfg.h31_h32_range);
        let h32 = uniform(rng, cfg.h31_h32_range);
        debug_assert!((cfg.h11_h22_range[0]..=cfg.h11_h22_range[1]).contains(&h11));

        // with w_i = h31·u + h32·v + 1 independent of the translation,
        // mean((a_i + h13) / w_i) = cx is linear in h13
        let (mut sax, mut say, mut sinv) = (0.0, 0.0, 0.0);
        let mut ok = true;
        for &(u, v) in &centered {
            let w = h31 * u + h32 * v + 1.0;
            if w.abs() <= 1e-12 {
                ok = false;
                break;
            }
            sax += (h11 * u + h12 * v) / w;
            say += (h21 * u + h22 * v) / w;
            sinv += 1.0 / w;
        }
        if !ok || sinv.abs() <= 1e-12 {
            continue;
        }
        let h13 = (4.0 * cx - sax) / sinv;
        let h23 = (4.0 * cy - say) / sinv;
        let m = [[h11, h12, h13], [h21, h22, h23], [h31, h32, 1.0]];
        let h = Homography::from_matrix(m);
        match h {
            Ok(h) if h.det().abs() > H_DET_EPS => return Ok(h),
            _ => continue,
        }
    }
    Err(Error::Internal(format!(
        "no invertible homography after {MAX_H_ATTEMPTS} draws"
    )))
}

/// Draws the four margin widths for a `width×height` document.
pub fn draw_margins<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &GenConfig,
    width: usize,
    height: usize,
) -> Margins {
    let r = cfg.margin_fraction_range;
    let mut px = |dim: usize| (uniform(rng, r) * dim as f64).round() as usize;
    let left = px(width);
    let top = px(height);
    let right = px(width);
    let bottom = px(height);
    Margins {
        left,
        top,
        right,
        bottom,
    }
}

/// Pads `doc` with white borders. The returned corners are the outer corners
/// of the padded page.
pub fn pad_margins(doc: &ImageBuffer, m: Margins) -> Result<(ImageBuffer, CornerSet)> {
    let (w, h, c) = (doc.width(), doc.height(), doc.channels());
    if w == 0 || h == 0 {
        return Err(Error::invalid("document is empty"));
    }
    let nw = w + m.left + m.right;
    let nh = h + m.top + m.bottom;
    let mut data = vec![1.0f32; nw * nh * c];
    for y in 0..h {
        let dst = ((y + m.top) * nw + m.left) * c;
        data[dst..dst + w * c].copy_from_slice(&doc.data()[y * w * c..(y + 1) * w * c]);
    }
    let img = ImageBuffer::new(nw, nh, c, data)?;
    Ok((img, CornerSet::canonical(nw as f64, nh as f64)))
}

/// Adds white margins of independently drawn widths around `doc`.
pub fn add_margins<R: Rng + ?Sized>(
    doc: &ImageBuffer,
    rng: &mut R,
    cfg: &GenConfig,
) -> Result<(ImageBuffer, CornerSet)> {
    let m = draw_margins(rng, cfg, doc.width(), doc.height());
    pad_margins(doc, m)
}

/// Zeroes `lr` columns at the left and right and `tb` rows at the top and
/// bottom.
pub fn zero_margins(img: &ImageBuffer, lr: usize, tb: usize) -> Result<ImageBuffer> {
    let (w, h) = img.dims();
    if 2 * lr > w || 2 * tb > h {
        return Err(Error::invalid(format!(
            "bands {lr}/{tb} do not fit a {w}x{h} image"
        )));
    }
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            if x < lr || x >= w - lr || y < tb || y >= h - tb {
                for c in 0..img.channels() {
                    out.set(x, y, c, 0.0);
                }
            }
        }
    }
    Ok(out)
}

fn fit_size(page: [usize; 2], frame: [usize; 2], fill: f64) -> [usize; 2] {
    let s = (fill * frame[0] as f64 / page[0] as f64).min(fill * frame[1] as f64 / page[1] as f64);
    [
        ((page[0] as f64 * s).round() as usize).max(2),
        ((page[1] as f64 * s).round() as usize).max(2),
    ]
}

fn bg_crop<R: Rng + ?Sized>(rng: &mut R, cfg: &GenConfig, bg: (usize, usize)) -> [usize; 4] {
    let [fw, fh] = cfg.working_size;
    let (bw, bh) = bg;
    let (mw, mh) = if bw as f64 / bh as f64 > fw as f64 / fh as f64 {
        (((bh * fw) as f64 / fh as f64).round() as usize, bh)
    } else {
        (bw, ((bw * fh) as f64 / fw as f64).round() as usize)
    };
    let s = uniform(rng, cfg.background_crop_range);
    let cw = ((mw as f64 * s).round() as usize).clamp(1, bw);
    let ch = ((mh as f64 * s).round() as usize).clamp(1, bh);
    let x0 = rng.random_range(0..=bw - cw);
    let y0 = rng.random_range(0..=bh - ch);
    [x0, y0, cw, ch]
}

/// Makes every random draw for one sample. Draw order: margins, homography,
/// background crop, lighting, motion blur, Gaussian blur. Each effect always
/// consumes its draws so toggling one probability does not shift the others.
pub fn plan_sample<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &GenConfig,
    doc_size: (usize, usize),
    bg_size: (usize, usize),
) -> Result<(SampleParams, Homography)> {
    cfg.validate()?;
    if doc_size.0 == 0 || doc_size.1 == 0 || bg_size.0 == 0 || bg_size.1 == 0 {
        return Err(Error::invalid("source images must be non-empty"));
    }
    let margins = draw_margins(rng, cfg, doc_size.0, doc_size.1);
    let page = [
        doc_size.0 + margins.left + margins.right,
        doc_size.1 + margins.top + margins.bottom,
    ];
    let fit = fit_size(page, cfg.working_size, cfg.page_fill);
    let page_center = Point2::new((fit[0] - 1) as f64 / 2.0, (fit[1] - 1) as f64 / 2.0);
    let frame = cfg.working_size;
    let h = sample_homography(rng, cfg, (fit[0], fit[1]), (frame[0], frame[1]))?;
    let crop = bg_crop(rng, cfg, bg_size);

    let l = &cfg.lighting;
    let on = rng.random::<f64>() < l.probability;
    let center = Point2::new(
        uniform(rng, [0.0, (frame[0] - 1) as f64]),
        uniform(rng, [0.0, (frame[1] - 1) as f64]),
    );
    let gamma = uniform(rng, l.gamma_range);
    let alpha = uniform(rng, l.alpha_range);
    let lighting = on.then_some(LightingDraw {
        center,
        gamma,
        alpha,
    });

    let mb = &cfg.motion_blur;
    let on = rng.random::<f64>() < mb.probability;
    let angle = uniform(rng, mb.angle_range);
    let magnitude = uniform(rng, mb.magnitude_range);
    let motion_blur = on.then_some(MotionDraw { angle, magnitude });

    let gb = &cfg.gaussian_blur;
    let on = rng.random::<f64>() < gb.probability;
    let sigma = uniform(rng, gb.sigma_range);
    let gaussian_sigma = on.then_some(sigma);

    Ok((
        SampleParams {
            margins,
            doc_size: [doc_size.0, doc_size.1],
            fit_size: fit,
            page_center,
            frame_size: frame,
            output_size: cfg.output_size,
            bg_crop: crop,
            lighting,
            motion_blur,
            gaussian_sigma,
            occlusion: cfg.occlusion_margins,
            grayscale: cfg.grayscale,
        },
        h,
    ))
}

/// Corner labels implied by a plan, at output resolution.
pub fn planned_corners(p: &SampleParams, h: &Homography) -> Result<CornerSet> {
    let m = p.page_to_frame(h)?;
    let fit = CornerSet::canonical(p.fit_size[0] as f64, p.fit_size[1] as f64);
    let frame = (p.frame_size[0], p.frame_size[1]);
    let out = (p.output_size[0], p.output_size[1]);
    Ok(m.apply_corners(&fit)?.rescale(frame, out))
}

/// The margined page at its fitted size: the document as it looks before
/// the perspective warp.
pub fn fitted_page(doc: &ImageBuffer, p: &SampleParams) -> Result<ImageBuffer> {
    let doc = doc.to_rgb();
    let (page, _) = pad_margins(&doc, p.margins)?;
    imaging::resize_bilinear(&page, p.fit_size[0], p.fit_size[1])
}

/// Renders a planned sample. Pure in its inputs.
pub fn render_sample(
    doc: &ImageBuffer,
    bg: &ImageBuffer,
    p: &SampleParams,
    h: &Homography,
) -> Result<(ImageBuffer, CornerSet)> {
    if p.doc_size != [doc.width(), doc.height()] {
        return Err(Error::DimensionMismatch(format!(
            "plan expects a {:?} document, got {}x{}",
            p.doc_size,
            doc.width(),
            doc.height()
        )));
    }
    let [fw, fh] = p.frame_size;
    let page = fitted_page(doc, p)?;
    let m = p.page_to_frame(h)?;
    let warped = imaging::warp(&page, &m, fw, fh, &[0.0; 3])?;
    let mask = ImageBuffer::filled(page.width(), page.height(), 1, 1.0)?;
    let mask = imaging::warp(&mask, &m, fw, fh, &[0.0])?;

    let [x0, y0, cw, ch] = p.bg_crop;
    let bg = bg.to_rgb().crop(x0, y0, cw, ch)?;
    let bg = imaging::resize_bilinear(&bg, fw, fh)?;
    let mut img = imaging::composite(&warped, &mask, &bg)?;

    if let Some(l) = p.lighting {
        img = imaging::lighting_filter(&img, l.center, l.gamma, l.alpha)?;
    }
    if let Some(mb) = p.motion_blur {
        img = imaging::motion_blur(&img, mb.angle, mb.magnitude)?;
    }
    if let Some(s) = p.gaussian_sigma {
        img = imaging::gaussian_blur(&img, s)?;
    }
    let [ow, oh] = p.output_size;
    img = imaging::resize_bilinear(&img, ow, oh)?;
    // bands are applied at output resolution so their widths are exact there
    if let Some(o) = p.occlusion {
        img = zero_margins(&img, o.left_right, o.top_bottom)?;
    }
    if p.grayscale {
        img = imaging::to_grayscale(&img)?;
    }
    Ok((img, planned_corners(p, h)?))
}

/// Generates one sample. Identifier, path, split and source fields of the
/// record are left empty for the caller.
pub fn generate_sample<R: Rng + ?Sized>(
    doc: &ImageBuffer,
    bg: &ImageBuffer,
    rng: &mut R,
    cfg: &GenConfig,
) -> Result<(ImageBuffer, SampleRecord)> {
    let (params, h) = plan_sample(rng, cfg, doc.dims(), bg.dims())?;
    let (img, corners) = render_sample(doc, bg, &params, &h)?;
    Ok((
        img,
        SampleRecord {
            id: String::new(),
            image_path: String::new(),
            corners,
            source_h: h,
            split: Split::Train,
            params,
            doc_source: String::new(),
            bg_source: String::new(),
        },
    ))
}

/// Number of corners inside `[0, w-1]×[0, h-1]`.
pub fn corners_in_frame(c: &CornerSet, w: usize, h: usize) -> usize {
    let (xm, ym) = ((w - 1) as f64, (h - 1) as f64);
    c.corners
        .iter()
        .filter(|p| p.x >= 0.0 && p.x <= xm && p.y >= 0.0 && p.y <= ym)
        .count()
}

/// Seed of sample `index` under dataset seed `seed` (splitmix64 finalizer
/// over both values).
pub fn sample_seed(seed: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(seed) ^ index)
}

/// Image files (png, jpg, jpeg) directly inside `dir`, sorted by name.
pub fn list_images(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg")) {
            out.push(path);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::EmptySourceDirectory(dir.to_path_buf()));
    }
    Ok(out)
}

/// Assigns splits by a seeded shuffle of sample indices.
pub fn assign_splits(n: usize, fractions: [f64; 3], seed: u64) -> Vec<Split> {
    let counts = SplitCounts::for_total(n, fractions);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(sample_seed(seed, u64::MAX)));
    let mut splits = vec![Split::Train; n];
    for (rank, &i) in order.iter().enumerate() {
        splits[i] = if rank < counts.val {
            Split::Val
        } else if rank < counts.val + counts.test {
            Split::Test
        } else {
            Split::Train
        };
    }
    splits
}

/// Options for [`generate_dataset`] that do not affect its output.
#[derive(Debug, Clone, Copy, Default)]
pub struct GenerateOptions {
    /// Worker threads; `None` uses the current rayon pool.
    pub threads: Option<usize>,
}

/// Generates `n_samples` samples into `out_dir` and writes
/// `out_dir/manifest.json`. Output bytes depend only on the sources, the
/// configuration (including its seed) and `n_samples`.
pub fn generate_dataset(
    docs_dir: impl AsRef<Path>,
    backgrounds_dirs: &[PathBuf],
    n_samples: usize,
    cfg: &GenConfig,
    out_dir: impl AsRef<Path>,
    opts: GenerateOptions,
) -> Result<DatasetManifest> {
    cfg.validate()?;
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be at least 1"));
    }
    if backgrounds_dirs.is_empty() {
        return Err(Error::invalid(
            "at least one background directory is required",
        ));
    }
    let docs = list_images(docs_dir)?;
    let mut bgs = Vec::new();
    for d in backgrounds_dirs {
        bgs.extend(list_images(d)?);
    }
    let out_dir = out_dir.as_ref();
    for s in Split::ALL {
        std::fs::create_dir_all(out_dir.join(s.name()))?;
    }
    let splits = assign_splits(n_samples, cfg.split_fractions, cfg.seed);

    let make = |i: usize| -> Result<SampleRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(cfg.seed, i as u64));
        let di = rng.random_range(0..docs.len());
        let bi = rng.random_range(0..bgs.len());
        let doc = imaging::load_image(&docs[di])?;
        let bg = imaging::load_image(&bgs[bi])?;
        let (img, mut rec) = generate_sample(&doc, &bg, &mut rng, cfg)?;
        rec.id = format!("{i:06}");
        rec.split = splits[i];
        rec.image_path = format!("{}/{}.png", rec.split.name(), rec.id);
        rec.doc_source = docs[di].display().to_string();
        rec.bg_source = bgs[bi].display().to_string();
        imaging::save_image(out_dir.join(&rec.image_path), &img)?;
        log::debug!("sample {} -> {}", rec.id, rec.image_path);
        Ok(rec)
    };
    let run = || {
        (0..n_samples)
            .into_par_iter()
            .map(make)
            .collect::<Result<Vec<_>>>()
    };
    let records = match opts.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| Error::Internal(e.to_string()))?
            .install(run)?,
        None => run()?,
    };

    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        config: cfg.clone(),
        counts: SplitCounts::for_total(n_samples, cfg.split_fractions),
        records,
    };
    manifest.save(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
