//! Displacement metrics, dataset evaluation and rectification.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::{DatasetManifest, SampleRecord, Split};
use crate::error::{Error, Result};
use crate::homography::{corners_to_homography, CornerSet, Point2};
use crate::imaging::{self, ImageBuffer};
use crate::nn::{self, InputShape, LossKind, Network, NetworkConfig, TrainConfig, TrainSample};

/// `|Δx| + |Δy|` for each corner, matched by index.
pub fn corner_l1(pred: &CornerSet, gt: &CornerSet) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (o, (p, g)) in out.iter_mut().zip(pred.corners.iter().zip(&gt.corners)) {
        *o = (p.x - g.x).abs() + (p.y - g.y).abs();
    }
    out
}

/// Mean displacement error: the per-corner L1 distance averaged over the
/// four corners.
pub fn sample_mde(pred: &CornerSet, gt: &CornerSet) -> f64 {
    corner_l1(pred, gt).iter().sum::<f64>() / 4.0
}

/// Anything that maps an image to four corners in its own pixel frame.
pub trait CornerPredictor: Sync {
    fn input_shape(&self) -> InputShape;
    fn predict(&self, img: &ImageBuffer) -> Result<CornerSet>;
    /// Identifies the model in reports.
    fn digest(&self) -> String;
}

impl CornerPredictor for Network<f32> {
    fn input_shape(&self) -> InputShape {
        self.config().input
    }

    fn predict(&self, img: &ImageBuffer) -> Result<CornerSet> {
        Network::predict(self, img)
    }

    fn digest(&self) -> String {
        nn::weights_digest(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEval {
    pub id: String,
    pub corner_l1: [f64; 4],
    pub mde: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: Split,
    pub n: usize,
    pub mde: f64,
    pub per_sample: Vec<SampleEval>,
    /// SHA-256 over the model digest and the dataset configuration.
    pub config_digest: String,
}

pub fn load_record_image(manifest_dir: &Path, rec: &SampleRecord) -> Result<ImageBuffer> {
    imaging::load_image(manifest_dir.join(&rec.image_path))
}

fn check_dims(img: &ImageBuffer, shape: InputShape, id: &str) -> Result<()> {
    if (img.width(), img.height(), img.channels()) != (shape.width, shape.height, shape.channels) {
        return Err(Error::ShapeMismatch(format!(
            "record {id}: image is {}x{}x{}, model expects {}x{}x{}",
            img.width(),
            img.height(),
            img.channels(),
            shape.width,
            shape.height,
            shape.channels
        )));
    }
    Ok(())
}

fn sorted_split(manifest: &DatasetManifest, split: Split) -> Result<Vec<&SampleRecord>> {
    let mut recs: Vec<&SampleRecord> = manifest.records_in(split).collect();
    if recs.is_empty() {
        return Err(Error::EmptySplit(split.name().into()));
    }
    recs.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(recs)
}

/// Predicts every record of `split` and aggregates the displacement error.
/// Records are processed in id order, so the report does not depend on the
/// manifest's record order or on the number of worker threads.
pub fn evaluate(
    model: &dyn CornerPredictor,
    manifest: &DatasetManifest,
    manifest_dir: &Path,
    split: Split,
) -> Result<EvalReport> {
    let recs = sorted_split(manifest, split)?;
    let shape = model.input_shape();
    let per_sample = recs
        .par_iter()
        .map(|rec| {
            let img = load_record_image(manifest_dir, rec)?;
            check_dims(&img, shape, &rec.id)?;
            let pred = model.predict(&img)?;
            Ok(SampleEval {
                id: rec.id.clone(),
                corner_l1: corner_l1(&pred, &rec.corners),
                mde: sample_mde(&pred, &rec.corners),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mde = per_sample.iter().map(|s| s.mde).sum::<f64>() / per_sample.len() as f64;
    let mut h = Sha256::new();
    h.update(model.digest().as_bytes());
    h.update(serde_json::to_vec(&manifest.config)?);
    let config_digest = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Ok(EvalReport {
        split,
        n: per_sample.len(),
        mde,
        per_sample,
        config_digest,
    })
}

/// Rectifies `img` so the quad `pred` fills an upright `out_w×out_h` image.
/// Pixels whose source falls outside `img` are 0.
pub fn deskew(
    img: &ImageBuffer,
    pred: &CornerSet,
    out_w: usize,
    out_h: usize,
) -> Result<ImageBuffer> {
    pred.check_non_degenerate()?;
    let h = corners_to_homography(pred, out_w, out_h)?;
    imaging::warp(img, &h, out_w, out_h, &vec![0.0; img.channels()])
}

/// Mean absolute difference per channel between `deskew(sample, corners)` at
/// the size of `reference` and `reference`, over pixels at least `border`
/// pixels inside the rectified rectangle whose source lies at least `border`
/// pixels inside `sample`. `None` if no pixel qualifies.
pub fn reconstruction_error(
    sample: &ImageBuffer,
    corners: &CornerSet,
    reference: &ImageBuffer,
    border: usize,
) -> Result<Option<Vec<f64>>> {
    if sample.channels() != reference.channels() {
        return Err(Error::DimensionMismatch("channel counts differ".into()));
    }
    let (rw, rh) = reference.dims();
    let out = deskew(sample, corners, rw, rh)?;
    let back = corners_to_homography(corners, rw, rh)?.invert()?;
    let b = border as f64;
    let (xmax, ymax) = (
        (sample.width() - 1) as f64 - b,
        (sample.height() - 1) as f64 - b,
    );
    let c = reference.channels();
    let mut sum = vec![0.0f64; c];
    let mut n = 0usize;
    for y in border..rh.saturating_sub(border) {
        for x in border..rw.saturating_sub(border) {
            let s = back.apply(Point2::new(x as f64, y as f64))?;
            if s.x < b || s.y < b || s.x > xmax || s.y > ymax {
                continue;
            }
            for (ch, acc) in sum.iter_mut().enumerate() {
                *acc += (out.get(x, y, ch) - reference.get(x, y, ch)).abs() as f64;
            }
            n += 1;
        }
    }
    Ok((n > 0).then(|| sum.into_iter().map(|s| s / n as f64).collect()))
}

/// Loads the records of one split as training samples, sorted by id.
pub fn load_split_samples(
    manifest: &DatasetManifest,
    manifest_dir: &Path,
    split: Split,
) -> Result<Vec<(String, TrainSample<f32>)>> {
    sorted_split(manifest, split)?
        .par_iter()
        .map(|rec| {
            let img = load_record_image(manifest_dir, rec)?;
            let (w, h, c) = (img.width(), img.height(), img.channels());
            let input = nn::image_to_tensor::<f32>(&img)?.reshape(vec![c, h, w])?;
            Ok((
                rec.id.clone(),
                TrainSample {
                    input,
                    target: rec.corners,
                },
            ))
        })
        .collect()
}

/// Mean displacement error of `net` over in-memory samples.
pub fn samples_mde(net: &Network<f32>, samples: &[TrainSample<f32>]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySplit("no samples".into()));
    }
    let errs = samples
        .par_iter()
        .map(|s| {
            let x = s.input.clone().reshape([&[1], s.input.shape()].concat())?;
            let y = net.forward(&x)?;
            let v: Vec<f64> = y.data().iter().map(|&v| v as f64).collect();
            let pred = CornerSet::from_flat(
                v.try_into()
                    .map_err(|_| Error::Internal("output size".into()))?,
            )?;
            Ok(sample_mde(&pred, &s.target))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

#[derive(Debug, Clone)]
pub struct CompareOptions {
    pub width_multiplier: f64,
    pub train: TrainConfig,
    pub train_split: Split,
    pub eval_split: Split,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            width_multiplier: 0.25,
            train: TrainConfig::default(),
            train_split: Split::Train,
            eval_split: Split::Val,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub loss: String,
    pub seed: u64,
    pub steps: usize,
    /// Mean of the last ten step losses.
    pub final_loss: f64,
    pub eval_mde: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTable {
    pub eval_split: Split,
    pub rows: Vec<CompareRow>,
}

impl LossTable {
    pub fn to_text(&self) -> String {
        let header = [
            "loss",
            "seed",
            "steps",
            "final_loss",
            &format!("{}_mde_px", self.eval_split),
        ];
        let cells: Vec<[String; 5]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.loss.clone(),
                    r.seed.to_string(),
                    r.steps.to_string(),
                    format!("{:.4}", r.final_loss),
                    format!("{:.2}", r.eval_mde),
                ]
            })
            .collect();
        let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let line = |vals: Vec<&str>| -> String {
            vals.iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (v, w))| {
                    if i == 0 {
                        format!("{v:<w$}")
                    } else {
                        format!("{v:>w$}")
                    }
                })
                .collect::<Vec<_>>()
                .join("  ")
        };
        let mut out = line(header.to_vec());
        out.push('\n');
        for row in &cells {
            out.push_str(&line(row.iter().map(String::as_str).collect()));
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("loss,seed,steps,final_loss,{}_mde_px\n", self.eval_split);
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.loss, r.seed, r.steps, r.final_loss, r.eval_mde
            ));
        }
        out
    }
}

/// Trains one network per `(loss, seed)` entry, identical apart from the
/// loss and seed, and reports the displacement error on the evaluation split.
pub fn compare_losses(
    manifest: &DatasetManifest,
    manifest_dir: &Path,
    configs: &[(LossKind, u64)],
    opts: &CompareOptions,
) -> Result<LossTable> {
    if configs.is_empty() {
        return Err(Error::invalid(
            "compare_losses needs at least one configuration",
        ));
    }
    let train: Vec<TrainSample<f32>> =
        load_split_samples(manifest, manifest_dir, opts.train_split)?
            .into_iter()
            .map(|(_, s)| s)
            .collect();
    let eval: Vec<TrainSample<f32>> = load_split_samples(manifest, manifest_dir, opts.eval_split)?
        .into_iter()
        .map(|(_, s)| s)
        .collect();
    let [w, h] = manifest.config.output_size;
    let c = manifest.config.channels();
    let mut rows = Vec::with_capacity(configs.len());
    for &(loss, seed) in configs {
        loss.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = NetworkConfig::paper(opts.width_multiplier, c, h, w)?;
        let mut net: Network<f32> = Network::new(cfg, &mut rng)?;
        let tc = TrainConfig {
            loss,
            ..opts.train.clone()
        };
        let started = std::time::Instant::now();
        let report = nn::train(&mut net, &train, &tc, &mut rng, &mut ())?;
        let tail = &report.history[report.history.len().saturating_sub(10)..];
        let final_loss = tail.iter().map(|e| e.loss).sum::<f64>() / tail.len().max(1) as f64;
        let eval_mde = samples_mde(&net, &eval)?;
        log::info!(
            "{} seed {seed}: {} steps, {:.1}s, {} MDE {eval_mde:.2} px",
            loss.name(),
            report.steps(),
            started.elapsed().as_secs_f64(),
            opts.eval_split
        );
        rows.push(CompareRow {
            loss: loss.name().to_string(),
            seed,
            steps: report.steps(),
            final_loss,
            eval_mde,
        });
    }
    Ok(LossTable {
        eval_split: opts.eval_split,
        rows,
    })
}
