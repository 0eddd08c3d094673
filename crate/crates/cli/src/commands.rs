use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use deskew::datagen::{self, DatasetManifest, OcclusionMargins, Split, MANIFEST_FILE};
use deskew::eval::{self, CompareOptions};
use deskew::homography::CornerSet;
use deskew::imaging::{self, ImageBuffer};
use deskew::nn::{
    self, HistoryEntry, LossKind, Network, NetworkConfig, OptimizerKind, TrainConfig, TrainObserver,
};
use serde_json::json;

use crate::config::FileConfig;
use crate::{Cli, Command};

/// Reports a usage problem the way clap does (exit status 2).
fn usage(msg: impl std::fmt::Display) -> ! {
    clap::Error::raw(clap::error::ErrorKind::InvalidValue, format!("{msg}\n")).exit()
}

fn required<T>(v: Option<T>, flag: &str) -> T {
    v.unwrap_or_else(|| {
        clap::Error::raw(
            clap::error::ErrorKind::MissingRequiredArgument,
            format!("the argument '--{flag}' is required (on the command line or in --config)\n"),
        )
        .exit()
    })
}

fn parse_split(s: &str) -> Split {
    s.parse().unwrap_or_else(|e| usage(e))
}

pub fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p).unwrap_or_else(|e| usage(format!("{e:#}"))),
        None => FileConfig::default(),
    };
    if let Some(t) = cli.threads.or(file.threads) {
        if t == 0 {
            usage("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    match cli.command {
        Command::Generate(a) => generate(a, file, seed),
        Command::Train(a) => train(a, file, seed),
        Command::Eval(a) => evaluate(a, file),
        Command::Deskew(a) => deskew(a, file),
        Command::Inspect(a) => inspect(a),
        Command::CompareLosses(a) => compare(a, file, seed),
        Command::MakeFixtures(a) => {
            let set = deskew::fixtures::write_fixture_set(&a.out, a.docs, a.backgrounds, seed)?;
            eprintln!(
                "wrote {} pages to {} and {} textures to {}",
                a.docs,
                set.docs.display(),
                a.backgrounds,
                set.backgrounds.display()
            );
            Ok(())
        }
    }
}

fn load_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    if !path.is_file() {
        bail!("no {MANIFEST_FILE} in {}", dir.display());
    }
    Ok(DatasetManifest::load(&path)?)
}

fn generate(a: crate::GenerateArgs, file: FileConfig, seed: u64) -> Result<()> {
    let s = file.generate;
    let docs = required(a.docs.or(s.docs), "docs");
    let backgrounds = if a.backgrounds.is_empty() {
        required(s.backgrounds, "backgrounds")
    } else {
        a.backgrounds
    };
    let n = required(a.n.or(s.n), "n");
    let out = required(a.out.or(s.out), "out");
    let mut cfg = s.gen.unwrap_or_default();
    cfg.seed = seed;
    if a.occlude_margins || s.occlude_margins.unwrap_or(false) {
        cfg.occlusion_margins = Some(OcclusionMargins::default());
    }
    if a.grayscale || s.grayscale.unwrap_or(false) {
        cfg.grayscale = true;
    }
    if let Err(e) = cfg.validate() {
        usage(e);
    }
    if n == 0 {
        usage("--n must be at least 1");
    }
    let started = std::time::Instant::now();
    let m = datagen::generate_dataset(&docs, &backgrounds, n, &cfg, &out, Default::default())?;
    eprintln!(
        "generated {} samples in {:.1}s -> {}",
        m.records.len(),
        started.elapsed().as_secs_f64(),
        out.join(MANIFEST_FILE).display()
    );
    for split in Split::ALL {
        println!("{split}: {}", m.counts.get(split));
    }
    Ok(())
}

fn parse_loss(name: &str, c: Option<f64>, continuous: bool) -> LossKind {
    let kind = match name {
        "l1" => LossKind::L1,
        "l2" => LossKind::L2,
        "berhu" => LossKind::BerHu {
            c: c.unwrap_or(1.0),
            continuous,
        },
        other => usage(format!("unknown loss {other:?} (l1|l2|berhu)")),
    };
    if let Err(e) = kind.validate() {
        usage(e);
    }
    kind
}

struct Progress {
    every: usize,
    checkpoint: PathBuf,
    history: Vec<HistoryEntry>,
}

impl TrainObserver<f32> for Progress {
    fn on_step(&mut self, e: &HistoryEntry) {
        if self.every > 0 && e.step.is_multiple_of(self.every) {
            eprintln!(
                "{}",
                json!({"epoch": e.epoch, "step": e.step, "loss": e.loss, "lr": e.lr})
            );
        }
        self.history.push(*e);
    }

    fn on_epoch_end(&mut self, epoch: usize, net: &Network<f32>) -> deskew::Result<()> {
        log::info!(
            "epoch {epoch} done, checkpoint {}",
            self.checkpoint.display()
        );
        nn::save_model(&self.checkpoint, net)
    }
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn train(a: crate::TrainArgs, file: FileConfig, seed: u64) -> Result<()> {
    let s = file.train;
    let dataset = required(a.dataset.or(s.dataset), "dataset");
    let out = a.out.or(s.out).unwrap_or_else(|| dataset.join("model.bin"));
    let history_path = a
        .history
        .or(s.history)
        .unwrap_or_else(|| with_suffix(&out, ".history.jsonl"));
    let width = a.width.or(s.width).unwrap_or(0.25);
    let loss = parse_loss(
        &a.loss.or(s.loss).unwrap_or_else(|| "l1".into()),
        a.berhu_c.or(s.berhu_c),
        a.berhu_continuous || s.berhu_continuous.unwrap_or(false),
    );
    let lr = a.lr.or(s.lr).unwrap_or(5e-4);
    let optimizer = match a.optimizer.or(s.optimizer).as_deref().unwrap_or("adam") {
        "adam" => OptimizerKind::adam(lr),
        "rmsprop" => OptimizerKind::rmsprop(lr),
        other => usage(format!("unknown optimizer {other:?} (adam|rmsprop)")),
    };
    if let Err(e) = optimizer.validate() {
        usage(e);
    }
    let batch_size = a.batch_size.or(s.batch_size).unwrap_or(4);
    if batch_size == 0 {
        usage("--batch-size must be at least 1");
    }
    let mut tc = TrainConfig {
        optimizer,
        loss,
        epochs: a.epochs.or(s.epochs).unwrap_or(10),
        batch_size,
        max_steps: a.max_steps.or(s.max_steps),
        ..TrainConfig::default()
    };
    tc.schedule.enabled = !(a.no_schedule || s.no_schedule.unwrap_or(false));

    let manifest = load_manifest(&dataset)?;
    let samples: Vec<_> = eval::load_split_samples(&manifest, &dataset, Split::Train)?
        .into_iter()
        .map(|(_, s)| s)
        .collect();
    let [w, h] = manifest.config.output_size;
    let net_cfg = NetworkConfig::paper(width, manifest.config.channels(), h, w)?;
    let mut rng = deskew::seeded_rng(seed);
    let mut net: Network<f32> = Network::new(net_cfg, &mut rng)?;
    eprintln!(
        "training on {} samples, {} parameters, initial weights {}",
        samples.len(),
        net.param_count(),
        nn::weights_digest(&net)
    );
    nn::save_model(&out, &net)?;
    let mut progress = Progress {
        every: a.log_every.or(s.log_every).unwrap_or(10),
        checkpoint: out.clone(),
        history: Vec::new(),
    };
    let result = nn::train(&mut net, &samples, &tc, &mut rng, &mut progress);
    nn::write_history(&history_path, &progress.history)?;
    let report = result.with_context(|| {
        format!(
            "training failed; last good checkpoint kept at {}",
            out.display()
        )
    })?;
    nn::save_model(&out, &net)?;
    eprintln!(
        "{} steps over {} epochs{}; final weights {} -> {}",
        report.steps(),
        report.epochs_completed,
        if report.stopped_on_plateau {
            " (plateau stop)"
        } else {
            ""
        },
        nn::weights_digest(&net),
        out.display()
    );
    Ok(())
}

fn evaluate(a: crate::EvalArgs, file: FileConfig) -> Result<()> {
    let s = file.eval;
    let model_path = required(a.model.or(s.model), "model");
    let dataset = required(a.dataset.or(s.dataset), "dataset");
    let split = parse_split(&a.split.or(s.split).unwrap_or_else(|| "test".into()));
    let report_path = a
        .report
        .or(s.report)
        .unwrap_or_else(|| dataset.join(format!("eval_{split}.json")));
    let net = nn::load_model(&model_path)
        .with_context(|| format!("loading model {}", model_path.display()))?;
    let manifest = load_manifest(&dataset)?;
    let report = eval::evaluate(&net, &manifest, &dataset, split)?;
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)? + "\n")?;
    eprintln!(
        "{} {split} samples, report {}",
        report.n,
        report_path.display()
    );
    println!("MDE: {:.2} px", report.mde);
    Ok(())
}

fn parse_size(s: &str) -> (usize, usize) {
    let parsed = s
        .split_once(['x', 'X'])
        .and_then(|(w, h)| Some((w.trim().parse().ok()?, h.trim().parse().ok()?)));
    match parsed {
        Some((w, h)) if w >= 2 && h >= 2 => (w, h),
        _ => usage(format!("--size must look like 640x480, got {s:?}")),
    }
}

/// Output size from the quad's longer opposite edges, capped to a multiple
/// of the source size so a wild prediction cannot allocate without bound.
fn size_from_quad(c: &CornerSet, src: (usize, usize)) -> (usize, usize) {
    let d = |i: usize, j: usize| {
        let (a, b) = (c.corners[i], c.corners[j]);
        ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
    };
    let cap = 4 * src.0.max(src.1);
    let w = d(0, 1).max(d(3, 2)).round() as usize;
    let h = d(0, 3).max(d(1, 2)).round() as usize;
    (w.clamp(2, cap), h.clamp(2, cap))
}

fn match_channels(img: &ImageBuffer, channels: usize) -> Result<ImageBuffer> {
    Ok(match (img.channels(), channels) {
        (3, 1) => imaging::to_grayscale(img)?,
        (1, 3) => img.to_rgb(),
        _ => img.clone(),
    })
}

fn deskew(a: crate::DeskewArgs, file: FileConfig) -> Result<()> {
    let s = file.deskew;
    let model_path = required(a.model.or(s.model), "model");
    let out = a.out.or(s.out).unwrap_or_else(|| {
        let stem = a.input.file_stem().unwrap_or_default().to_string_lossy();
        a.input.with_file_name(format!("{stem}.deskewed.png"))
    });
    let size = a.size.or(s.size).map(|s| parse_size(&s));
    let dump = a.dump_corners.or(s.dump_corners);

    let net = nn::load_model(&model_path)
        .with_context(|| format!("loading model {}", model_path.display()))?;
    let img = imaging::load_image(&a.input)?;
    let shape = net.config().input;
    let small = imaging::resize_bilinear(&img, shape.width, shape.height)?;
    let small = match_channels(&small, shape.channels)?;
    let pred = net.predict(&small)?;
    let corners = pred.rescale((shape.width, shape.height), img.dims());
    if let Some(p) = &dump {
        let v = json!({
            "corners": corners.to_flat(),
            "image_size": [img.width(), img.height()],
        });
        std::fs::write(p, serde_json::to_string_pretty(&v)? + "\n")?;
    }
    let (w, h) = size.unwrap_or_else(|| size_from_quad(&corners, img.dims()));
    let rectified =
        eval::deskew(&img, &corners, w, h).context("rectifying with the predicted corners")?;
    imaging::save_image(&out, &rectified)?;
    eprintln!(
        "corners {:?} -> {} ({w}x{h})",
        corners.to_flat(),
        out.display()
    );
    Ok(())
}

fn inspect(a: crate::InspectArgs) -> Result<()> {
    let v = if let Some(dir) = a.dataset {
        let m = load_manifest(&dir)?;
        let [w, h] = m.config.output_size;
        let visible = m
            .records
            .iter()
            .filter(|r| datagen::corners_in_frame(&r.corners, w, h) > 0)
            .count();
        json!({
            "version": m.version,
            "records": m.records.len(),
            "counts": m.counts,
            "output_size": m.config.output_size,
            "channels": m.config.channels(),
            "seed": m.config.seed,
            "occlusion_margins": m.config.occlusion_margins,
            "with_corner_in_frame": visible,
        })
    } else {
        let p = a.model.expect("clap enforces --dataset or --model");
        let net = nn::load_model(&p).with_context(|| format!("loading model {}", p.display()))?;
        json!({
            "input": net.config().input,
            "width_multiplier": net.config().width_multiplier,
            "layers": net.config().layers.len(),
            "parameters": net.param_count(),
            "weights_digest": nn::weights_digest(&net),
        })
    };
    println!("{}", serde_json::to_string_pretty(&v)?);
    Ok(())
}

fn compare(a: crate::CompareArgs, file: FileConfig, seed: u64) -> Result<()> {
    let s = file.compare_losses;
    let dataset = required(a.dataset.or(s.dataset), "dataset");
    let losses = if a.losses.is_empty() {
        s.losses.unwrap_or_else(|| vec!["l1".into(), "l2".into()])
    } else {
        a.losses
    };
    let seeds = if a.seeds.is_empty() {
        s.seeds.unwrap_or_else(|| vec![seed])
    } else {
        a.seeds
    };
    let c = a.berhu_c.or(s.berhu_c);
    let configs: Vec<(LossKind, u64)> = losses
        .iter()
        .flat_map(|l| {
            let kind = parse_loss(l, c, false);
            seeds.iter().map(move |&sd| (kind, sd))
        })
        .collect();
    let lr = a.lr.or(s.lr).unwrap_or(5e-4);
    let optimizer = OptimizerKind::adam(lr);
    if let Err(e) = optimizer.validate() {
        usage(e);
    }
    let opts = CompareOptions {
        width_multiplier: a.width.or(s.width).unwrap_or(0.25),
        train: TrainConfig {
            optimizer,
            epochs: a.epochs.or(s.epochs).unwrap_or(10),
            batch_size: a.batch_size.or(s.batch_size).unwrap_or(4),
            max_steps: a.max_steps.or(s.max_steps),
            ..TrainConfig::default()
        },
        eval_split: parse_split(&a.split.or(s.split).unwrap_or_else(|| "val".into())),
        ..CompareOptions::default()
    };
    let manifest = load_manifest(&dataset)?;
    let table = eval::compare_losses(&manifest, &dataset, &configs, &opts)?;
    print!("{}", table.to_text());
    if let Some(p) = a.csv.or(s.csv) {
        std::fs::write(&p, table.to_csv())?;
    }
    Ok(())
}
