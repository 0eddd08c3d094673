//! Mini-batch training loop.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{loss, LossKind};
use super::network::Network;
use super::optim::{Optimizer, OptimizerKind, PlateauSchedule, PlateauTracker, ScheduleAction};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};
use crate::homography::CornerSet;

/// One training example: a `[C, H, W]` input and its corners in input pixels.
#[derive(Debug, Clone)]
pub struct TrainSample<T> {
    pub input: Tensor<T>,
    pub target: CornerSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub loss: LossKind,
    pub epochs: usize,
    pub batch_size: usize,
    /// Hard cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
    pub schedule: PlateauSchedule,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::default(),
            loss: LossKind::L1,
            epochs: 10,
            batch_size: 4,
            max_steps: None,
            schedule: PlateauSchedule::default(),
            shuffle: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    #[serde(skip)]
    pub epoch: usize,
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub history: Vec<HistoryEntry>,
    pub epochs_completed: usize,
    pub stopped_on_plateau: bool,
}

impl TrainReport {
    pub fn steps(&self) -> usize {
        self.history.len()
    }
}

/// Callbacks invoked by [`train`]. Both default to doing nothing.
pub trait TrainObserver<T> {
    fn on_step(&mut self, _entry: &HistoryEntry) {}

    /// Called after every completed epoch with the current weights.
    fn on_epoch_end(&mut self, _epoch: usize, _net: &Network<T>) -> Result<()> {
        Ok(())
    }
}

impl<T> TrainObserver<T> for () {}

fn batch<T: Real>(data: &[TrainSample<T>], idx: &[usize]) -> Result<(Tensor<T>, Tensor<T>)> {
    let inputs: Vec<&Tensor<T>> = idx.iter().map(|&i| &data[i].input).collect();
    let x = Tensor::stack(&inputs)?;
    let y: Vec<T> = idx
        .iter()
        .flat_map(|&i| data[i].target.to_flat())
        .map(T::lit)
        .collect();
    Ok((x, Tensor::new(vec![idx.len(), 8], y)?))
}

/// Runs one optimizer step on a batch and returns the loss.
pub fn train_step<T: Real, R: Rng + ?Sized>(
    net: &mut Network<T>,
    opt: &mut Optimizer<T>,
    x: &Tensor<T>,
    y: &Tensor<T>,
    loss_kind: LossKind,
    rng: &mut R,
    step: usize,
) -> Result<f64> {
    let trace = net.forward_train(x, rng)?;
    let (l, dl) = loss(trace.output(), y, loss_kind)?;
    let l = l.as_f64();
    if !l.is_finite() {
        return Err(Error::NanLoss {
            step,
            detail: format!("loss = {l}"),
        });
    }
    let (grads, _) = net.backward(&trace, &dl)?;
    if let Some(i) = grads.iter().position(|g| !g.all_finite()) {
        return Err(Error::NanLoss {
            step,
            detail: format!("non-finite gradient in parameter tensor {i}"),
        });
    }
    opt.step(&mut net.tensors_mut(), &grads)?;
    if let Some(i) = net.tensors().iter().position(|t| !t.all_finite()) {
        return Err(Error::NanLoss {
            step,
            detail: format!("non-finite weights in parameter tensor {i} after update"),
        });
    }
    Ok(l)
}

/// Trains `net` in place. The learning rate starts at the optimizer's value
/// and is halved by the plateau schedule; training ends after `epochs`,
/// `max_steps`, or a plateau stop, whichever comes first.
pub fn train<T: Real, R: Rng + ?Sized>(
    net: &mut Network<T>,
    data: &[TrainSample<T>],
    cfg: &TrainConfig,
    rng: &mut R,
    observer: &mut dyn TrainObserver<T>,
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    cfg.loss.validate()?;
    let mut opt = Optimizer::new(cfg.optimizer)?;
    let mut tracker = PlateauTracker::new(cfg.schedule);
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let max_steps = cfg.max_steps.unwrap_or(usize::MAX);

    'epochs: for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(rng);
        }
        for idx in order.chunks(cfg.batch_size) {
            if report.history.len() >= max_steps {
                break 'epochs;
            }
            let (x, y) = batch(data, idx)?;
            let step = report.history.len();
            let lr = opt.lr();
            let l = train_step(net, &mut opt, &x, &y, cfg.loss, rng, step)?;
            let entry = HistoryEntry {
                step,
                loss: l,
                lr,
                epoch,
            };
            observer.on_step(&entry);
            report.history.push(entry);
            match tracker.observe(l) {
                ScheduleAction::Continue => {}
                ScheduleAction::Halved => opt.set_lr(opt.lr() * 0.5),
                ScheduleAction::Stop => {
                    report.stopped_on_plateau = true;
                    report.epochs_completed = epoch + 1;
                    observer.on_epoch_end(epoch, net)?;
                    break 'epochs;
                }
            }
        }
        report.epochs_completed = epoch + 1;
        observer.on_epoch_end(epoch, net)?;
    }
    Ok(report)
}

/// Writes the history as JSON lines `{"step":..,"loss":..,"lr":..}`.
pub fn write_history(path: impl AsRef<Path>, history: &[HistoryEntry]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for h in history {
        serde_json::to_writer(&mut out, h)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
