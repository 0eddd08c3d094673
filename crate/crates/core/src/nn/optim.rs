//! First-order optimizers and the plateau learning-rate schedule.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
    #[serde(rename = "rmsprop")]
    RmsProp { lr: f64, decay: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam(lr: f64) -> Self {
        OptimizerKind::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn rmsprop(lr: f64) -> Self {
        OptimizerKind::RmsProp {
            lr,
            decay: 0.9,
            eps: 1e-8,
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerKind::Adam { lr, .. } | OptimizerKind::RmsProp { lr, .. } => lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lr = self.lr();
        // lr == 0 is accepted: a frozen run leaves every parameter untouched
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be >= 0, got {lr}"
            )));
        }
        match *self {
            OptimizerKind::Adam {
                beta1, beta2, eps, ..
            } => {
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) {
                    return Err(Error::invalid(
                        "Adam needs beta1, beta2 in [0,1) and eps > 0",
                    ));
                }
            }
            OptimizerKind::RmsProp { decay, eps, .. } => {
                if !(0.0..1.0).contains(&decay) || !(eps > 0.0) {
                    return Err(Error::invalid("RMSProp needs decay in [0,1) and eps > 0"));
                }
            }
        }
        Ok(())
    }
}

impl Default for OptimizerKind {
    fn default() -> Self {
        Self::adam(5e-4)
    }
}

/// Halves the learning rate when the windowed mean loss stops improving and
/// signals a stop once it has flattened out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauSchedule {
    pub enabled: bool,
    /// Steps per comparison window for halving.
    pub halve_window: usize,
    /// Halve when `(prev_mean - cur_mean) / |prev_mean|` falls below this.
    pub halve_rel: f64,
    pub stop_window: usize,
    /// Stop when `|prev_mean - cur_mean| / |prev_mean|` falls below this.
    pub stop_rel: f64,
}

impl Default for PlateauSchedule {
    fn default() -> Self {
        Self {
            enabled: true,
            halve_window: 200,
            halve_rel: 1e-3,
            stop_window: 300,
            stop_rel: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleAction {
    Continue,
    Halved,
    Stop,
}

#[derive(Debug, Clone)]
pub struct PlateauTracker {
    cfg: PlateauSchedule,
    recent: VecDeque<f64>,
    since_change: usize,
}

fn window_means(buf: &VecDeque<f64>, w: usize) -> Option<(f64, f64)> {
    if w == 0 || buf.len() < 2 * w {
        return None;
    }
    let n = buf.len();
    let prev = buf.range(n - 2 * w..n - w).sum::<f64>() / w as f64;
    let cur = buf.range(n - w..).sum::<f64>() / w as f64;
    Some((prev, cur))
}

impl PlateauTracker {
    pub fn new(cfg: PlateauSchedule) -> Self {
        Self {
            cfg,
            recent: VecDeque::new(),
            since_change: 0,
        }
    }

    /// Records one step loss and reports what the schedule wants.
    pub fn observe(&mut self, loss: f64) -> ScheduleAction {
        if !self.cfg.enabled {
            return ScheduleAction::Continue;
        }
        let cap = 2 * self.cfg.halve_window.max(self.cfg.stop_window);
        self.recent.push_back(loss);
        while self.recent.len() > cap {
            self.recent.pop_front();
        }
        self.since_change += 1;

        if let Some((prev, cur)) = window_means(&self.recent, self.cfg.stop_window) {
            if prev != 0.0 && ((prev - cur) / prev).abs() < self.cfg.stop_rel {
                return ScheduleAction::Stop;
            }
        }
        if self.since_change >= 2 * self.cfg.halve_window {
            if let Some((prev, cur)) = window_means(&self.recent, self.cfg.halve_window) {
                if prev != 0.0 && (prev - cur) / prev.abs() < self.cfg.halve_rel {
                    self.since_change = 0;
                    return ScheduleAction::Halved;
                }
            }
        }
        ScheduleAction::Continue
    }
}

/// Optimizer with per-tensor moment state.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    lr: f64,
    t: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Real> Optimizer<T> {
    pub fn new(kind: OptimizerKind) -> Result<Self> {
        kind.validate()?;
        Ok(Self {
            kind,
            lr: kind.lr(),
            t: 0,
            first: Vec::new(),
            second: Vec::new(),
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update. `grads[i]` must match `params[i]` in shape.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameter tensors, {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
            self.second = self.first.clone();
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "parameter {:?} vs gradient {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
        }
        self.t += 1;
        let lr = T::lit(self.lr);
        match self.kind {
            OptimizerKind::Adam {
                beta1, beta2, eps, ..
            } => {
                let (b1, b2) = (T::lit(beta1), T::lit(beta2));
                let c1 = T::lit(1.0 - beta1.powi(self.t as i32));
                let c2 = T::lit(1.0 - beta2.powi(self.t as i32));
                let eps = T::lit(eps);
                for ((p, g), (m, v)) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(self.first.iter_mut().zip(self.second.iter_mut()))
                {
                    for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v)
                    {
                        *mi = b1 * *mi + (T::one() - b1) * gi;
                        *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                        let mhat = *mi / c1;
                        let vhat = *vi / c2;
                        *w -= lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
            OptimizerKind::RmsProp { decay, eps, .. } => {
                let rho = T::lit(decay);
                let eps = T::lit(eps);
                for ((p, g), v) in params.iter_mut().zip(grads).zip(self.second.iter_mut()) {
                    for ((w, &gi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(v) {
                        *vi = rho * *vi + (T::one() - rho) * gi * gi;
                        *w -= lr * gi / (vi.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
