//! A small from-scratch CNN engine with hand-written backward passes.
//!
//! Layers are pure functions in [`ops`]; [`Network`] strings them together,
//! keeps the parameters, and records a [`Trace`] during training so that
//! [`Network::backward`] can replay the chain rule.

pub mod io;
pub mod loss;
pub mod network;
pub mod ops;
pub mod optim;
pub mod tensor;
pub mod train;

pub use io::{load_model, save_model, weights_digest};
pub use loss::{loss, LossKind};
pub use network::{
    he_init, image_to_tensor, InputShape, LayerSpec, Network, NetworkConfig, Params, Trace,
};
pub use optim::{Optimizer, OptimizerKind, PlateauSchedule};
pub use tensor::{Real, Tensor};
pub use train::{
    train, write_history, HistoryEntry, TrainConfig, TrainObserver, TrainReport, TrainSample,
};

/// Builds the corner-regression architecture with He-initialized weights.
pub fn build_paper_net<R: rand::Rng + ?Sized>(
    cfg: NetworkConfig,
    rng: &mut R,
) -> crate::Result<Network<f32>> {
    Network::new(cfg, rng)
}
