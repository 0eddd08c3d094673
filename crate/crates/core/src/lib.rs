//! Document deskewing by corner regression.
//!
//! The crate is split into small layers:
//!
//! - [`homography`]: 3×3 projective transforms, DLT fitting, corner sets.
//! - [`imaging`]: a float image buffer, warping, blur kernels, lighting, I/O.
//! - [`datagen`]: the synthetic dataset factory with exact corner labels.
//! - [`nn`]: a CPU convolutional network with hand-written backward passes.
//! - [`eval`]: displacement metrics, dataset evaluation and rectification.

// Negated comparisons below are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod homography;
pub mod imaging;
pub mod nn;

pub use error::{Error, Result};
pub use homography::{corners_to_homography, solve_dlt, CornerSet, Homography, Point2};
pub use imaging::ImageBuffer;

/// The seeded generator used throughout the crate.
pub type SeededRng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    rand::SeedableRng::seed_from_u64(seed)
}

// The guide's code listings run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/homography.md")]
    mod homography {}
    #[doc = include_str!("../../../book/src/imaging.md")]
    mod imaging {}
    #[doc = include_str!("../../../book/src/datagen.md")]
    mod datagen {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
