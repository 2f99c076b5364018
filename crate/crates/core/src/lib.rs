//! Multi-domain learning with a dynamically estimated convex loss weighting.
//!
//! A single differentiable model is trained on `K` domains that share one
//! task. At every step the trainer takes one hypothetical gradient step per
//! domain on a meta-train split, scores each hypothetical model on the
//! meta-test splits of all domains, turns the comparison into a categorical
//! outcome, and sets the loss weights to the MAP estimate of a
//! Beta–Bernoulli (or Dirichlet–Multinomial) model over a sliding window of
//! those outcomes. The committed update is plain SGD on the weighted loss.
//!
//! Modules:
//!
//! - [`autodiff`]: parameter vectors, a small MLP family with exact
//!   reverse-mode gradients, SGD, finite differences and checkpoints.
//! - [`losses`]: cross-entropy, soft Dice, their combination, DSC and AUC.
//! - [`lambda`]: outcome rules, windowed MAP estimation and baselines.
//! - [`trainer`]: the inner/outer training loop and the Taylor diagnostic.
//! - [`synthetic`]: paired toy segmentation domains and batching.
//! - [`harness`]: experiment matrix, aggregation and result files.
//!
//! With the default `parallel` feature, independent work (per-domain inner
//! steps, matrix runs, sample synthesis, finite-difference coordinates) is
//! spread over rayon's pool. Every parallel result is merged in index order,
//! so output is bit-identical with the feature turned off.

pub mod autodiff;
pub mod error;
pub mod harness;
pub mod lambda;
pub mod losses;
pub mod parallel;
pub mod rng;
pub mod synthetic;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
