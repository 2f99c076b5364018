//! Differentiable-model substrate.
//!
//! The trainer only relies on the [`DomainObjective`] contract: a scalar
//! loss on a batch and its exact gradient with respect to a flat
//! [`ParamVector`]. [`MlpObjective`] provides that contract for the MLP
//! family in [`model`]; tests plug in closed-form objectives.

pub mod checkpoint;
pub mod finite_diff;
pub mod model;
mod objective;
mod params;

pub use finite_diff::{finite_diff_grad, finite_diff_objective, max_relative_error};
pub use model::{forward, init_params, loss_and_grad, Activation, ModelSpec, OutputActivation};
pub use objective::{DomainObjective, MlpObjective};
pub use params::{sgd_step, GradVector, ParamVector};
