use super::model::{self, ModelSpec, OutputActivation};
use super::params::{GradVector, ParamVector};
use crate::losses::LossFn;
use crate::tensor::DomainBatch;
use crate::{Error, Result};

/// A per-domain training objective: a scalar loss of the parameters on a
/// batch, with its exact gradient. This is everything the meta-trainer
/// needs to know about a model.
pub trait DomainObjective: Sync {
    fn param_count(&self) -> usize;

    fn loss(&self, params: &ParamVector, batch: &DomainBatch) -> Result<f64>;

    fn loss_and_grad(&self, params: &ParamVector, batch: &DomainBatch) -> Result<(f64, GradVector)>;
}

/// An MLP from [`ModelSpec`] scored by a [`LossFn`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpObjective {
    spec: ModelSpec,
    loss: LossFn,
}

impl MlpObjective {
    pub fn new(spec: ModelSpec, loss: LossFn) -> Result<Self> {
        spec.validate()?;
        if spec.output != OutputActivation::Sigmoid {
            return Err(Error::config("probability losses need a sigmoid output layer"));
        }
        Ok(Self { spec, loss })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn loss_fn(&self) -> &LossFn {
        &self.loss
    }
}

impl DomainObjective for MlpObjective {
    fn param_count(&self) -> usize {
        self.spec.param_count()
    }

    fn loss(&self, params: &ParamVector, batch: &DomainBatch) -> Result<f64> {
        model::loss(&self.spec, params, batch, &self.loss)
    }

    fn loss_and_grad(&self, params: &ParamVector, batch: &DomainBatch) -> Result<(f64, GradVector)> {
        model::loss_and_grad(&self.spec, params, batch, &self.loss)
    }
}
