//! The inner/outer training loop.
//!
//! One outer step, for `K` domains with parameters `θ`:
//!
//! 1. split each domain's mini-batch into meta-train and meta-test halves;
//! 2. per domain `k`, a hypothetical step `θₖ = θ - η ∇Lₖ(meta-trainₖ)`;
//! 3. per domain `k`, `Hₖ = Σⱼ Lⱼ(meta-testⱼ; θₖ)`;
//! 4. the weight policy records the outcome and returns weights `w`;
//! 5. commit `θ ← θ - η ∇ Σₖ wₖ Lₖ(batchₖ)` on the full mini-batches.
//!
//! Steps 2 and 3 are independent across domains and run in parallel with
//! the `parallel` feature; results are merged in domain order.

mod record;

use serde::{Deserialize, Serialize};

pub use record::{StepRecord, TrainRecord};

use crate::autodiff::{sgd_step, DomainObjective, GradVector, ParamVector};
use crate::lambda::{policy_for, UpdateRule, WeightPolicy};
use crate::parallel;
use crate::rng::{derive_seed, rng_from, stream};
use crate::synthetic::{Batcher, Dataset};
use crate::tensor::DomainBatch;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub eta: f64,
    /// Learning rate of the hypothetical steps; `None` reuses `eta`.
    pub inner_eta: Option<f64>,
    pub batch_size: usize,
    pub steps: usize,
    pub rule: UpdateRule,
    /// Prior concentration per domain: `(α, β)` for two domains.
    pub prior: Vec<f64>,
    pub window: usize,
    pub seed: u64,
    /// Fraction of each mini-batch used as meta-train.
    pub split_ratio: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta: 0.01,
            inner_eta: None,
            batch_size: 8,
            steps: 1000,
            rule: UpdateRule::Conservative,
            prior: vec![5.0, 5.0],
            window: 25,
            seed: 0,
            split_ratio: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::config(format!("learning rate {} must be positive", self.eta)));
        }
        if let Some(e) = self.inner_eta {
            if !(e >= 0.0 && e.is_finite()) {
                return Err(Error::config(format!("inner learning rate {e} must be >= 0")));
            }
        }
        if self.batch_size < 2 {
            return Err(Error::config("batch size must be at least 2 to split"));
        }
        if self.steps == 0 || self.window == 0 {
            return Err(Error::config("steps and window must be positive"));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::config(format!(
                "split ratio {} outside (0, 1)",
                self.split_ratio
            )));
        }
        self.rule.validate()
    }

    pub fn inner_eta(&self) -> f64 {
        self.inner_eta.unwrap_or(self.eta)
    }

    /// Seed of domain `k`'s mini-batch stream.
    pub fn batch_seed(&self, domain: usize) -> u64 {
        derive_seed(self.seed, stream::BATCH, domain as u64)
    }

    /// Seed of domain `k`'s meta split at `step`.
    pub fn split_seed(&self, step: usize, domain: usize) -> u64 {
        derive_seed(
            derive_seed(self.seed, stream::SPLIT, step as u64),
            stream::SPLIT,
            domain as u64,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaSplit {
    pub meta_train: DomainBatch,
    pub meta_test: DomainBatch,
}

/// Random partition of a batch into `round(n · ratio)` meta-train rows
/// (at least one, at most `n - 1`) and the rest as meta-test.
pub fn split_minibatch(batch: &DomainBatch, ratio: f64, seed: u64) -> Result<MetaSplit> {
    let n = batch.len();
    if n < 2 {
        return Err(Error::Split(n));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::config(format!("split ratio {ratio} outside (0, 1)")));
    }
    let n_train = ((n as f64 * ratio).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng_from(seed));
    Ok(MetaSplit {
        meta_train: batch.select(&order[..n_train]),
        meta_test: batch.select(&order[n_train..]),
    })
}

fn diverged(step: usize, reason: impl Into<String>, params: &ParamVector) -> Error {
    Error::Diverged {
        step,
        reason: reason.into(),
        last_params: Box::new(params.clone()),
    }
}

fn finite_grad(loss: f64, grad: &GradVector, what: &str) -> Result<()> {
    if loss.is_finite() && grad.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged {
            step: 0,
            reason: format!("non-finite {what}"),
            last_params: Box::default(),
        })
    }
}

/// One hypothetical SGD step on the split's meta-train half.
pub fn inner_step<O: DomainObjective + ?Sized>(
    objective: &O,
    params: &ParamVector,
    split: &MetaSplit,
    eta: f64,
) -> Result<ParamVector> {
    let (loss, grad) = objective.loss_and_grad(params, &split.meta_train)?;
    finite_grad(loss, &grad, "inner-step gradient")?;
    sgd_step(params, &grad, eta)
}

/// Sum over all domains of the domain loss on its meta-test batch, at the
/// hypothetical parameters.
pub fn hypothetical_loss<O: DomainObjective>(
    objectives: &[O],
    hypothetical: &ParamVector,
    meta_tests: &[DomainBatch],
) -> Result<f64> {
    if objectives.len() != meta_tests.len() {
        return Err(Error::shape(format!(
            "{} objectives vs {} meta-test batches",
            objectives.len(),
            meta_tests.len()
        )));
    }
    let mut total = 0.0;
    for (objective, batch) in objectives.iter().zip(meta_tests) {
        total += objective.loss(hypothetical, batch)?;
    }
    Ok(total)
}

fn check_weights(weights: &[f64], k: usize) -> Result<()> {
    let sum: f64 = weights.iter().sum();
    if weights.len() != k || weights.iter().any(|w| !(0.0..=1.0).contains(w)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("weights {weights:?} are not on the {k}-simplex")));
    }
    Ok(())
}

/// Outer update and per-domain full-batch losses at the old parameters.
fn outer_step_with_losses<O: DomainObjective>(
    objectives: &[O],
    params: &ParamVector,
    weights: &[f64],
    batches: &[DomainBatch],
    eta: f64,
) -> Result<(ParamVector, Vec<f64>)> {
    check_weights(weights, objectives.len())?;
    if batches.len() != objectives.len() {
        return Err(Error::shape(format!(
            "{} objectives vs {} batches",
            objectives.len(),
            batches.len()
        )));
    }
    let per_domain = parallel::try_map_indexed(objectives.len(), |k| {
        let (loss, grad) = objectives[k].loss_and_grad(params, &batches[k])?;
        finite_grad(loss, &grad, "outer gradient")?;
        Ok::<_, Error>((loss, grad))
    })?;
    let mut combined = GradVector::zeros(params.len());
    let mut losses = Vec::with_capacity(per_domain.len());
    for ((loss, grad), &w) in per_domain.iter().zip(weights) {
        combined.add_scaled(w, grad)?;
        losses.push(*loss);
    }
    Ok((sgd_step(params, &combined, eta)?, losses))
}

/// `θ - η ∇ Σₖ wₖ Lₖ(batchₖ)`, with the gradient of the weighted sum
/// formed as the weighted sum of per-domain gradients.
pub fn outer_step<O: DomainObjective>(
    objectives: &[O],
    params: &ParamVector,
    weights: &[f64],
    batches: &[DomainBatch],
    eta: f64,
) -> Result<ParamVector> {
    outer_step_with_losses(objectives, params, weights, batches, eta).map(|(p, _)| p)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ParamVector,
    pub record: TrainRecord,
}

/// Trains with the policy [`policy_for`] builds from `config`.
pub fn train<O: DomainObjective>(
    config: &TrainConfig,
    objectives: &[O],
    datasets: &[Dataset],
    init: ParamVector,
) -> Result<TrainOutcome> {
    config.validate()?;
    let policy = policy_for(&config.rule, &config.prior, config.window)?;
    train_with_policy(config, policy, objectives, datasets, init)
}

/// Runs `config.steps` outer steps from `init`. Dataset `k` feeds domain
/// `k` and is scored by `objectives[k]`.
///
/// On divergence the error carries the parameters after the last completed
/// outer step.
pub fn train_with_policy<O: DomainObjective>(
    config: &TrainConfig,
    mut policy: Box<dyn WeightPolicy>,
    objectives: &[O],
    datasets: &[Dataset],
    init: ParamVector,
) -> Result<TrainOutcome> {
    config.validate()?;
    let k = objectives.len();
    if k < 2 || datasets.len() != k || policy.num_domains() != k {
        return Err(Error::config(format!(
            "{k} objectives, {} datasets and a {}-domain policy do not line up",
            datasets.len(),
            policy.num_domains()
        )));
    }
    if let Some(o) = objectives.iter().find(|o| o.param_count() != init.len()) {
        return Err(Error::shape(format!(
            "objective expects {} parameters, initial vector has {}",
            o.param_count(),
            init.len()
        )));
    }
    let mut batchers = datasets
        .iter()
        .enumerate()
        .map(|(d, data)| Batcher::new(data, config.batch_size, config.batch_seed(d)))
        .collect::<Result<Vec<_>>>()?;

    let inner_eta = config.inner_eta();
    let mut params = init;
    let mut record = TrainRecord {
        steps: Vec::with_capacity(config.steps),
    };

    for step in 0..config.steps {
        let batches: Vec<DomainBatch> = batchers
            .iter_mut()
            .map(|b| b.next().expect("batcher is endless"))
            .collect();
        let splits = batches
            .iter()
            .enumerate()
            .map(|(d, b)| split_minibatch(b, config.split_ratio, config.split_seed(step, d)))
            .collect::<Result<Vec<_>>>()?;
        let meta_tests: Vec<DomainBatch> = splits.iter().map(|s| s.meta_test.clone()).collect();

        let at_step = |e: Error| match e {
            Error::Diverged { reason, .. } => diverged(step, reason, &params),
            other => other,
        };

        let hypothetical = parallel::try_map_indexed(k, |d| {
            let theta = inner_step(&objectives[d], &params, &splits[d], inner_eta)?;
            hypothetical_loss(objectives, &theta, &meta_tests)
        })
        .map_err(at_step)?;

        let obs = policy.observe(&hypothetical).map_err(at_step)?;
        if obs.weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(diverged(
                step,
                format!("weights {:?} left [0, 1]", obs.weights),
                &params,
            ));
        }

        let (next, losses) =
            outer_step_with_losses(objectives, &params, &obs.weights, &batches, config.eta).map_err(at_step)?;
        if !next.is_finite() {
            return Err(diverged(step, "non-finite parameters after outer step", &params));
        }
        params = next;
        record.steps.push(StepRecord {
            step,
            weights: obs.weights,
            outcome: obs.outcome,
            hypothetical,
            losses,
        });
    }

    Ok(TrainOutcome { params, record })
}

/// Both sides of the first-order approximation
/// `H_A - H_B ≈ η (‖∇L_B‖² - ‖∇L_A‖²)`, with meta-train and meta-test both
/// taken as the full batch of each domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorResidual {
    pub lhs: f64,
    pub rhs: f64,
}

impl TaylorResidual {
    pub fn residual(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }
}

pub fn taylor_residual<O: DomainObjective>(
    objectives: &[O],
    params: &ParamVector,
    batches: &[DomainBatch],
    eta: f64,
) -> Result<TaylorResidual> {
    if objectives.len() != 2 || batches.len() != 2 {
        return Err(Error::config("the Taylor diagnostic compares exactly two domains"));
    }
    let (_, grad_a) = objectives[0].loss_and_grad(params, &batches[0])?;
    let (_, grad_b) = objectives[1].loss_and_grad(params, &batches[1])?;
    let theta_a = sgd_step(params, &grad_a, eta)?;
    let theta_b = sgd_step(params, &grad_b, eta)?;
    let h_a = hypothetical_loss(objectives, &theta_a, batches)?;
    let h_b = hypothetical_loss(objectives, &theta_b, batches)?;
    Ok(TaylorResidual {
        lhs: h_a - h_b,
        rhs: eta * (grad_b.norm_squared() - grad_a.norm_squared()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Matrix;

    /// `L(θ) = ½‖θ‖²`, independent of the batch.
    struct HalfSquare;

    impl DomainObjective for HalfSquare {
        fn param_count(&self) -> usize {
            1
        }

        fn loss(&self, p: &ParamVector, _: &DomainBatch) -> Result<f64> {
            Ok(0.5 * p.norm_squared())
        }

        fn loss_and_grad(&self, p: &ParamVector, b: &DomainBatch) -> Result<(f64, GradVector)> {
            Ok((self.loss(p, b)?, GradVector::new(p.as_slice().to_vec())))
        }
    }

    struct Constant(f64);

    impl DomainObjective for Constant {
        fn param_count(&self) -> usize {
            1
        }

        fn loss(&self, _: &ParamVector, _: &DomainBatch) -> Result<f64> {
            Ok(self.0)
        }

        fn loss_and_grad(&self, p: &ParamVector, _: &DomainBatch) -> Result<(f64, GradVector)> {
            Ok((self.0, GradVector::zeros(p.len())))
        }
    }

    fn batch(n: usize, domain: usize) -> DomainBatch {
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        DomainBatch::new(
            domain,
            Matrix::new(n, 1, x.clone()).unwrap(),
            Matrix::new(n, 1, vec![0.0; n]).unwrap(),
        )
        .unwrap()
    }

    fn ids(b: &DomainBatch) -> Vec<usize> {
        b.inputs.as_slice().iter().map(|&v| v as usize).collect()
    }

    #[test]
    fn split_examples() {
        let b = batch(8, 0);
        let s = split_minibatch(&b, 0.5, 1).unwrap();
        assert_eq!((s.meta_train.len(), s.meta_test.len()), (4, 4));
        let mut all = ids(&s.meta_train);
        all.extend(ids(&s.meta_test));
        all.sort_unstable();
        assert_eq!(all, (0..8).collect::<Vec<_>>());

        let s2 = split_minibatch(&batch(2, 0), 0.5, 1).unwrap();
        assert_eq!((s2.meta_train.len(), s2.meta_test.len()), (1, 1));
        assert_eq!(split_minibatch(&b, 0.5, 1).unwrap(), s);
        assert!(matches!(split_minibatch(&batch(1, 0), 0.5, 1), Err(Error::Split(1))));
        // extreme ratios still leave one row per side
        let s3 = split_minibatch(&b, 0.01, 3).unwrap();
        assert_eq!(s3.meta_train.len(), 1);
    }

    #[test]
    fn inner_step_examples() {
        let split = split_minibatch(&batch(4, 0), 0.5, 0).unwrap();
        let p = ParamVector::new(vec![2.0]);
        assert_eq!(inner_step(&HalfSquare, &p, &split, 0.0).unwrap(), p);
        let stepped = inner_step(&HalfSquare, &p, &split, 0.1).unwrap();
        assert!((stepped.as_slice()[0] - 1.8).abs() < 1e-15);
        assert_eq!(p.as_slice(), &[2.0]);
    }

    #[test]
    fn hypothetical_loss_sums_domains() {
        let objectives = [Constant(1.25), Constant(2.5)];
        let tests = [batch(2, 0), batch(2, 1)];
        assert_eq!(
            hypothetical_loss(&objectives, &ParamVector::zeros(1), &tests).unwrap(),
            3.75
        );
        let three = [Constant(1.0), Constant(2.0), Constant(4.0)];
        let tests3 = [batch(2, 0), batch(2, 1), batch(2, 2)];
        assert_eq!(hypothetical_loss(&three, &ParamVector::zeros(1), &tests3).unwrap(), 7.0);
        assert!(hypothetical_loss(&three, &ParamVector::zeros(1), &tests).is_err());
    }

    #[test]
    fn outer_step_rejects_off_simplex_weights() {
        let objectives = [HalfSquare, HalfSquare];
        let batches = [batch(2, 0), batch(2, 1)];
        let p = ParamVector::new(vec![1.0]);
        assert!(outer_step(&objectives, &p, &[0.7, 0.7], &batches, 0.1).is_err());
        assert!(outer_step(&objectives, &p, &[1.2, -0.2], &batches, 0.1).is_err());
        let q = outer_step(&objectives, &p, &[0.3, 0.7], &batches, 0.1).unwrap();
        assert!((q.as_slice()[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig {
                eta: 0.0,
                ..Default::default()
            },
            TrainConfig {
                batch_size: 1,
                ..Default::default()
            },
            TrainConfig {
                split_ratio: 1.0,
                ..Default::default()
            },
            TrainConfig {
                window: 0,
                ..Default::default()
            },
            TrainConfig {
                rule: UpdateRule::Fixed { lambda: 2.0 },
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }
}
