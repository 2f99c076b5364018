//! Fully connected networks with hand-written reverse-mode gradients.
//!
//! Parameter layout, layer by layer from the input side: the weight matrix
//! row-major as `(out, in)`, then the `out` biases.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{GradVector, ParamVector};
use crate::losses::{LossFn, PredTargetPair};
use crate::rng::rng_from;
use crate::tensor::{DomainBatch, Matrix};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Sigmoid,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_dim: usize,
    /// Hidden layer widths; empty for a single affine layer.
    #[serde(default)]
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    pub output: OutputActivation,
}

impl ModelSpec {
    pub fn linear(input_dim: usize, output_dim: usize, output: OutputActivation) -> Self {
        Self {
            input_dim,
            hidden: Vec::new(),
            output_dim,
            activation: Activation::Tanh,
            output,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::config("input and output dimensions must be positive"));
        }
        if let Some(i) = self.hidden.iter().position(|&w| w == 0) {
            return Err(Error::config(format!("hidden layer {i} has zero width")));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` for every layer.
    pub fn layers(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(self.input_dim);
        dims.extend(&self.hidden);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|(i, o)| i * o + o).sum()
    }

    fn check_params(&self, params: &ParamVector) -> Result<()> {
        self.validate()?;
        if params.len() != self.param_count() {
            return Err(Error::shape(format!(
                "model needs {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        Ok(())
    }

    fn check_inputs(&self, inputs: &Matrix) -> Result<()> {
        if inputs.cols() != self.input_dim {
            return Err(Error::shape(format!(
                "model takes {} input columns, got {}",
                self.input_dim,
                inputs.cols()
            )));
        }
        Ok(())
    }
}

/// Weights uniform in `[-a, a]` with `a = sqrt(6 / (fan_in + fan_out))`;
/// biases zero.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<ParamVector> {
    spec.validate()?;
    let mut rng = rng_from(seed);
    let mut values = Vec::with_capacity(spec.param_count());
    for (fan_in, fan_out) in spec.layers() {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        values.extend((0..fan_in * fan_out).map(|_| rng.random_range(-a..=a)));
        values.extend(std::iter::repeat_n(0.0, fan_out));
    }
    Ok(ParamVector::new(values))
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Activations of every layer for one example; `acts[0]` is the input.
fn forward_trace(spec: &ModelSpec, params: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
    let layers = spec.layers();
    let last = layers.len() - 1;
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(x.to_vec());
    let mut offset = 0;
    for (l, &(fan_in, fan_out)) in layers.iter().enumerate() {
        let w = &params[offset..offset + fan_in * fan_out];
        let b = &params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
        offset += fan_in * fan_out + fan_out;
        let prev = &acts[l];
        let out: Vec<f64> = (0..fan_out)
            .map(|o| {
                let z = b[o]
                    + w[o * fan_in..(o + 1) * fan_in]
                        .iter()
                        .zip(prev)
                        .map(|(wi, xi)| wi * xi)
                        .sum::<f64>();
                if l == last {
                    match spec.output {
                        OutputActivation::Sigmoid => sigmoid(z),
                        OutputActivation::Identity => z,
                    }
                } else {
                    match spec.activation {
                        Activation::Relu => z.max(0.0),
                        Activation::Tanh => z.tanh(),
                    }
                }
            })
            .collect();
        acts.push(out);
    }
    acts
}

/// Accumulates `d loss / d params` for one example into `grad`, given the
/// activation trace and `d loss / d output`.
fn backward_into(spec: &ModelSpec, params: &[f64], acts: &[Vec<f64>], d_out: &[f64], grad: &mut [f64]) {
    let layers = spec.layers();
    let last = layers.len() - 1;
    let mut offsets = Vec::with_capacity(layers.len());
    let mut offset = 0;
    for &(fan_in, fan_out) in &layers {
        offsets.push(offset);
        offset += fan_in * fan_out + fan_out;
    }

    let out = &acts[last + 1];
    let mut delta: Vec<f64> = match spec.output {
        OutputActivation::Sigmoid => d_out.iter().zip(out).map(|(g, y)| g * y * (1.0 - y)).collect(),
        OutputActivation::Identity => d_out.to_vec(),
    };

    for l in (0..=last).rev() {
        let (fan_in, fan_out) = layers[l];
        let off = offsets[l];
        let prev = &acts[l];
        for o in 0..fan_out {
            let d = delta[o];
            if d == 0.0 {
                continue;
            }
            let row = &mut grad[off + o * fan_in..off + (o + 1) * fan_in];
            for (g, x) in row.iter_mut().zip(prev) {
                *g += d * x;
            }
            grad[off + fan_in * fan_out + o] += d;
        }
        if l == 0 {
            break;
        }
        let w = &params[off..off + fan_in * fan_out];
        delta = (0..fan_in)
            .map(|i| {
                let back: f64 = (0..fan_out).map(|o| w[o * fan_in + i] * delta[o]).sum();
                let a = prev[i];
                match spec.activation {
                    Activation::Relu => {
                        if a > 0.0 {
                            back
                        } else {
                            0.0
                        }
                    }
                    Activation::Tanh => back * (1.0 - a * a),
                }
            })
            .collect();
    }
}

/// Per-example outputs, one row per input row.
pub fn forward(spec: &ModelSpec, params: &ParamVector, inputs: &Matrix) -> Result<Matrix> {
    spec.check_params(params)?;
    spec.check_inputs(inputs)?;
    let mut out = Vec::with_capacity(inputs.rows() * spec.output_dim);
    for r in 0..inputs.rows() {
        let mut acts = forward_trace(spec, params.as_slice(), inputs.row(r));
        out.append(acts.last_mut().expect("at least one layer"));
    }
    Matrix::new(inputs.rows(), spec.output_dim, out)
}

fn check_labels(spec: &ModelSpec, batch: &DomainBatch) -> Result<()> {
    spec.check_inputs(&batch.inputs)?;
    if batch.labels.cols() != spec.output_dim {
        return Err(Error::shape(format!(
            "model emits {} outputs, labels have {} columns",
            spec.output_dim,
            batch.labels.cols()
        )));
    }
    if batch.is_empty() {
        return Err(Error::shape("empty batch"));
    }
    Ok(())
}

/// Batch loss only; cheaper than [`loss_and_grad`].
pub fn loss(spec: &ModelSpec, params: &ParamVector, batch: &DomainBatch, loss: &LossFn) -> Result<f64> {
    check_labels(spec, batch)?;
    let out = forward(spec, params, &batch.inputs)?;
    let pair = PredTargetPair::new(out.as_slice(), batch.labels.as_slice())?;
    Ok(loss.value(&pair))
}

/// Loss pooled over every output of the batch, and its exact gradient.
///
/// The loss is not assumed to decompose over examples (the Dice term
/// does not), so the forward pass runs over the whole batch first and the
/// per-output loss gradient is then pushed back through each example.
pub fn loss_and_grad(
    spec: &ModelSpec,
    params: &ParamVector,
    batch: &DomainBatch,
    loss: &LossFn,
) -> Result<(f64, GradVector)> {
    spec.check_params(params)?;
    check_labels(spec, batch)?;
    let traces: Vec<Vec<Vec<f64>>> = (0..batch.len())
        .map(|r| forward_trace(spec, params.as_slice(), batch.inputs.row(r)))
        .collect();
    let outputs: Vec<f64> = traces
        .iter()
        .flat_map(|t| t.last().expect("at least one layer").iter().copied())
        .collect();
    let pair = PredTargetPair::new(&outputs, batch.labels.as_slice())?;
    let (value, d_out) = loss.value_and_grad(&pair);

    let mut grad = vec![0.0; params.len()];
    let k = spec.output_dim;
    for (r, trace) in traces.iter().enumerate() {
        backward_into(spec, params.as_slice(), trace, &d_out[r * k..(r + 1) * k], &mut grad);
    }
    Ok((value, GradVector::new(grad)))
}
