use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Flat model parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(Vec<f64>);

/// Gradient paired with a [`ParamVector`] of the same length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradVector(Vec<f64>);

macro_rules! flat_vector {
    ($name:ident) => {
        impl $name {
            pub fn new(values: Vec<f64>) -> Self {
                Self(values)
            }

            pub fn zeros(len: usize) -> Self {
                Self(vec![0.0; len])
            }

            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.0
            }

            pub fn as_mut_slice(&mut self) -> &mut [f64] {
                &mut self.0
            }

            pub fn into_vec(self) -> Vec<f64> {
                self.0
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|v| v.is_finite())
            }

            pub fn norm_squared(&self) -> f64 {
                self.0.iter().map(|v| v * v).sum()
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(values: Vec<f64>) -> Self {
                Self(values)
            }
        }
    };
}

flat_vector!(ParamVector);
flat_vector!(GradVector);

impl GradVector {
    /// `self += weight * other`.
    pub fn add_scaled(&mut self, weight: f64, other: &GradVector) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::shape(format!(
                "gradient lengths {} and {}",
                self.len(),
                other.len()
            )));
        }
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += weight * b;
        }
        Ok(())
    }
}

/// Returns `params - eta * grad`.
pub fn sgd_step(params: &ParamVector, grad: &GradVector, eta: f64) -> Result<ParamVector> {
    if params.len() != grad.len() {
        return Err(Error::shape(format!(
            "{} parameters vs {} gradient entries",
            params.len(),
            grad.len()
        )));
    }
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::config(format!("learning rate {eta} must be finite and >= 0")));
    }
    Ok(ParamVector(
        params.0.iter().zip(&grad.0).map(|(p, g)| p - eta * g).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_examples() {
        let p = ParamVector::new(vec![1.0, 1.0]);
        assert_eq!(sgd_step(&p, &GradVector::zeros(2), 0.1).unwrap(), p);

        let p = ParamVector::new(vec![1.0, 2.0]);
        let g = GradVector::new(vec![1.0, -1.0]);
        assert_eq!(sgd_step(&p, &g, 0.5).unwrap().as_slice(), &[0.5, 2.5]);
        assert_eq!(p.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn two_steps_with_constant_grads_add_up() {
        let p = ParamVector::new(vec![0.25, -1.0, 3.0]);
        let g1 = GradVector::new(vec![0.5, 0.25, -1.0]);
        let g2 = GradVector::new(vec![-0.25, 1.0, 0.5]);
        let eta = 0.5;
        let two = sgd_step(&sgd_step(&p, &g1, eta).unwrap(), &g2, eta).unwrap();
        let mut sum = g1.clone();
        sum.add_scaled(1.0, &g2).unwrap();
        assert_eq!(two, sgd_step(&p, &sum, eta).unwrap());
    }

    #[test]
    fn shape_mismatch() {
        assert!(sgd_step(&ParamVector::zeros(2), &GradVector::zeros(3), 0.1).is_err());
        assert!(GradVector::zeros(2).add_scaled(1.0, &GradVector::zeros(1)).is_err());
    }
}
