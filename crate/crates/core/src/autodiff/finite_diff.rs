//! Central finite differences, used as the gradient oracle in tests and
//! diagnostics.

use super::objective::DomainObjective;
use super::params::{GradVector, ParamVector};
use crate::parallel;
use crate::tensor::DomainBatch;
use crate::Result;

/// Central-difference gradient of `f` at `params`, one coordinate at a time.
pub fn finite_diff_grad<F>(f: F, params: &ParamVector, epsilon: f64) -> GradVector
where
    F: Fn(&ParamVector) -> f64 + Sync + Send,
{
    let values = parallel::map_indexed(params.len(), |i| {
        let mut plus = params.clone();
        plus.as_mut_slice()[i] += epsilon;
        let mut minus = params.clone();
        minus.as_mut_slice()[i] -= epsilon;
        (f(&plus) - f(&minus)) / (2.0 * epsilon)
    });
    GradVector::new(values)
}

/// [`finite_diff_grad`] applied to an objective's batch loss.
pub fn finite_diff_objective<O: DomainObjective + ?Sized>(
    objective: &O,
    params: &ParamVector,
    batch: &DomainBatch,
    epsilon: f64,
) -> Result<GradVector> {
    // surface shape errors before the per-coordinate loop
    objective.loss(params, batch)?;
    Ok(finite_diff_grad(
        |p| objective.loss(p, batch).unwrap_or(f64::NAN),
        params,
        epsilon,
    ))
}

/// `max_i |aᵢ - bᵢ| / max(|aᵢ|, |bᵢ|, floor)`.
///
/// The floor keeps coordinates whose true gradient is essentially zero
/// from dominating through rounding noise.
pub fn max_relative_error(a: &GradVector, b: &GradVector, floor: f64) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let g = finite_diff_grad(|p| p.as_slice()[0].powi(2), &ParamVector::new(vec![3.0]), 1e-4);
        assert!((g.as_slice()[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn zero_function_zero_gradient() {
        let g = finite_diff_grad(|_| 0.0, &ParamVector::new(vec![1.0, -2.0, 5.0]), 1e-5);
        assert_eq!(g.as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn relative_error_floor() {
        let a = GradVector::new(vec![1.0, 1e-12]);
        let b = GradVector::new(vec![1.0 + 1e-6, 2e-12]);
        let e = max_relative_error(&a, &b, 1e-6);
        assert!((e - 1e-6 / (1.0 + 1e-6)).abs() < 1e-12);
    }
}
