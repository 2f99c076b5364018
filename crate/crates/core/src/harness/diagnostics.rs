//! Self-checks behind the `map-check` and `taylor-check` commands.

use rand::Rng;
use serde::Serialize;

use crate::autodiff::{init_params, Activation, MlpObjective, ModelSpec, OutputActivation, ParamVector};
use crate::lambda::LambdaState;
use crate::losses::{LossFn, LossKind};
use crate::parallel;
use crate::rng::{derive_seed, rng_from, stream};
use crate::tensor::{DomainBatch, Matrix};
use crate::trainer::taylor_residual;
use crate::Result;

/// Mode of the Beta(α + N, β + T - N) posterior found by scanning λ on a
/// uniform grid of the given step over the open unit interval.
pub fn grid_posterior_mode(alpha: f64, beta: f64, window: usize, successes: usize, step: f64) -> f64 {
    let a = alpha + successes as f64 - 1.0;
    let b = beta + (window - successes) as f64 - 1.0;
    let points = (1.0 / step).round() as usize;
    let mut best = (f64::NEG_INFINITY, 0.5);
    for i in 1..points {
        let l = i as f64 * step;
        let v = a * l.ln() + b * (1.0 - l).ln();
        if v > best.0 {
            best = (v, l);
        }
    }
    best.1
}

#[derive(Debug, Clone, Serialize)]
pub struct MapCase {
    pub alpha: f64,
    pub beta: f64,
    pub window: usize,
    pub successes: usize,
    pub closed_form: f64,
    pub grid: f64,
}

impl MapCase {
    pub fn error(&self) -> f64 {
        (self.closed_form - self.grid).abs()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MapCheckReport {
    pub cases: Vec<MapCase>,
    pub tolerance: f64,
    pub max_error: f64,
}

impl MapCheckReport {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

/// Compares the windowed MAP estimate against a grid search over random
/// `α, β ∈ (1, 10]`, `T ∈ [1, 200]`, `N ∈ [0, T]` with a full window.
pub fn map_check(cases: usize, seed: u64, grid_step: f64, tolerance: f64) -> Result<MapCheckReport> {
    let cases = parallel::try_map_indexed(cases, |i| {
        let mut rng = rng_from(derive_seed(seed, stream::DIAGNOSTIC, i as u64));
        let alpha = 10.0 - rng.random_range(0.0..9.0);
        let beta = 10.0 - rng.random_range(0.0..9.0);
        let window = rng.random_range(1..=200);
        let successes = rng.random_range(0..=window);
        let state = (0..window).fold(LambdaState::new(alpha, beta, window)?, |s, j| s.record(j < successes));
        Ok::<_, crate::Error>(MapCase {
            alpha,
            beta,
            window,
            successes,
            closed_form: state.map_estimate(),
            grid: grid_posterior_mode(alpha, beta, window, successes, grid_step),
        })
    })?;
    let max_error = cases.iter().map(MapCase::error).fold(0.0, f64::max);
    Ok(MapCheckReport {
        cases,
        tolerance,
        max_error,
    })
}

/// A small random two-domain problem for the Taylor diagnostic.
#[derive(Debug, Clone)]
pub struct TaylorInstance {
    pub objective: MlpObjective,
    pub params: ParamVector,
    pub batches: [DomainBatch; 2],
}

impl TaylorInstance {
    /// A tanh MLP with sigmoid outputs; domain B's inputs are rescaled so the
    /// two domains have different gradient norms.
    pub fn random(seed: u64) -> Result<Self> {
        let mut rng = rng_from(derive_seed(seed, stream::DIAGNOSTIC, 0));
        let spec = ModelSpec {
            input_dim: 4,
            hidden: vec![rng.random_range(3..=6)],
            output_dim: 2,
            activation: Activation::Tanh,
            output: OutputActivation::Sigmoid,
        };
        let objective = MlpObjective::new(spec, LossFn::new(LossKind::BcePlusDice))?;
        let params = init_params(objective.spec(), derive_seed(seed, stream::INIT, 0))?;
        let scale_b = rng.random_range(0.3..2.0);
        let mut batch = |domain: usize, scale: f64| -> Result<DomainBatch> {
            let rows = 6;
            let x: Vec<f64> = (0..rows * 4).map(|_| scale * rng.random_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..rows * 2)
                .map(|_| f64::from(u8::from(rng.random_bool(0.4))))
                .collect();
            DomainBatch::new(domain, Matrix::new(rows, 4, x)?, Matrix::new(rows, 2, y)?)
        };
        let batches = [batch(0, 1.0)?, batch(1, scale_b)?];
        Ok(Self {
            objective,
            params,
            batches,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TaylorRow {
    pub instance: usize,
    pub etas: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `residual[i] / residual[i + 1]`.
    pub ratios: Vec<f64>,
}

impl TaylorRow {
    /// Whether `H_A - H_B` and its first-order approximation agree in sign
    /// at the smallest step size.
    pub fn sign_agrees(&self) -> bool {
        let (l, r) = (*self.lhs.last().unwrap_or(&0.0), *self.rhs.last().unwrap_or(&0.0));
        l.signum() == r.signum()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TaylorReport {
    pub rows: Vec<TaylorRow>,
}

impl TaylorReport {
    pub fn ratios_within(&self, lo: f64, hi: f64) -> bool {
        self.rows.iter().all(|r| r.ratios.iter().all(|q| (lo..=hi).contains(q)))
    }

    pub fn sign_agreements(&self) -> usize {
        self.rows.iter().filter(|r| r.sign_agrees()).count()
    }
}

/// Evaluates the Taylor residual at each step size for `instances` random
/// problems.
pub fn taylor_check(etas: &[f64], instances: usize, seed: u64) -> Result<TaylorReport> {
    let rows = parallel::try_map_indexed(instances, |i| {
        let inst = TaylorInstance::random(derive_seed(seed, stream::DIAGNOSTIC, i as u64))?;
        let objectives = [inst.objective.clone(), inst.objective.clone()];
        let mut lhs = Vec::with_capacity(etas.len());
        let mut rhs = Vec::with_capacity(etas.len());
        for &eta in etas {
            let t = taylor_residual(&objectives, &inst.params, &inst.batches, eta)?;
            lhs.push(t.lhs);
            rhs.push(t.rhs);
        }
        let residuals: Vec<f64> = lhs.iter().zip(&rhs).map(|(l, r)| (l - r).abs()).collect();
        let ratios = residuals.windows(2).map(|w| w[0] / w[1]).collect();
        Ok::<_, crate::Error>(TaylorRow {
            instance: i,
            etas: etas.to_vec(),
            lhs,
            rhs,
            residuals,
            ratios,
        })
    })?;
    Ok(TaylorReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_finds_known_modes() {
        assert!((grid_posterior_mode(5.0, 5.0, 25, 12, 1e-5) - 16.0 / 33.0).abs() < 1e-4);
        assert!((grid_posterior_mode(5.0, 5.0, 2, 1, 1e-4) - 0.5).abs() < 1e-4);
    }

    #[test]
    fn small_map_check_passes() {
        let report = map_check(20, 3, 1e-5, 1e-4).unwrap();
        assert_eq!(report.cases.len(), 20);
        assert!(report.passed(), "{}", report.max_error);
    }

    #[test]
    fn taylor_instances_are_deterministic() {
        let a = TaylorInstance::random(4).unwrap();
        let b = TaylorInstance::random(4).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.batches, b.batches);
    }
}
