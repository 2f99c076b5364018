//! Loss-weight estimation from hypothetical losses.
//!
//! Each outer step yields one hypothetical loss `H_k` per domain: the total
//! meta-test loss over all domains after a trial step on domain `k` alone.
//! An outcome rule turns the `H_k` into a categorical outcome (which
//! domain's direction was best), and the weights are the posterior mode of
//! a Beta–Bernoulli (two domains) or Dirichlet–Multinomial (K domains)
//! model over the last `T` outcomes:
//!
//! ```text
//! λ = (α + N - 1) / (α + β + n - 2)          wₖ = (αₖ + Nₖ - 1) / (Σⱼ αⱼ + n - K)
//! ```
//!
//! where `n ≤ T` is the number of outcomes currently in the window.
//!
//! Two-domain conventions: domain 0 is "A", and `Λ = 1` means A's direction
//! was chosen. λ is the weight on A's loss.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_GAMMA: f64 = 0.1;

/// How hypothetical losses turn into an outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    /// Prefer the domain whose trial step left the lowest total loss.
    Greedy,
    /// Prefer the domain whose trial step left the highest total loss.
    Conservative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UpdateRule {
    Greedy,
    Conservative,
    /// Heuristic `λ ← λ + γ (H_A - H_B) / |H_A|`.
    Simple {
        gamma: f64,
    },
    /// Constant λ on domain A.
    Fixed {
        lambda: f64,
    },
}

impl UpdateRule {
    pub fn simple_greedy() -> Self {
        UpdateRule::Simple { gamma: -DEFAULT_GAMMA }
    }

    pub fn simple_conservative() -> Self {
        UpdateRule::Simple { gamma: DEFAULT_GAMMA }
    }

    pub fn fixed(lambda: f64) -> Result<Self> {
        let rule = UpdateRule::Fixed { lambda };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            UpdateRule::Fixed { lambda } if !(0.0..=1.0).contains(&lambda) => {
                Err(Error::config(format!("fixed λ {lambda} outside [0, 1]")))
            }
            UpdateRule::Simple { gamma } if !gamma.is_finite() => Err(Error::config("simple-rule γ must be finite")),
            _ => Ok(()),
        }
    }

    pub fn choice(&self) -> Option<Choice> {
        match self {
            UpdateRule::Greedy => Some(Choice::Greedy),
            UpdateRule::Conservative => Some(Choice::Conservative),
            _ => None,
        }
    }
}

fn check_finite(h: &[f64]) -> Result<()> {
    if h.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Diverged {
            step: 0,
            reason: format!("non-finite hypothetical loss in {h:?}"),
            last_params: Box::default(),
        })
    }
}

/// Two-domain outcome `Λ`. Greedy: `Λ = 1` iff `H_B > H_A`. Conservative:
/// `Λ = 1` iff `H_A > H_B`. Ties give `Λ = 0` under both.
///
/// A non-finite loss yields [`Error::Diverged`] with step 0; the trainer
/// rewrites the step.
pub fn choose_outcome(choice: Choice, h_a: f64, h_b: f64) -> Result<bool> {
    check_finite(&[h_a, h_b])?;
    Ok(match choice {
        Choice::Greedy => h_b > h_a,
        Choice::Conservative => h_a > h_b,
    })
}

/// K-domain outcome as a 0-based domain index. Greedy picks the argmin of
/// `H`, conservative the argmax; the lowest index wins ties.
pub fn choose_outcome_k(choice: Choice, h: &[f64]) -> Result<usize> {
    if h.len() < 2 {
        return Err(Error::config("need at least two domains"));
    }
    check_finite(h)?;
    let mut best = 0;
    for (k, &v) in h.iter().enumerate().skip(1) {
        let better = match choice {
            Choice::Greedy => v < h[best],
            Choice::Conservative => v > h[best],
        };
        if better {
            best = k;
        }
    }
    Ok(best)
}

/// Windowed Bernoulli outcomes under a Beta(α, β) prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaState {
    alpha: f64,
    beta: f64,
    window: usize,
    history: VecDeque<bool>,
}

impl LambdaState {
    /// Requires `α > 1`, `β > 1` (interior posterior mode) and `T ≥ 1`.
    pub fn new(alpha: f64, beta: f64, window: usize) -> Result<Self> {
        if !(alpha > 1.0 && beta > 1.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::config(format!(
                "Beta prior needs α > 1 and β > 1, got ({alpha}, {beta})"
            )));
        }
        if window == 0 {
            return Err(Error::config("window length must be positive"));
        }
        Ok(Self {
            alpha,
            beta,
            window,
            history: VecDeque::with_capacity(window),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn history(&self) -> impl ExactSizeIterator<Item = bool> + '_ {
        self.history.iter().copied()
    }

    /// `N`: number of `Λ = 1` outcomes in the window.
    pub fn successes(&self) -> usize {
        self.history.iter().filter(|&&o| o).count()
    }

    /// Appends an outcome, dropping the oldest once the window is full.
    #[must_use]
    pub fn record(mut self, outcome: bool) -> Self {
        self.push(outcome);
        self
    }

    fn push(&mut self, outcome: bool) {
        self.history.push_back(outcome);
        if self.history.len() > self.window {
            self.history.pop_front();
        }
    }

    /// Posterior mode `(α + N - 1) / (α + β + n - 2)`, `n` the number of
    /// outcomes held (at most `T`).
    pub fn map_estimate(&self) -> f64 {
        let n = self.history.len() as f64;
        let hits = self.successes() as f64;
        ((self.alpha + hits - 1.0) / (self.alpha + self.beta + n - 2.0)).clamp(0.0, 1.0)
    }
}

/// Windowed categorical outcomes under a Dirichlet prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletState {
    alphas: Vec<f64>,
    window: usize,
    history: VecDeque<usize>,
}

impl DirichletState {
    pub fn new(alphas: Vec<f64>, window: usize) -> Result<Self> {
        if alphas.len() < 2 {
            return Err(Error::config("Dirichlet prior needs at least two categories"));
        }
        if let Some(a) = alphas.iter().find(|&&a| !(a > 1.0 && a.is_finite())) {
            return Err(Error::config(format!("Dirichlet concentration {a} must exceed 1")));
        }
        if window == 0 {
            return Err(Error::config("window length must be positive"));
        }
        Ok(Self {
            alphas,
            window,
            history: VecDeque::with_capacity(window),
        })
    }

    pub fn categories(&self) -> usize {
        self.alphas.len()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.alphas.len()];
        for &k in &self.history {
            counts[k] += 1;
        }
        counts
    }

    pub fn record(mut self, category: usize) -> Result<Self> {
        self.push(category)?;
        Ok(self)
    }

    fn push(&mut self, category: usize) -> Result<()> {
        if category >= self.alphas.len() {
            return Err(Error::config(format!(
                "category {category} out of range for {} domains",
                self.alphas.len()
            )));
        }
        self.history.push_back(category);
        if self.history.len() > self.window {
            self.history.pop_front();
        }
        Ok(())
    }

    /// Posterior mode on the simplex.
    pub fn map_estimate(&self) -> Vec<f64> {
        let k = self.alphas.len() as f64;
        let n = self.history.len() as f64;
        let denom = self.alphas.iter().sum::<f64>() + n - k;
        self.alphas
            .iter()
            .zip(self.counts())
            .map(|(a, c)| (a + c as f64 - 1.0) / denom)
            .collect()
    }
}

/// One step of the Simple heuristic, clamped to `[0, 1]`. When `H_A = 0`
/// the update is skipped.
pub fn simple_update(gamma: f64, lambda: f64, h_a: f64, h_b: f64) -> Result<f64> {
    check_finite(&[h_a, h_b])?;
    if h_a == 0.0 {
        return Ok(lambda);
    }
    Ok((lambda + gamma * (h_a - h_b) / h_a.abs()).clamp(0.0, 1.0))
}

/// What a policy did with one step's hypothetical losses.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Chosen domain (0-based), for outcome-driven policies.
    pub outcome: Option<usize>,
    /// Loss weights to use for this step's outer update.
    pub weights: Vec<f64>,
}

/// Turns each step's hypothetical losses into loss weights.
pub trait WeightPolicy: Send {
    fn num_domains(&self) -> usize;

    /// Current weights on the simplex.
    fn weights(&self) -> Vec<f64>;

    /// Consumes this step's hypothetical losses and returns the weights for
    /// the same step's outer update.
    fn observe(&mut self, hypothetical: &[f64]) -> Result<Observation>;
}

fn check_len(expected: usize, h: &[f64]) -> Result<()> {
    if h.len() != expected {
        return Err(Error::shape(format!(
            "expected {expected} hypothetical losses, got {}",
            h.len()
        )));
    }
    Ok(())
}

/// Constant weights.
#[derive(Debug, Clone)]
pub struct FixedPolicy {
    weights: Vec<f64>,
}

impl FixedPolicy {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if weights.len() < 2 || weights.iter().any(|w| !(0.0..=1.0).contains(w)) || (sum - 1.0).abs() > 1e-12 {
            return Err(Error::config(format!("{weights:?} is not a point on the simplex")));
        }
        Ok(Self { weights })
    }

    pub fn two_domain(lambda: f64) -> Result<Self> {
        Self::new(vec![lambda, 1.0 - lambda])
    }
}

impl WeightPolicy for FixedPolicy {
    fn num_domains(&self) -> usize {
        self.weights.len()
    }

    fn weights(&self) -> Vec<f64> {
        self.weights.clone()
    }

    fn observe(&mut self, hypothetical: &[f64]) -> Result<Observation> {
        check_len(self.weights.len(), hypothetical)?;
        Ok(Observation {
            outcome: None,
            weights: self.weights.clone(),
        })
    }
}

/// The Simple heuristic baseline (two domains). The updated λ is used for
/// the same step's outer update.
#[derive(Debug, Clone)]
pub struct SimplePolicy {
    lambda: f64,
    gamma: f64,
}

impl SimplePolicy {
    pub fn new(gamma: f64, initial_lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&initial_lambda) || !gamma.is_finite() {
            return Err(Error::config("Simple rule needs λ₀ in [0, 1] and finite γ"));
        }
        Ok(Self {
            lambda: initial_lambda,
            gamma,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl WeightPolicy for SimplePolicy {
    fn num_domains(&self) -> usize {
        2
    }

    fn weights(&self) -> Vec<f64> {
        vec![self.lambda, 1.0 - self.lambda]
    }

    fn observe(&mut self, hypothetical: &[f64]) -> Result<Observation> {
        check_len(2, hypothetical)?;
        self.lambda = simple_update(self.gamma, self.lambda, hypothetical[0], hypothetical[1])?;
        Ok(Observation {
            outcome: None,
            weights: self.weights(),
        })
    }
}

/// Two-domain MAP policy over Bernoulli outcomes.
#[derive(Debug, Clone)]
pub struct BetaPolicy {
    choice: Choice,
    state: LambdaState,
}

impl BetaPolicy {
    pub fn new(choice: Choice, state: LambdaState) -> Self {
        Self { choice, state }
    }

    pub fn state(&self) -> &LambdaState {
        &self.state
    }
}

impl WeightPolicy for BetaPolicy {
    fn num_domains(&self) -> usize {
        2
    }

    fn weights(&self) -> Vec<f64> {
        let l = self.state.map_estimate();
        vec![l, 1.0 - l]
    }

    fn observe(&mut self, hypothetical: &[f64]) -> Result<Observation> {
        check_len(2, hypothetical)?;
        let lam = choose_outcome(self.choice, hypothetical[0], hypothetical[1])?;
        self.state.push(lam);
        Ok(Observation {
            outcome: Some(if lam { 0 } else { 1 }),
            weights: self.weights(),
        })
    }
}

/// K-domain MAP policy over categorical outcomes.
#[derive(Debug, Clone)]
pub struct DirichletPolicy {
    choice: Choice,
    state: DirichletState,
}

impl DirichletPolicy {
    pub fn new(choice: Choice, state: DirichletState) -> Self {
        Self { choice, state }
    }

    pub fn state(&self) -> &DirichletState {
        &self.state
    }
}

impl WeightPolicy for DirichletPolicy {
    fn num_domains(&self) -> usize {
        self.state.categories()
    }

    fn weights(&self) -> Vec<f64> {
        self.state.map_estimate()
    }

    fn observe(&mut self, hypothetical: &[f64]) -> Result<Observation> {
        check_len(self.state.categories(), hypothetical)?;
        let k = choose_outcome_k(self.choice, hypothetical)?;
        self.state.push(k)?;
        Ok(Observation {
            outcome: Some(k),
            weights: self.weights(),
        })
    }
}

/// Builds the policy for `rule`. `prior` holds one concentration per
/// domain. With two domains, MAP rules use the Beta form with
/// `(α, β) = (prior[0], prior[1])`; with more, the Dirichlet form.
pub fn policy_for(rule: &UpdateRule, prior: &[f64], window: usize) -> Result<Box<dyn WeightPolicy>> {
    rule.validate()?;
    let k = prior.len();
    if k < 2 {
        return Err(Error::config("need at least two domains"));
    }
    Ok(match *rule {
        UpdateRule::Fixed { lambda } if k == 2 => Box::new(FixedPolicy::two_domain(lambda)?),
        UpdateRule::Fixed { .. } => {
            return Err(Error::config("a scalar fixed λ only defines two-domain weights"));
        }
        UpdateRule::Simple { gamma } if k == 2 => Box::new(SimplePolicy::new(gamma, 0.5)?),
        UpdateRule::Simple { .. } => {
            return Err(Error::config("the Simple rule is defined for two domains only"));
        }
        UpdateRule::Greedy | UpdateRule::Conservative => {
            let choice = rule.choice().expect("MAP rule");
            if k == 2 {
                Box::new(BetaPolicy::new(choice, LambdaState::new(prior[0], prior[1], window)?))
            } else {
                Box::new(DirichletPolicy::new(
                    choice,
                    DirichletState::new(prior.to_vec(), window)?,
                ))
            }
        }
    })
}

/// Dirichlet-form policy even for two domains; used to cross-check the
/// Beta path.
pub fn dirichlet_policy_for(rule: &UpdateRule, prior: &[f64], window: usize) -> Result<Box<dyn WeightPolicy>> {
    let choice = rule
        .choice()
        .ok_or_else(|| Error::config("Dirichlet policy needs a greedy or conservative rule"))?;
    Ok(Box::new(DirichletPolicy::new(
        choice,
        DirichletState::new(prior.to_vec(), window)?,
    )))
}

/// Current λ for a two-domain rule: the fixed value, the Simple state, or
/// the MAP estimate of `state`.
pub fn current_lambda(rule: &UpdateRule, state: &LambdaState, simple_lambda: f64) -> f64 {
    match *rule {
        UpdateRule::Fixed { lambda } => lambda,
        UpdateRule::Simple { .. } => simple_lambda,
        UpdateRule::Greedy | UpdateRule::Conservative => state.map_estimate(),
    }
}
