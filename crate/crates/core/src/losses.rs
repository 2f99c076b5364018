//! Segmentation losses and evaluation metrics.
//!
//! Losses pool every element of a mini-batch into one prediction vector
//! `p` and one binary target vector `y`. The combined loss is
//!
//! ```text
//! L(p, y) = -(1/n) Σ [yᵢ ln pᵢ + (1 - yᵢ) ln(1 - pᵢ)]  -  yᵀp / (Σyᵢ + Σpᵢ)
//! ```
//!
//! The Dice term is kept without the usual factor 2, so it lies in `[0, 1/2]`.
//! Probabilities inside the logarithms are clamped to `[ε, 1 - ε]`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_CLAMP_EPS: f64 = 1e-7;

/// Borrowed predictions and binary targets of equal length.
#[derive(Debug, Clone, Copy)]
pub struct PredTargetPair<'a> {
    p: &'a [f64],
    y: &'a [f64],
}

impl<'a> PredTargetPair<'a> {
    pub fn new(p: &'a [f64], y: &'a [f64]) -> Result<Self> {
        if p.len() != y.len() {
            return Err(Error::shape(format!("{} predictions vs {} targets", p.len(), y.len())));
        }
        if let Some(v) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::shape(format!("target {v} is not binary")));
        }
        Ok(Self { p, y })
    }

    pub fn p(&self) -> &'a [f64] {
        self.p
    }

    pub fn y(&self) -> &'a [f64] {
        self.y
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// True when `Σy + Σp = 0`, where the Dice term is defined as 0.
    pub fn is_dice_degenerate(&self) -> bool {
        dice_denominator(self) == 0.0
    }
}

fn dice_denominator(pair: &PredTargetPair<'_>) -> f64 {
    pair.y.iter().sum::<f64>() + pair.p.iter().sum::<f64>()
}

fn clamp(p: f64, eps: f64) -> f64 {
    p.clamp(eps, 1.0 - eps)
}

/// Mean binary cross-entropy (negative log-likelihood).
pub fn bce(pair: &PredTargetPair<'_>) -> f64 {
    bce_eps(pair, DEFAULT_CLAMP_EPS)
}

fn bce_eps(pair: &PredTargetPair<'_>, eps: f64) -> f64 {
    if pair.is_empty() {
        return 0.0;
    }
    let total: f64 = pair
        .p
        .iter()
        .zip(pair.y)
        .map(|(&p, &y)| {
            let p = clamp(p, eps);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    total / pair.len() as f64
}

fn bce_grad(pair: &PredTargetPair<'_>, eps: f64) -> Vec<f64> {
    let n = pair.len() as f64;
    pair.p
        .iter()
        .zip(pair.y)
        .map(|(&p, &y)| {
            // clamp has zero derivative outside its band
            if p < eps || p > 1.0 - eps {
                0.0
            } else {
                -(y / p - (1.0 - y) / (1.0 - p)) / n
            }
        })
        .collect()
}

/// `yᵀp / (Σy + Σp)`; returns 0 on a degenerate (all-zero) pair.
pub fn soft_dice_term(pair: &PredTargetPair<'_>) -> f64 {
    let denom = dice_denominator(pair);
    if denom == 0.0 {
        return 0.0;
    }
    let overlap: f64 = pair.p.iter().zip(pair.y).map(|(p, y)| p * y).sum();
    overlap / denom
}

fn soft_dice_grad(pair: &PredTargetPair<'_>) -> Vec<f64> {
    let denom = dice_denominator(pair);
    if denom == 0.0 {
        return vec![0.0; pair.len()];
    }
    let overlap: f64 = pair.p.iter().zip(pair.y).map(|(p, y)| p * y).sum();
    let shared = overlap / (denom * denom);
    pair.y.iter().map(|&y| y / denom - shared).collect()
}

/// Cross-entropy minus the soft Dice term.
pub fn combined_loss(pair: &PredTargetPair<'_>) -> f64 {
    bce(pair) - soft_dice_term(pair)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Bce,
    SoftDice,
    BcePlusDice,
}

/// A differentiable loss over pooled probabilities.
///
/// `SoftDice` as a loss is the negated Dice term, so that every kind is
/// minimized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossFn {
    pub kind: LossKind,
    pub clamp_eps: f64,
}

impl LossFn {
    pub fn new(kind: LossKind) -> Self {
        Self {
            kind,
            clamp_eps: DEFAULT_CLAMP_EPS,
        }
    }

    pub fn value(&self, pair: &PredTargetPair<'_>) -> f64 {
        match self.kind {
            LossKind::Bce => bce_eps(pair, self.clamp_eps),
            LossKind::SoftDice => -soft_dice_term(pair),
            LossKind::BcePlusDice => bce_eps(pair, self.clamp_eps) - soft_dice_term(pair),
        }
    }

    /// Loss value and its gradient with respect to each prediction.
    pub fn value_and_grad(&self, pair: &PredTargetPair<'_>) -> (f64, Vec<f64>) {
        let value = self.value(pair);
        let grad = match self.kind {
            LossKind::Bce => bce_grad(pair, self.clamp_eps),
            LossKind::SoftDice => soft_dice_grad(pair).into_iter().map(|g| -g).collect(),
            LossKind::BcePlusDice => bce_grad(pair, self.clamp_eps)
                .into_iter()
                .zip(soft_dice_grad(pair))
                .map(|(a, b)| a - b)
                .collect(),
        };
        (value, grad)
    }
}

fn check_binary(name: &str, v: &[f64]) -> Result<()> {
    match v.iter().find(|&&x| x != 0.0 && x != 1.0) {
        Some(x) => Err(Error::shape(format!("{name} value {x} is not binary"))),
        None => Ok(()),
    }
}

/// Thresholds scores at `threshold` (inclusive) into a {0,1} mask.
pub fn binarize(scores: &[f64], threshold: f64) -> Vec<f64> {
    scores.iter().map(|&s| if s >= threshold { 1.0 } else { 0.0 }).collect()
}

/// Dice similarity `2TP / (2TP + FP + FN)`. Two empty masks score 1.
pub fn dsc_metric(pred: &[f64], y: &[f64]) -> Result<f64> {
    if pred.len() != y.len() {
        return Err(Error::shape(format!(
            "{} predictions vs {} targets",
            pred.len(),
            y.len()
        )));
    }
    check_binary("prediction", pred)?;
    check_binary("target", y)?;
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.iter().zip(y) {
        match (p == 1.0, t == 1.0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        return Ok(1.0);
    }
    Ok((2 * tp) as f64 / denom as f64)
}

/// Area under the ROC curve via the rank-sum statistic; tied scores share
/// their average rank, so a tied positive/negative pair counts one half.
pub fn auc_metric(scores: &[f64], y: &[f64]) -> Result<f64> {
    if scores.len() != y.len() {
        return Err(Error::shape(format!("{} scores vs {} targets", scores.len(), y.len())));
    }
    check_binary("target", y)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::UndefinedMetric("NaN score".into()));
    }
    let n_pos = y.iter().filter(|&&v| v == 1.0).count();
    let n_neg = y.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUC needs both positive and negative targets".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; the tie block i..=j shares the mean rank
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if y[k] == 1.0 {
                pos_rank_sum += mean_rank;
            }
        }
        i = j + 1;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Ok((pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pair<'a>(p: &'a [f64], y: &'a [f64]) -> PredTargetPair<'a> {
        PredTargetPair::new(p, y).unwrap()
    }

    #[test]
    fn bce_examples() {
        assert_abs_diff_eq!(bce(&pair(&[0.5, 0.5], &[1.0, 0.0])), 2f64.ln(), epsilon = 1e-12);
        let perfect = bce(&pair(&[1.0, 0.0], &[1.0, 0.0]));
        assert_abs_diff_eq!(perfect, -(1.0 - DEFAULT_CLAMP_EPS).ln(), epsilon = 1e-15);
        assert!(perfect < 2e-7);
        assert_abs_diff_eq!(
            bce(&pair(&[0.9, 0.1], &[1.0, 0.0])),
            0.105_360_515_657_826_3,
            epsilon = 1e-12
        );
    }

    #[test]
    fn dice_examples() {
        assert_abs_diff_eq!(soft_dice_term(&pair(&[1.0, 1.0, 0.0, 0.0], &[1.0, 1.0, 0.0, 0.0])), 0.5);
        assert_eq!(soft_dice_term(&pair(&[0.0, 1.0], &[1.0, 0.0])), 0.0);
        assert_abs_diff_eq!(
            soft_dice_term(&pair(&[0.5, 0.5, 0.5], &[1.0, 1.0, 0.0])),
            1.0 / 3.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn dice_degenerate_is_zero_and_flagged() {
        let pr = pair(&[0.0, 0.0], &[0.0, 0.0]);
        assert!(pr.is_dice_degenerate());
        assert_eq!(soft_dice_term(&pr), 0.0);
        let (_, g) = LossFn::new(LossKind::SoftDice).value_and_grad(&pr);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn combined_examples() {
        let perfect = combined_loss(&pair(&[1.0, 0.0, 1.0, 0.0], &[1.0, 0.0, 1.0, 0.0]));
        assert_abs_diff_eq!(perfect, -0.5, epsilon = 1e-6);
        let n = 10;
        let p = vec![0.5; n];
        let y: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        assert_abs_diff_eq!(combined_loss(&pair(&p, &y)), 2f64.ln() - 0.25, epsilon = 1e-12);
        let worst = combined_loss(&pair(&[0.0, 1.0], &[1.0, 0.0]));
        assert_abs_diff_eq!(worst, -DEFAULT_CLAMP_EPS.ln(), epsilon = 1e-6);
    }

    #[test]
    fn rejects_bad_pairs() {
        assert!(PredTargetPair::new(&[0.5], &[1.0, 0.0]).is_err());
        assert!(PredTargetPair::new(&[0.5], &[0.5]).is_err());
    }

    #[test]
    fn dsc_examples() {
        assert_eq!(dsc_metric(&[1.0, 0.0, 1.0], &[1.0, 0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(dsc_metric(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(dsc_metric(&[1.0, 1.0, 0.0, 0.0], &[1.0, 0.0, 1.0, 0.0]).unwrap(), 0.5);
        assert_eq!(dsc_metric(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert!(dsc_metric(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn auc_examples() {
        let y = [0.0, 0.0, 1.0, 1.0];
        assert_eq!(auc_metric(&y, &y).unwrap(), 1.0);
        let inv: Vec<f64> = y.iter().map(|v| 1.0 - v).collect();
        assert_eq!(auc_metric(&inv, &y).unwrap(), 0.0);
        assert_abs_diff_eq!(auc_metric(&[0.1, 0.4, 0.35, 0.8], &y).unwrap(), 0.75);
        // all tied -> 0.5
        assert_eq!(auc_metric(&[0.3; 4], &y).unwrap(), 0.5);
        assert!(matches!(
            auc_metric(&[0.1, 0.2], &[1.0, 1.0]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    fn brute_auc(s: &[f64], y: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                if y[i] == 1.0 && y[j] == 0.0 {
                    den += 1.0;
                    num += if s[i] > s[j] {
                        1.0
                    } else if s[i] == s[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    fn scores_and_labels() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec(0u8..6, n).prop_map(|v| v.into_iter().map(|k| k as f64 / 5.0).collect()),
                prop::collection::vec(prop::bool::ANY, n)
                    .prop_map(|v| v.into_iter().map(|b| b as u8 as f64).collect::<Vec<f64>>())
                    .prop_filter("both classes", |y: &Vec<f64>| y.contains(&1.0) && y.contains(&0.0)),
            )
        })
    }

    proptest! {
        #[test]
        fn auc_matches_pair_enumeration((s, y) in scores_and_labels()) {
            prop_assert!((auc_metric(&s, &y).unwrap() - brute_auc(&s, &y)).abs() < 1e-12);
        }

        #[test]
        fn auc_invariant_under_monotone_maps((s, y) in scores_and_labels()) {
            let t: Vec<f64> = s.iter().map(|v| (3.0 * v - 1.0).exp()).collect();
            prop_assert_eq!(auc_metric(&s, &y).unwrap(), auc_metric(&t, &y).unwrap());
        }

        #[test]
        fn loss_bounds(p in prop::collection::vec(0.0f64..=1.0, 1..50), seed in any::<u64>()) {
            let y: Vec<f64> = p.iter().enumerate().map(|(i, _)| ((seed >> (i % 64)) & 1) as f64).collect();
            let pr = PredTargetPair::new(&p, &y).unwrap();
            prop_assert!(bce(&pr) >= 0.0);
            let d = soft_dice_term(&pr);
            prop_assert!((0.0..=0.5).contains(&d));
            prop_assert!(combined_loss(&pr) >= -0.5);
        }

        #[test]
        fn dsc_symmetric(bits in prop::collection::vec((prop::bool::ANY, prop::bool::ANY), 1..60)) {
            let a: Vec<f64> = bits.iter().map(|b| b.0 as u8 as f64).collect();
            let b: Vec<f64> = bits.iter().map(|b| b.1 as u8 as f64).collect();
            let ab = dsc_metric(&a, &b).unwrap();
            prop_assert_eq!(ab, dsc_metric(&b, &a).unwrap());
            prop_assert_eq!(ab == 1.0, a == b);
        }
    }
}
