//! Operating-point selection and the financial cost model.
//!
//! The tuner picks the score threshold maximizing precision subject
//! to a minimum true-positive rate, optionally after multiplying
//! scores by transaction amounts so that expensive fraud dominates
//! the choice. The cost model prices a false positive at the lost
//! interchange fee on the half of blocked sales assumed not to retry,
//! and a false negative at full reimbursement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion counts plus derived rates at a fixed threshold. Rates
/// whose denominator is zero are reported as `None`; the counts are
/// always valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

/// Predicted positive iff score >= gamma.
pub fn confusion_at(scores: &[f64], labels: &[bool], gamma: f64) -> Result<Confusion> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= gamma, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    let tpr = ratio(tp, tp + fn_);
    let precision = ratio(tp, tp + fp);
    let f1 = match (precision, tpr) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Ok(Confusion {
        tp,
        fp,
        tn,
        fn_,
        tpr,
        fpr: ratio(fp, fp + tn),
        precision,
        recall: tpr,
        f1,
    })
}

/// The chosen threshold and the metrics it achieves on the tune set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub gamma: f64,
    pub target_tpr: f64,
    /// False when no candidate threshold reaches the target rate; the
    /// returned gamma then maximizes tpr instead.
    pub feasible: bool,
    pub amount_weighted: bool,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

/// Pick the threshold maximizing precision subject to tpr >= target.
///
/// Candidates are the distinct observed scores: every metric is a
/// step function of gamma, so nothing between two scores can do
/// better. Precision ties go to the larger gamma (fewer alerts). When
/// no candidate reaches the target, the largest gamma achieving the
/// maximal tpr is returned with `feasible = false`.
pub fn tune_threshold(scores: &[f64], labels: &[bool], target_tpr: f64) -> Result<OperatingPoint> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("scores contain NaN".into()));
    }
    if !(target_tpr > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target tpr must be positive, got {target_tpr}"
        )));
    }
    let n_pos = labels.iter().filter(|&&y| y).count() as f64;
    if n_pos == 0.0 {
        return Err(Error::InvalidArgument(
            "cannot tune a threshold without positive examples".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut best_feasible: Option<(f64, f64)> = None; // (precision, gamma)
    let mut best_tpr: (f64, f64) = (-1.0, f64::NAN); // (tpr, gamma)
    let (mut tp, mut fp) = (0.0f64, 0.0f64);
    let mut i = 0;
    while i < order.len() {
        let gamma = scores[order[i]];
        // Consume the whole tie group so counts reflect `score >= gamma`.
        while i < order.len() && scores[order[i]] == gamma {
            if labels[order[i]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        let tpr = tp / n_pos;
        let precision = tp / (tp + fp);
        if tpr > best_tpr.0 {
            best_tpr = (tpr, gamma);
        }
        if tpr >= target_tpr && best_feasible.map(|(p, _)| precision > p).unwrap_or(true) {
            best_feasible = Some((precision, gamma));
        }
    }

    let (feasible, gamma) = match best_feasible {
        Some((_, g)) => (true, g),
        None => (false, best_tpr.1),
    };
    let conf = confusion_at(scores, labels, gamma)?;
    Ok(OperatingPoint {
        gamma,
        target_tpr,
        feasible,
        amount_weighted: false,
        tpr: conf.tpr,
        fpr: conf.fpr,
        precision: conf.precision,
        recall: conf.recall,
        f1: conf.f1,
    })
}

/// Scale each score by its transaction amount; thresholds are then
/// tuned and applied in the weighted space.
pub fn amount_weight(scores: &[f64], amounts: &[f64]) -> Result<Vec<f64>> {
    if scores.len() != amounts.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores vs {} amounts",
            scores.len(),
            amounts.len()
        )));
    }
    if let Some(bad) = amounts.iter().find(|&&a| !(a > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "amounts must be positive to weight scores, got {bad}"
        )));
    }
    Ok(scores.iter().zip(amounts).map(|(&s, &a)| s * a).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostConstants {
    /// Interchange fee lost on a blocked legitimate sale.
    pub interchange_fee: f64,
    /// Share of blocked sales that do not go through on a retry.
    pub lost_sale_share: f64,
}

impl Default for CostConstants {
    fn default() -> Self {
        CostConstants {
            interchange_fee: 0.0175,
            lost_sale_share: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub fp_count: u64,
    pub fn_count: u64,
    pub cost_fp: f64,
    pub cost_fn: f64,
    pub total: f64,
}

/// Price the errors: blocked legitimate sales forfeit the interchange
/// fee on the share assumed lost; missed fraud is reimbursed in full.
pub fn cost_model(
    predictions: &[bool],
    labels: &[bool],
    amounts: &[f64],
    constants: &CostConstants,
) -> Result<CostReport> {
    if predictions.len() != labels.len() || labels.len() != amounts.len() {
        return Err(Error::InvalidArgument(
            "predictions, labels, and amounts must be aligned".into(),
        ));
    }
    if let Some(bad) = amounts.iter().find(|&&a| a < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "amounts must be nonnegative, got {bad}"
        )));
    }
    let (mut fp_count, mut fn_count) = (0u64, 0u64);
    let (mut fp_amount, mut fn_amount) = (0.0f64, 0.0f64);
    for i in 0..labels.len() {
        match (predictions[i], labels[i]) {
            (true, false) => {
                fp_count += 1;
                fp_amount += amounts[i];
            }
            (false, true) => {
                fn_count += 1;
                fn_amount += amounts[i];
            }
            _ => {}
        }
    }
    let cost_fp = constants.interchange_fee * constants.lost_sale_share * fp_amount;
    let cost_fn = fn_amount;
    Ok(CostReport {
        fp_count,
        fn_count,
        cost_fp,
        cost_fn,
        total: cost_fp + cost_fn,
    })
}
