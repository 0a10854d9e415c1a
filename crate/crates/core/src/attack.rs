//! Threshold membership inference on explanation variances.

use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledVariances {
    values: Vec<f64>,
    labels: Vec<bool>,
}

impl LabeledVariances {
    pub fn new(values: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if values.len() != labels.len() {
            return Err(GameError::InvalidSeries {
                index: values.len().min(labels.len()),
                reason: format!("{} values but {} labels", values.len(), labels.len()),
            });
        }
        if let Some(i) = values.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(GameError::InvalidSeries {
                index: i,
                reason: format!("variance {} is not positive", values[i]),
            });
        }
        Ok(Self { values, labels })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tpr: f64,
    pub threshold: f64,
    pub n_members: usize,
    pub n_nonmembers: usize,
    /// False-positive rate over non-members; only set when there are any.
    pub aux_fpr: Option<f64>,
}

/// A point is flagged as a training member when its explanation variance is
/// at most `tau_e`.
pub fn decide_membership(variance: f64, tau_e: f64) -> bool {
    variance <= tau_e
}

pub fn evaluate_mia(data: &LabeledVariances, threshold: f64) -> Result<AttackResult> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(GameError::InvalidParameter {
            name: "attack.threshold",
            value: threshold,
            reason: "must be positive",
        });
    }
    let (mut tp, mut fn_, mut fp, mut tn) = (0, 0, 0, 0);
    for (&v, &member) in data.values.iter().zip(&data.labels) {
        match (member, decide_membership(v, threshold)) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
        }
    }
    let n_members = tp + fn_;
    if n_members == 0 {
        return Err(GameError::NoMembers);
    }
    let n_nonmembers = fp + tn;
    Ok(AttackResult {
        tp,
        fn_,
        tpr: tp as f64 / n_members as f64,
        threshold,
        n_members,
        n_nonmembers,
        aux_fpr: (n_nonmembers > 0).then(|| fp as f64 / n_nonmembers as f64),
    })
}
