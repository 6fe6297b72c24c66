//! ROC curves with humans as the positive class: a participant is called
//! human when their score is at least the threshold.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Descending; the first entry is `+inf` (nobody called positive).
    pub thresholds: Vec<f64>,
    pub tpr: Vec<f64>,
    pub fpr: Vec<f64>,
    pub auroc: f64,
    pub positive_label: String,
    pub negative_label: String,
    pub n_positive: usize,
    pub n_negative: usize,
}

fn check_scores(name: &str, s: &[f64]) -> Result<()> {
    if s.is_empty() {
        return Err(Error::InvalidInput(format!("{name} class has no scores")));
    }
    if s.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput(format!("{name} scores contain NaN")));
    }
    Ok(())
}

/// Threshold sweep over the union of scores. The AUROC is the trapezoid
/// area, computed from integer counts so that it equals the Mann-Whitney
/// pair statistic with half credit for ties.
pub fn roc(pos: &[f64], neg: &[f64]) -> Result<RocCurve> {
    check_scores("positive", pos)?;
    check_scores("negative", neg)?;
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));

    let (p, n) = (pos.len() as u64, neg.len() as u64);
    let mut thresholds = vec![f64::INFINITY];
    let mut tp_counts = vec![0u64];
    let mut fp_counts = vec![0u64];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        while i < all.len() && all[i].0 == t {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        if t == f64::INFINITY {
            // Scores of +inf are admitted only by the +inf threshold itself.
            tp_counts[0] = tp;
            fp_counts[0] = fp;
            continue;
        }
        thresholds.push(t);
        tp_counts.push(tp);
        fp_counts.push(fp);
    }

    let mut twice_area = 0u128;
    let mut prev = (0u64, 0u64);
    for (&tp, &fp) in tp_counts.iter().zip(&fp_counts) {
        twice_area += u128::from(fp - prev.1) * u128::from(tp + prev.0);
        prev = (tp, fp);
    }
    let auroc = twice_area as f64 / (2 * u128::from(p) * u128::from(n)) as f64;

    Ok(RocCurve {
        tpr: tp_counts.iter().map(|&c| c as f64 / p as f64).collect(),
        fpr: fp_counts.iter().map(|&c| c as f64 / n as f64).collect(),
        thresholds,
        auroc,
        positive_label: "positive".into(),
        negative_label: "negative".into(),
        n_positive: pos.len(),
        n_negative: neg.len(),
    })
}

impl RocCurve {
    pub fn with_labels(mut self, positive: &str, negative: &str) -> Self {
        self.positive_label = positive.into();
        self.negative_label = negative.into();
        self
    }
}

/// Mann-Whitney pair statistic: `P(pos > neg) + P(pos = neg) / 2`.
pub fn pair_auroc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut twice = 0u128;
    for &a in pos {
        for &b in neg {
            twice += match a.total_cmp(&b) {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    twice as f64 / (2 * pos.len() as u128 * neg.len() as u128) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub fnr: f64,
    /// False when no threshold reaches the requested false-negative rate;
    /// the point returned is then the one with the smallest FNR.
    pub attained: bool,
}

/// Largest threshold whose false-negative rate is at most `max_fnr`.
pub fn threshold_at_fnr(curve: &RocCurve, max_fnr: f64) -> Result<OperatingPoint> {
    if max_fnr.is_nan() || curve.thresholds.is_empty() || curve.n_positive == 0 {
        return Err(Error::InvalidInput("invalid ROC curve or max_fnr".into()));
    }
    let p = curve.n_positive as f64;
    // Compare missed-positive counts to avoid rounding on the rate itself.
    let allowed = max_fnr * p + 1e-9;
    let missed = |i: usize| (p - (curve.tpr[i] * p).round()).max(0.0);
    let idx = (0..curve.thresholds.len()).find(|&i| missed(i) <= allowed);
    let (i, attained) = match idx {
        Some(i) => (i, true),
        None => (curve.thresholds.len() - 1, false),
    };
    Ok(OperatingPoint {
        threshold: curve.thresholds[i],
        tpr: curve.tpr[i],
        fpr: curve.fpr[i],
        fnr: missed(i) / p,
        attained,
    })
}

/// One curve per negative label, plus a pooled curve over all negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct RocSet {
    pub pooled: RocCurve,
    pub per_type: BTreeMap<String, RocCurve>,
}

/// `scored`: `(label, score)` pairs. Participants with `positive_label`
/// form the positive class; every other label is a negative type.
pub fn roc_by_type<'a>(scored: impl IntoIterator<Item = (&'a str, f64)>, positive_label: &str) -> Result<RocSet> {
    let mut pos = Vec::new();
    let mut neg: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (label, s) in scored {
        if label == positive_label {
            pos.push(s);
        } else {
            neg.entry(label.to_string()).or_default().push(s);
        }
    }
    if pos.is_empty() {
        return Err(Error::InvalidInput(format!("no scores with positive label {positive_label:?}")));
    }
    if neg.is_empty() {
        return Err(Error::InvalidInput("no negative-class scores".into()));
    }
    let all_neg: Vec<f64> = neg.values().flatten().copied().collect();
    let pooled = roc(&pos, &all_neg)?.with_labels(positive_label, "all");
    let per_type = neg
        .iter()
        .map(|(l, s)| Ok((l.clone(), roc(&pos, s)?.with_labels(positive_label, l))))
        .collect::<Result<_>>()?;
    Ok(RocSet { pooled, per_type })
}
