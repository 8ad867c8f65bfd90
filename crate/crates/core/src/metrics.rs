//! One-vs-all multi-class evaluation: counts, precision, F1, ROC and AUC
//! with micro (pooled) and macro (per-class mean) averaging.
//!
//! Rates whose denominator is zero are reported as 0 and logged.

use std::io::Write;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::classifier::network::argmax;
use crate::error::{Error, Result};

/// Per-class one-vs-all counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: Vec<u64>,
    pub fp: Vec<u64>,
    pub tn: Vec<u64>,
    pub fn_: Vec<u64>,
}

impl ClassCounts {
    pub fn n_classes(&self) -> usize {
        self.tp.len()
    }

    pub fn total(&self) -> u64 {
        if self.tp.is_empty() {
            0
        } else {
            self.tp[0] + self.fp[0] + self.tn[0] + self.fn_[0]
        }
    }

    pub fn correct(&self) -> u64 {
        self.tp.iter().sum()
    }
}

fn ratio(num: f64, den: f64, what: &str) -> f64 {
    if den == 0.0 {
        warn!("{what}: zero denominator, reported as 0");
        0.0
    } else {
        num / den
    }
}

pub fn confusion(labels: &[usize], predictions: &[usize], n_classes: usize) -> Result<ClassCounts> {
    if labels.len() != predictions.len() {
        return Err(Error::data("labels and predictions differ in length"));
    }
    if let Some(bad) = labels.iter().chain(predictions).find(|&&l| l >= n_classes) {
        return Err(Error::data(format!("label {bad} outside {n_classes} classes")));
    }
    let n = labels.len() as u64;
    let mut tp = vec![0; n_classes];
    let mut fp = vec![0; n_classes];
    let mut fn_ = vec![0; n_classes];
    for (&y, &p) in labels.iter().zip(predictions) {
        if y == p {
            tp[y] += 1;
        } else {
            fp[p] += 1;
            fn_[y] += 1;
        }
    }
    let tn = (0..n_classes).map(|c| n - tp[c] - fp[c] - fn_[c]).collect();
    Ok(ClassCounts { tp, fp, tn, fn_ })
}

/// `(micro, macro)` positive predictive value.
pub fn micro_macro_precision(counts: &ClassCounts) -> (f64, f64) {
    let tp: u64 = counts.tp.iter().sum();
    let fp: u64 = counts.fp.iter().sum();
    let micro = ratio(tp as f64, (tp + fp) as f64, "micro precision");
    let macro_ = (0..counts.n_classes())
        .map(|c| ratio(counts.tp[c] as f64, (counts.tp[c] + counts.fp[c]) as f64, "class precision"))
        .sum::<f64>()
        / counts.n_classes().max(1) as f64;
    (micro, macro_)
}

/// `(micro, macro)` recall.
pub fn micro_macro_recall(counts: &ClassCounts) -> (f64, f64) {
    let tp: u64 = counts.tp.iter().sum();
    let fn_: u64 = counts.fn_.iter().sum();
    let micro = ratio(tp as f64, (tp + fn_) as f64, "micro recall");
    let macro_ = (0..counts.n_classes())
        .map(|c| ratio(counts.tp[c] as f64, (counts.tp[c] + counts.fn_[c]) as f64, "class recall"))
        .sum::<f64>()
        / counts.n_classes().max(1) as f64;
    (micro, macro_)
}

/// F1 of one class, `2tp / (2tp + fp + fn)`.
pub fn class_f1(counts: &ClassCounts, class: usize) -> f64 {
    let tp = counts.tp[class] as f64;
    ratio(2.0 * tp, 2.0 * tp + (counts.fp[class] + counts.fn_[class]) as f64, "class F1")
}

/// `(micro, macro)` F1: micro from pooled counts, macro the mean of per-class F1.
pub fn micro_macro_f1(counts: &ClassCounts) -> (f64, f64) {
    let tp: u64 = counts.tp.iter().sum();
    let fp: u64 = counts.fp.iter().sum();
    let fn_: u64 = counts.fn_.iter().sum();
    let micro = ratio(2.0 * tp as f64, (2 * tp + fp + fn_) as f64, "micro F1");
    let macro_ = (0..counts.n_classes()).map(|c| class_f1(counts, c)).sum::<f64>()
        / counts.n_classes().max(1) as f64;
    (micro, macro_)
}

/// ROC points `(fpr, tpr)` from `(0,0)` to `(1,1)`, one per distinct score.
///
/// Tied scores move both rates in a single step.
pub fn roc_curve(scores: &[f64], positive: &[bool]) -> Result<Vec<(f64, f64)>> {
    if scores.len() != positive.len() {
        return Err(Error::data("scores and labels differ in length"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::data("score is NaN"));
    }
    let pos = positive.iter().filter(|&&p| p).count() as f64;
    let neg = positive.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(Error::data("ROC needs both positives and negatives"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        points.push((fp / neg, tp / pos));
    }
    Ok(points)
}

/// Trapezoidal area under a ROC curve.
pub fn auc_from_curve(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    Ok(auc_from_curve(&roc_curve(scores, positive)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    Micro,
    Macro,
}

fn check_scores(scores: &[Vec<f64>], labels: &[usize]) -> Result<usize> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::data("scores and labels differ in length"));
    }
    let k = scores[0].len();
    if scores.iter().any(|s| s.len() != k) {
        return Err(Error::data("ragged score rows"));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::data(format!("label {bad} outside {k} classes")));
    }
    Ok(k)
}

/// Micro pools every `(score[c], label == c)` pair; macro averages the
/// per-class AUCs of classes that have positives (others are skipped with a warning).
pub fn roc_auc(scores: &[Vec<f64>], labels: &[usize], averaging: Averaging) -> Result<f64> {
    let k = check_scores(scores, labels)?;
    match averaging {
        Averaging::Micro => {
            let (s, p) = pooled(scores, labels, k);
            binary_auc(&s, &p)
        }
        Averaging::Macro => {
            let mut sum = 0.0;
            let mut used = 0;
            for c in 0..k {
                let s: Vec<f64> = scores.iter().map(|row| row[c]).collect();
                let p: Vec<bool> = labels.iter().map(|&l| l == c).collect();
                let positives = p.iter().filter(|&&x| x).count();
                if positives == 0 || positives == p.len() {
                    warn!("class {c} has no positives or no negatives; excluded from macro AUC");
                    continue;
                }
                sum += binary_auc(&s, &p)?;
                used += 1;
            }
            if used == 0 {
                return Err(Error::data("no class has both positives and negatives"));
            }
            Ok(sum / used as f64)
        }
    }
}

fn pooled(scores: &[Vec<f64>], labels: &[usize], k: usize) -> (Vec<f64>, Vec<bool>) {
    let mut s = Vec::with_capacity(scores.len() * k);
    let mut p = Vec::with_capacity(scores.len() * k);
    for (row, &l) in scores.iter().zip(labels) {
        for (c, &v) in row.iter().enumerate() {
            s.push(v);
            p.push(l == c);
        }
    }
    (s, p)
}

/// Keep at most `max` points of a curve, always including both ends.
pub fn thin_curve(points: &[(f64, f64)], max: usize) -> Vec<(f64, f64)> {
    if points.len() <= max || max < 2 {
        return points.to_vec();
    }
    (0..max)
        .map(|i| points[i * (points.len() - 1) / (max - 1)])
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRates {
    pub tpr: f64,
    pub fpr: f64,
    pub ppv: f64,
    pub accuracy: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_samples: usize,
    pub n_classes: usize,
    pub accuracy: f64,
    pub ppv_micro: f64,
    pub ppv_macro: f64,
    pub f1_micro: f64,
    pub f1_macro: f64,
    pub auc_micro: f64,
    pub auc_macro: f64,
    pub per_class: Vec<ClassRates>,
    /// Micro-averaged ROC, thinned for storage.
    pub roc_micro: Vec<(f64, f64)>,
}

/// Maximum number of ROC points stored in a report.
pub const REPORT_ROC_POINTS: usize = 201;

impl EvaluationReport {
    pub const CSV_HEADER: &'static str = "accuracy,f1_micro,f1_macro,auc_micro,auc_macro,ppv_micro,ppv_macro";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.accuracy, self.f1_micro, self.f1_macro, self.auc_micro, self.auc_macro, self.ppv_micro, self.ppv_macro
        )
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        writeln!(out, "{}", self.csv_row())?;
        Ok(())
    }
}

/// Full evaluation of probability rows against true labels (argmax predictions).
pub fn evaluate(scores: &[Vec<f64>], labels: &[usize]) -> Result<EvaluationReport> {
    let k = check_scores(scores, labels)?;
    let predictions: Vec<usize> = scores.iter().map(|s| argmax(s)).collect();
    let counts = confusion(labels, &predictions, k)?;
    let n = labels.len();
    let (ppv_micro, ppv_macro) = micro_macro_precision(&counts);
    let (f1_micro, f1_macro) = micro_macro_f1(&counts);
    let (s, p) = pooled(scores, labels, k);
    let curve = roc_curve(&s, &p)?;
    let auc_micro = auc_from_curve(&curve);
    let auc_macro = roc_auc(scores, labels, Averaging::Macro)?;
    let per_class = (0..k)
        .map(|c| {
            let (tp, fp, tn, fn_) = (counts.tp[c] as f64, counts.fp[c] as f64, counts.tn[c] as f64, counts.fn_[c] as f64);
            ClassRates {
                tpr: ratio(tp, tp + fn_, "class TPR"),
                fpr: ratio(fp, fp + tn, "class FPR"),
                ppv: ratio(tp, tp + fp, "class PPV"),
                accuracy: (tp + tn) / n as f64,
                f1: class_f1(&counts, c),
            }
        })
        .collect();
    Ok(EvaluationReport {
        n_samples: n,
        n_classes: k,
        accuracy: counts.correct() as f64 / n as f64,
        ppv_micro,
        ppv_macro,
        f1_micro,
        f1_macro,
        auc_micro,
        auc_macro,
        per_class,
        roc_micro: thin_curve(&curve, REPORT_ROC_POINTS),
    })
}
