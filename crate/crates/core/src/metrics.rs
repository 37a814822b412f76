//! Macro precision/recall/F1 and Matthews correlation for the three task shapes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{Label, Task};

/// One-vs-rest counts per class (single-label) or per label (multi-label).
/// `matrix[t][p]` is kept for single-label tasks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub num_classes: usize,
    pub tp: Vec<u64>,
    pub fp: Vec<u64>,
    #[serde(rename = "fn")]
    pub fn_: Vec<u64>,
    pub tn: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub matrix: Option<Vec<Vec<u64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
    pub mcc: f64,
}

pub fn confusion(y_true: &[Label], y_pred: &[Label], task: Task, num_classes: usize) -> Result<ConfusionCounts> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Input(format!(
            "{} true labels but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    for label in y_true.iter().chain(y_pred) {
        label.check(task, num_classes)?;
    }
    let k = num_classes;
    let mut c = ConfusionCounts {
        num_classes: k,
        tp: vec![0; k],
        fp: vec![0; k],
        fn_: vec![0; k],
        tn: vec![0; k],
        matrix: None,
    };
    match task {
        Task::MultiLabel => {
            for (t, p) in y_true.iter().zip(y_pred) {
                let (Label::Multi(t), Label::Multi(p)) = (t, p) else { unreachable!("checked above") };
                for i in 0..k {
                    match (t[i], p[i]) {
                        (true, true) => c.tp[i] += 1,
                        (false, true) => c.fp[i] += 1,
                        (true, false) => c.fn_[i] += 1,
                        (false, false) => c.tn[i] += 1,
                    }
                }
            }
        }
        _ => {
            let mut matrix = vec![vec![0u64; k]; k];
            for (t, p) in y_true.iter().zip(y_pred) {
                let (Label::Class(t), Label::Class(p)) = (t, p) else { unreachable!("checked above") };
                matrix[*t][*p] += 1;
            }
            let n = y_true.len() as u64;
            for i in 0..k {
                let tp = matrix[i][i];
                let row: u64 = matrix[i].iter().sum();
                let col: u64 = matrix.iter().map(|r| r[i]).sum();
                c.tp[i] = tp;
                c.fn_[i] = row - tp;
                c.fp[i] = col - tp;
                c.tn[i] = n + tp - row - col;
            }
            c.matrix = Some(matrix);
        }
    }
    Ok(c)
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Per-class (precision, recall, F1), zero wherever a denominator is zero.
pub fn per_class_prf(counts: &ConfusionCounts) -> Vec<(f64, f64, f64)> {
    (0..counts.num_classes)
        .map(|i| {
            let tp = counts.tp[i] as f64;
            let p = ratio(tp, tp + counts.fp[i] as f64);
            let r = ratio(tp, tp + counts.fn_[i] as f64);
            (p, r, ratio(2.0 * p * r, p + r))
        })
        .collect()
}

/// Unweighted means of per-class precision, recall and F1.
pub fn macro_prf(counts: &ConfusionCounts) -> (f64, f64, f64) {
    let per = per_class_prf(counts);
    let k = per.len().max(1) as f64;
    let sum = per
        .iter()
        .fold((0.0, 0.0, 0.0), |acc, (p, r, f)| (acc.0 + p, acc.1 + r, acc.2 + f));
    (sum.0 / k, sum.1 / k, sum.2 / k)
}

pub fn mcc_binary(tp: u64, fp: u64, fn_: u64, tn: u64) -> f64 {
    let (tp, fp, fn_, tn) = (tp as f64, fp as f64, fn_ as f64, tn as f64);
    let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    ratio(tp * tn - fp * fn_, den)
}

/// Multi-class generalization over a full confusion matrix (`matrix[t][p]`).
pub fn mcc_multiclass(matrix: &[Vec<u64>]) -> f64 {
    let k = matrix.len();
    let s: f64 = matrix.iter().flatten().map(|&v| v as f64).sum();
    let c: f64 = (0..k).map(|i| matrix[i][i] as f64).sum();
    let t: Vec<f64> = matrix.iter().map(|r| r.iter().map(|&v| v as f64).sum()).collect();
    let p: Vec<f64> = (0..k).map(|j| matrix.iter().map(|r| r[j] as f64).sum()).collect();
    let pt: f64 = p.iter().zip(&t).map(|(a, b)| a * b).sum();
    let pp: f64 = p.iter().map(|v| v * v).sum();
    let tt: f64 = t.iter().map(|v| v * v).sum();
    ratio(c * s - pt, ((s * s - pp) * (s * s - tt)).sqrt())
}

pub fn mcc_from_counts(counts: &ConfusionCounts, task: Task) -> f64 {
    match task {
        Task::Binary => mcc_binary(counts.tp[1], counts.fp[1], counts.fn_[1], counts.tn[1]),
        Task::MultiClass => mcc_multiclass(counts.matrix.as_deref().unwrap_or(&[])),
        Task::MultiLabel => {
            let k = counts.num_classes;
            let total: f64 = (0..k)
                .map(|i| mcc_binary(counts.tp[i], counts.fp[i], counts.fn_[i], counts.tn[i]))
                .sum();
            ratio(total, k as f64)
        }
    }
}

pub fn mcc(y_true: &[Label], y_pred: &[Label], task: Task, num_classes: usize) -> Result<f64> {
    let counts = confusion(y_true, y_pred, task, num_classes)?;
    Ok(mcc_from_counts(&counts, task))
}

pub fn evaluate(y_true: &[Label], y_pred: &[Label], task: Task, num_classes: usize) -> Result<MetricReport> {
    let counts = confusion(y_true, y_pred, task, num_classes)?;
    let (precision_macro, recall_macro, f1_macro) = macro_prf(&counts);
    Ok(MetricReport {
        precision_macro,
        recall_macro,
        f1_macro,
        mcc: mcc_from_counts(&counts, task),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classes(v: &[usize]) -> Vec<Label> {
        v.iter().map(|&c| Label::Class(c)).collect()
    }

    #[test]
    fn identical_labels_have_no_errors() {
        let y = classes(&[0, 1, 1, 0]);
        let c = confusion(&y, &y, Task::Binary, 2).unwrap();
        assert_eq!(c.fp, vec![0, 0]);
        assert_eq!(c.fn_, vec![0, 0]);
        assert_eq!(macro_prf(&c), (1.0, 1.0, 1.0));
        assert_eq!(mcc(&y, &y, Task::Binary, 2).unwrap(), 1.0);
    }

    #[test]
    fn constant_predictor() {
        let t = classes(&[0, 1, 0, 1]);
        let p = classes(&[0, 0, 0, 0]);
        let c = confusion(&t, &p, Task::Binary, 2).unwrap();
        assert_eq!(c.tp[1], 0);
        assert_eq!(mcc(&t, &p, Task::Binary, 2).unwrap(), 0.0);
    }

    #[test]
    fn worked_binary_mcc() {
        assert!((mcc_binary(3, 1, 2, 4) - 10.0 / 600f64.sqrt()).abs() < 1e-12);
        assert!((mcc_binary(3, 1, 2, 4) - 0.4082).abs() < 1e-4);
    }

    #[test]
    fn worked_macro_f1() {
        let c = ConfusionCounts {
            num_classes: 2,
            tp: vec![3, 4],
            fp: vec![1, 2],
            fn_: vec![2, 1],
            tn: vec![4, 3],
            matrix: None,
        };
        let per = per_class_prf(&c);
        assert!((per[0].2 - 0.6667).abs() < 1e-4);
        assert!((per[1].2 - 0.7273).abs() < 1e-4);
        assert!((macro_prf(&c).2 - 0.6970).abs() < 1e-4);
    }

    #[test]
    fn absent_class_contributes_zero() {
        let t = classes(&[0, 1]);
        let c = confusion(&t, &t, Task::MultiClass, 3).unwrap();
        let per = per_class_prf(&c);
        assert_eq!(per[2], (0.0, 0.0, 0.0));
        assert!((macro_prf(&c).2 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(confusion(&classes(&[0]), &classes(&[0, 1]), Task::Binary, 2).is_err());
        assert!(confusion(&classes(&[2]), &classes(&[0]), Task::Binary, 2).is_err());
    }

    #[test]
    fn multilabel_mean_of_binary() {
        let t = vec![Label::Multi(vec![true, false]), Label::Multi(vec![false, true])];
        let p = vec![Label::Multi(vec![true, false]), Label::Multi(vec![false, false])];
        let m = mcc(&t, &p, Task::MultiLabel, 2).unwrap();
        assert!((m - 0.5).abs() < 1e-12);
    }
}
