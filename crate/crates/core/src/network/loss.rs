use ndarray::Array1;

use crate::error::Result;
use crate::label::{Label, Task};

/// Optional per-class (single-label) or per-label positive (multi-label) weights.
#[derive(Debug, Clone, PartialEq)]
pub enum LossWeights {
    Class(Vec<f64>),
    Positive(Vec<f64>),
}

impl LossWeights {
    /// Inverse-frequency weights from training labels: `n / (C · n_c)` per
    /// class, or `negatives / positives` per label. Absent classes get 1.
    pub fn inverse_frequency(task: Task, num_classes: usize, labels: &[&Label]) -> Self {
        let n = labels.len() as f64;
        let mut counts = vec![0usize; num_classes];
        for label in labels {
            for i in label.active() {
                if i < num_classes {
                    counts[i] += 1;
                }
            }
        }
        match task {
            Task::MultiLabel => LossWeights::Positive(
                counts
                    .iter()
                    .map(|&pos| if pos == 0 || pos as f64 == n { 1.0 } else { (n - pos as f64) / pos as f64 })
                    .collect(),
            ),
            _ => LossWeights::Class(
                counts
                    .iter()
                    .map(|&c| if c == 0 { 1.0 } else { n / (num_classes as f64 * c as f64) })
                    .collect(),
            ),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = logits.mapv(|v| (v - max).exp());
    let total = e.sum();
    e / total
}

/// Sigmoid per entry for binary and multi-label tasks, softmax for multi-class.
pub fn probabilities(task: Task, logits: &Array1<f64>) -> Array1<f64> {
    match task {
        Task::MultiClass => softmax(logits),
        Task::Binary | Task::MultiLabel => logits.mapv(sigmoid),
    }
}

/// Argmax (ties toward the lower index) or per-label `p >= 0.5`.
pub fn decide(task: Task, probs: &Array1<f64>) -> Label {
    match task {
        Task::MultiLabel => Label::Multi(probs.iter().map(|&p| p >= 0.5).collect()),
        _ => {
            let mut best = 0;
            for (i, &p) in probs.iter().enumerate() {
                if p > probs[best] {
                    best = i;
                }
            }
            Label::Class(best)
        }
    }
}

/// Loss on raw logits: softmax cross-entropy for single-label tasks, mean
/// per-label binary cross-entropy for multi-label.
pub fn loss(task: Task, logits: &Array1<f64>, target: &Label, weights: Option<&LossWeights>) -> Result<f64> {
    loss_and_grad(task, logits, target, weights).map(|(l, _)| l)
}

/// Same loss computed from probabilities already produced by the model.
pub fn loss_from_probs(task: Task, probs: &Array1<f64>, target: &Label) -> Result<f64> {
    target.check(task, probs.len())?;
    let ln = |p: f64| p.max(f64::MIN_POSITIVE).ln();
    Ok(match target {
        Label::Class(c) => -ln(probs[*c]),
        Label::Multi(bits) => {
            let total: f64 = bits
                .iter()
                .zip(probs.iter())
                .map(|(&y, &p)| if y { -ln(p) } else { -ln(1.0 - p) })
                .sum();
            total / bits.len() as f64
        }
    })
}

pub(crate) fn loss_and_grad(
    task: Task,
    logits: &Array1<f64>,
    target: &Label,
    weights: Option<&LossWeights>,
) -> Result<(f64, Array1<f64>)> {
    target.check(task, logits.len())?;
    match target {
        Label::Class(c) => {
            let w = match weights {
                Some(LossWeights::Class(ws)) => ws.get(*c).copied().unwrap_or(1.0),
                _ => 1.0,
            };
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let log_total = logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            let loss = w * (log_total - logits[*c]);
            let mut grad = logits.mapv(|v| (v - log_total).exp());
            grad[*c] -= 1.0;
            grad *= w;
            Ok((loss, grad))
        }
        Label::Multi(bits) => {
            let k = bits.len() as f64;
            let mut loss = 0.0;
            let mut grad = Array1::zeros(logits.len());
            for (i, (&y, &l)) in bits.iter().zip(logits.iter()).enumerate() {
                let pw = match weights {
                    Some(LossWeights::Positive(ws)) => ws.get(i).copied().unwrap_or(1.0),
                    _ => 1.0,
                };
                let p = sigmoid(l);
                if y {
                    loss += pw * softplus(-l);
                    grad[i] = pw * (p - 1.0) / k;
                } else {
                    loss += softplus(l);
                    grad[i] = p / k;
                }
            }
            Ok((loss / k, grad))
        }
    }
}
