use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::KinnConfig;
use super::forward::{forward, loss_and_gradients};
use super::loss::{decide, loss, LossWeights};
use super::params::KinnParams;
use crate::error::{Error, Result};
use crate::label::Label;
use crate::metrics::evaluate;

/// One embedded training document.
#[derive(Debug, Clone)]
pub struct Example {
    pub x_domain: Array2<f64>,
    pub x_cs: Array2<f64>,
    pub target: Label,
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mcc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: KinnParams,
    pub log: Vec<EpochRecord>,
    /// True when a mini-batch loss reached `epsilon` and training stopped early.
    pub converged: bool,
    /// Loss of the last mini-batch processed, if any.
    pub last_batch_loss: Option<f64>,
}

/// Adaptive-moment optimizer with the usual defaults.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: KinnParams,
    v: KinnParams,
}

impl Adam {
    pub fn new(lr: f64, like: &KinnParams) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: like.zeros_like(),
            v: like.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut KinnParams, grads: &KinnParams) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let g_all = grads.tensors();
        let m_all = self.m.tensors_mut();
        let v_all = self.v.tensors_mut();
        for ((((_, p), (_, g)), (_, m)), (_, v)) in params.tensors_mut().into_iter().zip(g_all).zip(m_all).zip(v_all) {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

pub fn predict(cfg: &KinnConfig, params: &KinnParams, x_domain: ArrayView2<f64>, x_cs: ArrayView2<f64>) -> Result<Label> {
    let trace = forward(cfg, params, x_domain, x_cs)?;
    Ok(decide(cfg.task, &trace.probs))
}

/// Predictions for many examples, computed in parallel, returned in input order.
pub fn predict_all(cfg: &KinnConfig, params: &KinnParams, examples: &[Example]) -> Result<Vec<Label>> {
    examples
        .par_iter()
        .map(|ex| predict(cfg, params, ex.x_domain.view(), ex.x_cs.view()))
        .collect()
}

fn loss_weights(cfg: &KinnConfig, data: &[Example]) -> Option<LossWeights> {
    cfg.class_weights.then(|| {
        let labels: Vec<&Label> = data.iter().map(|e| &e.target).collect();
        LossWeights::inverse_frequency(cfg.task, cfg.num_classes, &labels)
    })
}

fn record(cfg: &KinnConfig, epoch: usize, split: &str, loss: f64, truth: &[Label], pred: &[Label]) -> Result<EpochRecord> {
    let m = evaluate(truth, pred, cfg.task, cfg.num_classes)?;
    Ok(EpochRecord {
        epoch,
        split: split.to_string(),
        loss,
        precision: m.precision_macro,
        recall: m.recall_macro,
        f1: m.f1_macro,
        mcc: m.mcc,
    })
}

fn evaluate_split(
    cfg: &KinnConfig,
    params: &KinnParams,
    data: &[Example],
    weights: Option<&LossWeights>,
    epoch: usize,
    split: &str,
) -> Result<EpochRecord> {
    let outputs: Vec<(f64, Label)> = data
        .par_iter()
        .map(|ex| {
            let trace = forward(cfg, params, ex.x_domain.view(), ex.x_cs.view())?;
            let l = loss(cfg.task, &trace.logits, &ex.target, weights)?;
            Ok((l, decide(cfg.task, &trace.probs)))
        })
        .collect::<Result<_>>()?;
    let mean = outputs.iter().map(|(l, _)| l).sum::<f64>() / outputs.len() as f64;
    let truth: Vec<Label> = data.iter().map(|e| e.target.clone()).collect();
    let pred: Vec<Label> = outputs.into_iter().map(|(_, p)| p).collect();
    record(cfg, epoch, split, mean, &truth, &pred)
}

/// Train from a seeded initialization.
pub fn train(cfg: &KinnConfig, data: &[Example]) -> Result<TrainOutcome> {
    train_with(cfg, data, &[], KinnParams::init(cfg))
}

/// Mini-batch training from `init`. Each epoch logs a `train` record built
/// from the predictions made during that epoch and, when `dev` is non-empty,
/// a `dev` record computed after the epoch.
pub fn train_with(cfg: &KinnConfig, data: &[Example], dev: &[Example], init: KinnParams) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    if !init.matches(cfg) {
        return Err(Error::Input("initial parameters do not match the configuration".into()));
    }
    for ex in data.iter().chain(dev) {
        ex.target.check(cfg.task, cfg.num_classes)?;
    }
    let weights = loss_weights(cfg, data);
    let mut params = init;
    let mut adam = Adam::new(cfg.lr, &params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::new();
    let mut converged = false;
    let mut last_batch_loss = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut seen_truth = Vec::with_capacity(data.len());
        let mut seen_pred = Vec::with_capacity(data.len());
        let mut loss_sum = 0.0;

        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<Result<(f64, KinnParams, Label)>> = batch
                .par_iter()
                .map(|&i| {
                    let ex = &data[i];
                    let (l, g, trace) = loss_and_gradients(
                        cfg,
                        &params,
                        ex.x_domain.view(),
                        ex.x_cs.view(),
                        &ex.target,
                        weights.as_ref(),
                    )?;
                    Ok((l, g, decide(cfg.task, &trace.probs)))
                })
                .collect();

            let mut grads = params.zeros_like();
            let mut batch_loss = 0.0;
            for (&i, result) in batch.iter().zip(results) {
                let (l, g, pred) = match result {
                    Ok(r) => r,
                    Err(Error::Numeric { .. }) => {
                        return Err(Error::Diverged { epoch, last_good: Box::new(params) })
                    }
                    Err(e) => return Err(e),
                };
                batch_loss += l;
                grads.add_scaled(&g, 1.0);
                seen_truth.push(data[i].target.clone());
                seen_pred.push(pred);
            }
            loss_sum += batch_loss;
            batch_loss /= batch.len() as f64;
            if !batch_loss.is_finite() || !grads.is_finite() {
                return Err(Error::Diverged { epoch, last_good: Box::new(params) });
            }
            let mut mean_grads = params.zeros_like();
            mean_grads.add_scaled(&grads, 1.0 / batch.len() as f64);
            adam.step(&mut params, &mean_grads);
            last_batch_loss = Some(batch_loss);
            if batch_loss <= cfg.epsilon {
                converged = true;
                break;
            }
        }

        let epoch_loss = loss_sum / seen_truth.len() as f64;
        log.push(record(cfg, epoch, "train", epoch_loss, &seen_truth, &seen_pred)?);
        if !dev.is_empty() {
            log.push(evaluate_split(cfg, &params, dev, weights.as_ref(), epoch, "dev")?);
        }
        log::debug!("epoch {epoch}: loss {epoch_loss:.6}");
        if converged {
            break;
        }
    }

    Ok(TrainOutcome {
        params,
        log,
        converged,
        last_batch_loss,
    })
}
