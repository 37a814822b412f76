use kinn::network::{
    forward, forward_with, loss, loss_and_gradients_with, self_attention, cross_attention, AttentionWeights, CrossQuery,
    ForwardOptions, KinnConfig, KinnParams, LossWeights, Variant,
};
use kinn::{Label, Task};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_seq(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, dim), |_| rng.random_range(-1.0..1.0))
}

/// Largest relative error between analytic and central-difference gradients,
/// measured per parameter tensor as ||a - n|| / max(||a||, ||n||).
fn worst_gradient_error(cfg: &KinnConfig, target: &Label, weights: Option<&LossWeights>, seed: u64) -> (String, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = KinnParams::init(&KinnConfig { seed, ..cfg.clone() });
    // Perturb biases and layer-norm weights off their defaults.
    params.for_each_mut(|name, t| {
        if name.contains(".b") || name.starts_with("layernorm") {
            for v in t.iter_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
    });
    let (ld, lc) = (rng.random_range(1..=4), rng.random_range(1..=4));
    let xd = random_seq(&mut rng, ld, cfg.dim);
    let xc = random_seq(&mut rng, lc, cfg.dim);
    let opts = ForwardOptions::default();
    let (_, grads, _) = loss_and_gradients_with(cfg, &params, xd.view(), xc.view(), target, weights, &opts).unwrap();
    let loss_at = |p: &KinnParams| {
        let t = forward_with(cfg, p, xd.view(), xc.view(), &opts).unwrap();
        loss(cfg.task, &t.logits, target, weights).unwrap()
    };
    let analytic: Vec<(&'static str, Vec<f64>)> = grads.tensors().into_iter().map(|(n, t)| (n, t.to_vec())).collect();
    let mut worst = (String::new(), 0.0);
    for (ti, (name, a)) in analytic.iter().enumerate() {
        let mut numeric = vec![0.0; a.len()];
        for (i, n) in numeric.iter_mut().enumerate() {
            let mut plus = params.clone();
            plus.tensors_mut()[ti].1[i] += 1e-5;
            let mut minus = params.clone();
            minus.tensors_mut()[ti].1[i] -= 1e-5;
            *n = (loss_at(&plus) - loss_at(&minus)) / 2e-5;
        }
        let diff: f64 = a.iter().zip(&numeric).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nn: f64 = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = na.max(nn);
        let rel = if scale < 1e-10 { diff } else { diff / scale };
        if rel > worst.1 {
            worst = (name.to_string(), rel);
        }
    }
    worst
}

fn small(variant: Variant, task: Task, num_classes: usize) -> KinnConfig {
    KinnConfig { variant, task, num_classes, dim: 8, heads: 2, dense_dim: 6, ..KinnConfig::default() }
}

#[test]
fn gradients_match_finite_differences() {
    let cases = [
        (Task::Binary, 2, Label::Class(1), None),
        (Task::MultiClass, 6, Label::Class(4), Some(LossWeights::Class(vec![0.5, 1.0, 2.0, 1.5, 0.7, 1.1]))),
        (
            Task::MultiLabel,
            3,
            Label::Multi(vec![true, false, true]),
            Some(LossWeights::Positive(vec![2.0, 3.0, 0.5])),
        ),
    ];
    for variant in [Variant::Kinn1, Variant::Kinn2] {
        for (seed, (task, k, target, weights)) in cases.iter().enumerate() {
            let cfg = small(variant, *task, *k);
            let (name, err) = worst_gradient_error(&cfg, target, weights.as_ref(), seed as u64 + 11);
            assert!(err < 1e-4, "{variant:?} {task:?}: {name} relative error {err:e}");
        }
    }
}

#[test]
fn pooled_representation_ignores_domain_order() {
    let cfg = small(Variant::Kinn2, Task::Binary, 2);
    let params = KinnParams::init(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let xd = random_seq(&mut rng, 5, 8);
    let xc = random_seq(&mut rng, 3, 8);
    let perm = [3, 0, 4, 1, 2];
    let xp = Array2::from_shape_fn((5, 8), |(i, j)| xd[[perm[i], j]]);
    let a = forward(&cfg, &params, xd.view(), xc.view()).unwrap();
    let b = forward(&cfg, &params, xp.view(), xc.view()).unwrap();
    for (x, y) in a.z.iter().zip(b.z.iter()) {
        assert!((x - y).abs() < 1e-6);
    }
}

#[test]
fn variants_coincide_when_cross_queries_come_from_commonsense() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let k1 = small(Variant::Kinn1, Task::MultiClass, 3);
    let k2 = KinnConfig { variant: Variant::Kinn2, ..k1.clone() };
    let params = KinnParams::init(&k1);
    let xd = random_seq(&mut rng, 4, 8);
    let xc = random_seq(&mut rng, 4, 8);
    let opts = ForwardOptions { cross_query: CrossQuery::Commonsense, ..Default::default() };
    let a = forward_with(&k1, &params, xd.view(), xc.view(), &opts).unwrap();
    let b = forward(&k2, &params, xd.view(), xc.view()).unwrap();
    let close = |x: &Array2<f64>, y: &Array2<f64>| x.iter().zip(y.iter()).all(|(p, q)| (p - q).abs() < 1e-6);
    assert!(close(&a.h, &b.h));
    assert!(close(&a.a_fused.mean(), &b.a_fused.mean()));
    assert!(close(&a.a_commonsense.mean(), &b.a_commonsense.mean()));
    assert!(a.probs.iter().zip(b.probs.iter()).all(|(p, q)| (p - q).abs() < 1e-6));
}

#[test]
fn masked_inputs_keep_rows_normalized() {
    let cfg = small(Variant::Kinn1, Task::Binary, 2);
    let params = KinnParams::init(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let xd = random_seq(&mut rng, 4, 8);
    let xc = random_seq(&mut rng, 3, 8);
    let opts = ForwardOptions {
        domain_mask: Some(vec![true, true, false, false]),
        cs_mask: Some(vec![false, true, true]),
        ..Default::default()
    };
    let t = forward_with(&cfg, &params, xd.view(), xc.view(), &opts).unwrap();
    for (a, mask) in [(&t.a_domain, &opts.domain_mask), (&t.a_commonsense, &opts.cs_mask)] {
        let mask = mask.as_ref().unwrap();
        for head in &a.heads {
            for row in head.outer_iter() {
                assert!((row.sum() - 1.0).abs() < 1e-9);
                for (p, &m) in row.iter().zip(mask) {
                    if !m {
                        assert_eq!(*p, 0.0);
                    }
                }
            }
        }
    }
    for head in &t.a_fused.heads {
        for row in head.outer_iter() {
            let masked: f64 = row.iter().zip(&t.fused_mask).filter(|(_, &m)| !m).map(|(p, _)| p).sum();
            assert_eq!(masked, 0.0);
        }
    }
}

fn weights_from(seed: u64, dim: usize) -> AttentionWeights {
    let cfg = KinnConfig { dim, heads: 1, dense_dim: 2, seed, ..KinnConfig::default() };
    KinnParams::init(&cfg).attn_domain
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn attention_rows_sum_to_one(seed in 0u64..10_000, rows in 1usize..6, cols in 1usize..6, heads in prop::sample::select(vec![1usize, 2, 4])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = weights_from(seed, 8);
        let q = random_seq(&mut rng, rows, 8) * 3.0;
        let kv = random_seq(&mut rng, cols, 8) * 3.0;
        let mut mask: Vec<bool> = (0..cols).map(|_| rng.random_bool(0.7)).collect();
        mask[rng.random_range(0..cols)] = true;
        let (_, a) = cross_attention(q.view(), kv.view(), &w, heads, &mask).unwrap();
        for head in &a.heads {
            for row in head.outer_iter() {
                prop_assert!((row.sum() - 1.0).abs() < 1e-6);
                prop_assert!(row.iter().all(|&p| p >= 0.0));
            }
        }
        let (_, s) = self_attention(kv.view(), &w, heads, &mask).unwrap();
        prop_assert_eq!((s.rows(), s.cols()), (cols, cols));
    }
}
