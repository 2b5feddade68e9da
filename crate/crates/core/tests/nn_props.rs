//! Finite-difference checks over random layer shapes, and the engine-level
//! memorization sanity run.

use mmbeam_core::exec::{run_indexed, SequentialPool};
use mmbeam_core::nn::{
    grad_check, AdamConfig, AdamState, GradCheckOptions, Gradients, NnError, ParamSet, Tape,
    Tensor,
};
use mmbeam_core::rng::{normal, substream, Stream};
use proptest::prelude::*;
use rand::Rng;

fn seeded_tensor(shape: &[usize], seed: u64, scale: f64) -> Tensor {
    let mut rng = substream(seed, Stream::Init, 0);
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * scale).collect())
        .unwrap()
}

/// Builds a scalar loss from the layer under test by flattening its output
/// through a fixed random linear head and softmax/cross-entropy.
fn check_layer(
    params: &mut ParamSet,
    seed: u64,
    build: impl Fn(&mut Tape<'_>) -> Result<mmbeam_core::nn::NodeId, NnError>,
) -> f64 {
    let report = grad_check(
        params,
        |ps, want| {
            let mut tape = Tape::new(ps);
            let out = build(&mut tape)?;
            let len = tape.value(out).len();
            let flat = tape.reshape(out, &[len])?;
            let head_w = tape.input(seeded_tensor(&[3, len], seed ^ 0xabc, 0.7));
            let head_b = tape.input(seeded_tensor(&[3], seed ^ 0xdef, 0.2));
            let logits = tape.linear(flat, head_w, head_b)?;
            let probs = tape.softmax(logits)?;
            let loss = tape.cross_entropy(probs, 1)?;
            let grads = if want { Some(tape.backward(loss)?) } else { None };
            Ok((tape.value(loss).item(), grads))
        },
        &GradCheckOptions { max_coords_per_param: 24, seed, ..Default::default() },
    )
    .unwrap();
    report.max_rel_error
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn conv1d_gradients(cin in 1usize..4, cout in 1usize..4, len in 3usize..9, k in 1usize..4, stride in 1usize..3, pad in 0usize..2, seed in 0u64..1000) {
        prop_assume!(len + 2 * pad >= k);
        let mut ps = ParamSet::new();
        ps.add("x", seeded_tensor(&[cin, len], seed, 1.0), true);
        ps.add("w", seeded_tensor(&[cout, cin, k], seed + 1, 0.8), true);
        ps.add("b", seeded_tensor(&[cout], seed + 2, 0.3), true);
        let err = check_layer(&mut ps, seed, |t| {
            let x = t.param_named("x")?;
            let w = t.param_named("w")?;
            let b = t.param_named("b")?;
            t.conv1d(x, w, b, stride, pad)
        });
        prop_assert!(err < 1e-4, "conv1d rel err {err}");
    }

    #[test]
    fn conv2d_gradients(cin in 1usize..3, cout in 1usize..3, hw in 3usize..7, k in 1usize..4, stride in 1usize..3, pad in 0usize..2, seed in 0u64..1000) {
        prop_assume!(hw + 2 * pad >= k);
        let mut ps = ParamSet::new();
        ps.add("x", seeded_tensor(&[cin, hw, hw], seed, 1.0), true);
        ps.add("w", seeded_tensor(&[cout, cin, k, k], seed + 1, 0.8), true);
        ps.add("b", seeded_tensor(&[cout], seed + 2, 0.3), true);
        let err = check_layer(&mut ps, seed, |t| {
            let x = t.param_named("x")?;
            let w = t.param_named("w")?;
            let b = t.param_named("b")?;
            t.conv2d(x, w, b, stride, pad)
        });
        prop_assert!(err < 1e-4, "conv2d rel err {err}");
    }

    #[test]
    fn depthwise_gradients(c in 1usize..5, hw in 3usize..7, stride in 1usize..3, seed in 0u64..1000) {
        let mut ps = ParamSet::new();
        ps.add("x", seeded_tensor(&[c, hw, hw], seed, 1.0), true);
        ps.add("w", seeded_tensor(&[c, 3, 3], seed + 1, 0.8), true);
        ps.add("b", seeded_tensor(&[c], seed + 2, 0.3), true);
        let err = check_layer(&mut ps, seed, |t| {
            let x = t.param_named("x")?;
            let w = t.param_named("w")?;
            let b = t.param_named("b")?;
            t.depthwise_conv2d(x, w, b, stride, 1)
        });
        prop_assert!(err < 1e-4, "depthwise rel err {err}");
    }

    #[test]
    fn linear_and_matmul_gradients(rows in 1usize..6, inner in 1usize..6, out in 1usize..6, seed in 0u64..1000) {
        let mut ps = ParamSet::new();
        ps.add("x", seeded_tensor(&[rows, inner], seed, 1.0), true);
        ps.add("w", seeded_tensor(&[out, inner], seed + 1, 0.8), true);
        ps.add("b", seeded_tensor(&[out], seed + 2, 0.3), true);
        ps.add("t", seeded_tensor(&[out, out], seed + 3, 0.5), true);
        let err = check_layer(&mut ps, seed, |t| {
            let x = t.param_named("x")?;
            let w = t.param_named("w")?;
            let b = t.param_named("b")?;
            let y = t.linear(x, w, b)?;
            let tr = t.param_named("t")?;
            t.matmul(y, tr)
        });
        prop_assert!(err < 1e-4, "linear/matmul rel err {err}");
    }

    #[test]
    fn activation_and_norm_gradients(c in 1usize..4, m in 2usize..8, seed in 0u64..1000) {
        let mut ps = ParamSet::new();
        ps.add("x", seeded_tensor(&[c, m], seed, 1.5), true);
        ps.add("gamma", seeded_tensor(&[c], seed + 1, 0.5), true);
        ps.add("beta", seeded_tensor(&[c], seed + 2, 0.3), true);
        let err = check_layer(&mut ps, seed, |t| {
            let x = t.param_named("x")?;
            let gamma = t.param_named("gamma")?;
            let beta = t.param_named("beta")?;
            let bn = t.batch_norm_train(x, gamma, beta, 1e-5)?;
            let s = t.silu(bn);
            Ok(t.sigmoid(s))
        });
        prop_assert!(err < 1e-4, "bn/silu/sigmoid rel err {err}");
    }

    #[test]
    fn pooling_gradients(rows in 2usize..7, cols in 2usize..7, seed in 0u64..1000) {
        let mut ps = ParamSet::new();
        ps.add("x", seeded_tensor(&[rows, cols], seed, 1.0), true);
        let err = check_layer(&mut ps, seed, |t| {
            let x = t.param_named("x")?;
            t.masked_max_rows(x, None)
        });
        prop_assert!(err < 1e-4, "masked max rel err {err}");

        let mut ps = ParamSet::new();
        ps.add("x", seeded_tensor(&[rows, cols], seed + 7, 1.0), true);
        let err = check_layer(&mut ps, seed + 7, |t| {
            let x = t.param_named("x")?;
            t.maxpool1d(x, 2, 2)
        });
        prop_assert!(err < 1e-4, "maxpool1d rel err {err}");

        let mut ps = ParamSet::new();
        ps.add("x", seeded_tensor(&[rows, cols, cols], seed + 9, 1.0), true);
        let err = check_layer(&mut ps, seed + 9, |t| {
            let x = t.param_named("x")?;
            t.global_avg_pool2d(x)
        });
        prop_assert!(err < 1e-4, "gap rel err {err}");
    }
}

/// 32-sample memorization with the raw engine: four well-separated Gaussian
/// clusters, a two-layer MLP, batch-mean gradients, Adam. The per-epoch loss
/// must fall monotonically (one blip allowed) after the first epoch and
/// reach < 0.1 within ten epochs.
#[test]
fn engine_memorizes_a_toy_task_quickly() {
    let n = 32;
    let classes = 4;
    let dim = 8;
    let mut rng = substream(11, Stream::Sample, 0);
    let mut inputs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % classes;
        let mut x = vec![0.0; dim];
        for (j, v) in x.iter_mut().enumerate() {
            *v = 0.3 * normal(&mut rng) + if j == 2 * class { 3.0 } else { 0.0 };
        }
        inputs.push(Tensor::from_vec(&[dim], x).unwrap());
        labels.push(class);
    }

    let mut params = ParamSet::new();
    params.add("w1", seeded_tensor(&[32, dim], 21, (2.0 / dim as f64).sqrt()), true);
    params.add("b1", seeded_tensor(&[32], 22, 0.1), true);
    params.add("w2", seeded_tensor(&[classes, 32], 23, 0.05), true);
    params.add("b2", seeded_tensor(&[classes], 24, 0.05), true);
    let mut adam = AdamState::new(
        &params,
        AdamConfig { learning_rate: 0.05, weight_decay: 0.0, ..Default::default() },
    );

    let mut epoch_losses = Vec::new();
    for _epoch in 0..10 {
        // Full batch: one deterministic step per epoch.
        let results = run_indexed(&SequentialPool, n, |i| {
            let mut tape = Tape::new(&params);
            let x = tape.input(inputs[i].clone());
            let w1 = tape.param_named("w1").unwrap();
            let b1 = tape.param_named("b1").unwrap();
            let h = tape.linear(x, w1, b1).unwrap();
            let h = tape.relu(h);
            let w2 = tape.param_named("w2").unwrap();
            let b2 = tape.param_named("b2").unwrap();
            let logits = tape.linear(h, w2, b2).unwrap();
            let probs = tape.softmax(logits).unwrap();
            let loss = tape.cross_entropy(probs, labels[i]).unwrap();
            let grads = tape.backward(loss).unwrap();
            (tape.value(loss).item(), grads)
        });
        let mut acc = Gradients::empty(params.len());
        let mut loss_sum = 0.0;
        for (loss, grads) in &results {
            loss_sum += loss;
            acc.accumulate(grads);
        }
        acc.scale(1.0 / n as f64);
        adam.step(&mut params, &acc);
        epoch_losses.push(loss_sum / n as f64);
    }

    let mut blips = 0;
    for pair in epoch_losses[1..].windows(2) {
        if pair[1] >= pair[0] {
            blips += 1;
        }
    }
    assert!(blips <= 1, "loss not monotone: {epoch_losses:?}");
    // Loss after the final step, not the running average of the last epoch.
    let final_loss = {
        let results = run_indexed(&SequentialPool, n, |i| {
            let mut tape = Tape::new(&params);
            let x = tape.input(inputs[i].clone());
            let w1 = tape.param_named("w1").unwrap();
            let b1 = tape.param_named("b1").unwrap();
            let h = tape.linear(x, w1, b1).unwrap();
            let h = tape.relu(h);
            let w2 = tape.param_named("w2").unwrap();
            let b2 = tape.param_named("b2").unwrap();
            let logits = tape.linear(h, w2, b2).unwrap();
            let probs = tape.softmax(logits).unwrap();
            let loss = tape.cross_entropy(probs, labels[i]).unwrap();
            tape.value(loss).item()
        });
        results.iter().sum::<f64>() / n as f64
    };
    assert!(final_loss < 0.1, "final loss {final_loss}, history {epoch_losses:?}");
}
