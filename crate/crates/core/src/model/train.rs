//! Training and evaluation loops.
//!
//! Batches are processed as independent per-sample forward/backward passes
//! whose gradients are summed in sample order, so a task pool can fan the
//! samples out to workers without changing a single bit of the result.
//! Batch-norm running statistics are folded in the same fixed order.

use alloc::string::String;
use alloc::vec::Vec;

use super::{forward, init_params, ModelConfig, ModelError, Phase};
use crate::exec::{run_indexed, TaskPool};
use crate::nn::{AdamConfig, AdamState, Gradients, ParamSet, Tape};
use crate::preprocess::{preprocess_sample, NormalizationStats, PreprocessedSample};
use crate::rng::{shuffle, substream, Stream};
use crate::scenario::Dataset;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            batch_size: 16,
            adam: AdamConfig::default(),
            seed: 0,
            model: ModelConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    /// NaN when the validation split is empty.
    pub val_acc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    /// Parameters of the best-validation epoch (final epoch when there is
    /// no validation split).
    pub params: ParamSet,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    /// Count of samples whose predicted probability needed the
    /// cross-entropy clamp at any point during training.
    pub clamped_losses: usize,
}

struct SampleResult {
    loss: f64,
    correct: bool,
    clamped: bool,
    grads: Gradients,
    bn_observed: Vec<(String, String, Vec<f64>, Vec<f64>)>,
}

fn preprocess_for(
    ds: &Dataset,
    index: usize,
    cfg: &ModelConfig,
    stats: &NormalizationStats,
    seed: u64,
) -> Result<PreprocessedSample, ModelError> {
    Ok(preprocess_sample(
        &ds.samples[index],
        stats,
        &cfg.modalities,
        cfg.pointnet.target_points,
        seed,
        index as u64,
    )?)
}

fn forward_backward(
    ds: &Dataset,
    index: usize,
    params: &ParamSet,
    cfg: &ModelConfig,
    stats: &NormalizationStats,
    seed: u64,
) -> Result<SampleResult, ModelError> {
    let prep = preprocess_for(ds, index, cfg, stats, seed)?;
    let mut tape = Tape::new(params);
    let pass = forward(&mut tape, cfg, &prep, Phase::Train)?;
    let loss_node = tape.cross_entropy(pass.probs, prep.label)?;
    let loss = tape.value(loss_node).item();
    let probs = tape.value(pass.probs).data();
    let correct = super::top_m(probs, 1).map(|v| v[0].zero_based() == prep.label)?;
    let clamped = probs[prep.label] < crate::nn::CROSS_ENTROPY_CLAMP;
    let grads = tape.backward(loss_node)?;
    let bn_observed = pass
        .bn_updates
        .iter()
        .map(|u| {
            let (mean, var) = tape.bn_observed(u.node).expect("train-mode bn node");
            (u.mean_name.clone(), u.var_name.clone(), mean.to_vec(), var.to_vec())
        })
        .collect();
    Ok(SampleResult { loss, correct, clamped, grads, bn_observed })
}

fn fold_running_stats(params: &mut ParamSet, momentum: f64, results: &[SampleResult]) {
    for result in results {
        for (mean_name, var_name, mean, var) in &result.bn_observed {
            for (name, observed) in [(mean_name, mean), (var_name, var)] {
                let slot = params.slot(name).expect("bn stat parameter exists");
                for (run, &obs) in params.tensor_mut(slot).data_mut().iter_mut().zip(observed) {
                    *run = (1.0 - momentum) * *run + momentum * obs;
                }
            }
        }
    }
}

/// Mean cross-entropy and top-1 accuracy over `indices` with frozen
/// parameters (inference-mode batch norm). Position-normalization stats are
/// read from the parameter set.
pub fn evaluate_split(
    ds: &Dataset,
    indices: &[usize],
    params: &ParamSet,
    cfg: &TrainConfig,
    pool: &dyn TaskPool,
) -> Result<(f64, f64), ModelError> {
    if indices.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let stats = NormalizationStats::from_tensor(params.tensor_named("preproc.pos_stats")?)?;
    let results = run_indexed(pool, indices.len(), |k| -> Result<(f64, bool), ModelError> {
        let prep = preprocess_for(ds, indices[k], &cfg.model, &stats, cfg.seed)?;
        let mut tape = Tape::new(params);
        let pass = forward(&mut tape, &cfg.model, &prep, Phase::Eval)?;
        let loss_node = tape.cross_entropy(pass.probs, prep.label)?;
        let probs = tape.value(pass.probs).data();
        let correct = super::top_m(probs, 1)?[0].zero_based() == prep.label;
        Ok((tape.value(loss_node).item(), correct))
    });
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for r in results {
        let (loss, ok) = r?;
        loss_sum += loss;
        correct += ok as usize;
    }
    Ok((loss_sum / indices.len() as f64, correct as f64 / indices.len() as f64))
}

/// Minimizes batch-mean cross-entropy with Adam over the training split,
/// recording per-epoch train loss/accuracy and validation accuracy, and
/// returns the best-validation parameters. Deterministic given
/// `cfg.seed`, for any task pool.
pub fn train(
    ds: &Dataset,
    cfg: &TrainConfig,
    pool: &dyn TaskPool,
) -> Result<TrainOutput, ModelError> {
    train_with(ds, cfg, pool, &mut |_, _| Ok(()))
}

/// [`train`] with an end-of-epoch observer (checkpointing, progress logs).
/// The observer sees the current parameters after each epoch's updates.
pub fn train_with(
    ds: &Dataset,
    cfg: &TrainConfig,
    pool: &dyn TaskPool,
    on_epoch: &mut dyn FnMut(&ParamSet, &EpochStats) -> Result<(), ModelError>,
) -> Result<TrainOutput, ModelError> {
    cfg.model.validate()?;
    if ds.split.train.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let stats = NormalizationStats::from_training_split(ds)?;
    let mut params = init_params(&cfg.model, cfg.seed)?;
    let stats_slot = params.slot("preproc.pos_stats").expect("added by init");
    *params.tensor_mut(stats_slot) = stats.to_tensor();

    let mut adam = AdamState::new(&params, cfg.adam);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(ParamSet, f64, usize)> = None;
    let mut clamped_losses = 0usize;

    for epoch in 0..cfg.epochs {
        let mut order = ds.split.train.clone();
        let mut rng = substream(cfg.seed, Stream::Shuffle, epoch as u64);
        shuffle(&mut order, &mut rng);

        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let results = run_indexed(pool, batch.len(), |k| {
                forward_backward(ds, batch[k], &params, &cfg.model, &stats, cfg.seed)
            });
            let mut batch_grads = Gradients::empty(params.len());
            let mut ok_results = Vec::with_capacity(batch.len());
            for r in results {
                let r = r?;
                batch_grads.accumulate(&r.grads);
                loss_sum += r.loss;
                correct += r.correct as usize;
                clamped_losses += r.clamped as usize;
                ok_results.push(r);
            }
            batch_grads.scale(1.0 / batch.len() as f64);
            adam.step(&mut params, &batch_grads);
            fold_running_stats(&mut params, cfg.model.visual.bn_momentum, &ok_results);
        }

        let train_loss = loss_sum / order.len() as f64;
        let train_acc = correct as f64 / order.len() as f64;
        let (_, val_acc) = evaluate_split(ds, &ds.split.val, &params, cfg, pool)?;
        let stats = EpochStats { epoch, train_loss, train_acc, val_acc };
        on_epoch(&params, &stats)?;
        history.push(stats);

        if !val_acc.is_nan() {
            let improved = best.as_ref().map_or(true, |(_, acc, _)| val_acc > *acc);
            if improved {
                best = Some((params.clone(), val_acc, epoch));
            }
        }
    }

    let (out_params, best_epoch) = match best {
        Some((p, _, epoch)) => (p, epoch),
        None => (params, cfg.epochs.saturating_sub(1)),
    };
    Ok(TrainOutput { params: out_params, history, best_epoch, clamped_losses })
}
