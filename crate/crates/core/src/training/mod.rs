//! Windowing, normalization, Adam and the minibatch training loop.

mod adam;
mod prep;

pub use adam::{adam_step, adam_update, clip_global_norm, Adam, AdamState};
pub use prep::{denormalize, make_windows, normalize, window_starts, Chunk, Normalization};

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::{Tape, Tensor};
use crate::nets::{unroll, ModelConfig, ModelParams, NetsError, UnrollMode};
use crate::objective::{sisvae_loss_graph, LossBreakdown, ObjectiveError, Regularizer};
use crate::rng::{derive_rng, stream};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error(transparent)]
    Nets(#[from] NetsError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub window_w: usize,
    pub step_s: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub lambda: f64,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub regularizer: Regularizer,
    /// Global gradient-norm ceiling applied before every update.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = Adam::default();
        TrainConfig {
            window_w: 120,
            step_s: 120,
            batch_size: 8,
            epochs: 200,
            lr: 1e-3,
            lambda: 0.5,
            seed: 0,
            adam_beta1: adam.beta1,
            adam_beta2: adam.beta2,
            adam_eps: adam.eps,
            regularizer: Regularizer::Kl,
            clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> Adam {
        Adam {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::InvalidConfig(msg));
        if self.window_w < 2 {
            return bad(format!("window_w must be >= 2, got {}", self.window_w));
        }
        if self.step_s < 1 || self.batch_size < 1 || self.epochs < 1 {
            return bad("step_s, batch_size and epochs must be >= 1".into());
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad(format!("lr must be > 0, got {}", self.lr));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(0.0 < self.adam_beta1 && self.adam_beta1 < self.adam_beta2 && self.adam_beta2 < 1.0) {
            return bad("need 0 < beta1 < beta2 < 1".into());
        }
        if !(self.adam_eps > 0.0) || !(self.clip_norm > 0.0) {
            return bad("adam_eps and clip_norm must be > 0".into());
        }
        Ok(())
    }
}

/// Mean loss components of one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub inference_kl: f64,
    pub neg_loglik: f64,
    pub smooth: f64,
    pub total: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn totals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.total).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,inference_kl,neg_loglik,smooth,total,seconds\n");
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.epoch, r.inference_kl, r.neg_loglik, r.smooth, r.total, r.seconds
            )
            .unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), TrainError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Final state of a training run.
#[derive(Clone, Debug)]
pub struct TrainRun {
    pub params: ModelParams,
    pub optimizer: AdamState,
    pub history: TrainHistory,
}

/// Standard-normal `W x z_dim` draws for one chunk visit.
pub fn train_noise(
    seed: u64,
    epoch: usize,
    chunk_index: usize,
    w: usize,
    z_dim: usize,
) -> Array2<f64> {
    let mut rng = derive_rng(
        seed,
        stream::TRAIN_NOISE,
        &[epoch as u64, chunk_index as u64],
    );
    Array2::from_shape_simple_fn((w, z_dim), || rng.sample(StandardNormal))
}

/// Loss of one chunk and its gradient for every parameter tensor, in
/// storage order.
pub fn chunk_loss_and_grad(
    params: &ModelParams,
    x_chunk: ArrayView2<'_, f64>,
    noise: ArrayView2<'_, f64>,
    lambda: f64,
    regularizer: Regularizer,
) -> Result<(LossBreakdown, Vec<Tensor>), TrainError> {
    let tape = Tape::new();
    let bound = params.bind(&tape, true);
    let trace = unroll(&bound, x_chunk, noise, UnrollMode::Train)?;
    let (root, breakdown) = sisvae_loss_graph(&trace, x_chunk, lambda, regularizer)?;
    let grads = tape.backward(root).map_err(NetsError::from)?;
    let per_param = bound
        .vars()
        .iter()
        .map(|v| grads.get_or_zeros(*v))
        .collect();
    Ok((breakdown, per_param))
}

fn check_dataset(
    dataset: &[Chunk],
    config: &TrainConfig,
    model: &ModelConfig,
) -> Result<(), TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    for (i, c) in dataset.iter().enumerate() {
        if c.values.dim() != (model.x_dim, config.window_w) {
            return Err(TrainError::Shape(format!(
                "chunk {i} is {:?}, expected ({}, {})",
                c.values.dim(),
                model.x_dim,
                config.window_w
            )));
        }
    }
    Ok(())
}

/// Trains from a seeded initialization.
pub fn train(
    dataset: &[Chunk],
    config: &TrainConfig,
    model_config: ModelConfig,
) -> Result<(ModelParams, TrainHistory), TrainError> {
    let run = train_full(dataset, config, model_config)?;
    Ok((run.params, run.history))
}

pub fn train_full(
    dataset: &[Chunk],
    config: &TrainConfig,
    model_config: ModelConfig,
) -> Result<TrainRun, TrainError> {
    let params = ModelParams::init(model_config, config.seed)?;
    let optimizer = AdamState::zeros(&params);
    train_from(params, optimizer, dataset, config)
}

/// Continues training from given weights and optimizer state.
///
/// Each epoch shuffles the chunk order, walks it in minibatches of
/// `batch_size`, averages the chunk losses of a batch, clips the gradient and
/// takes one Adam step. Chunks of a batch are evaluated in parallel and their
/// gradients summed in batch order, so results do not depend on the thread
/// count.
pub fn train_from(
    mut params: ModelParams,
    mut optimizer: AdamState,
    dataset: &[Chunk],
    config: &TrainConfig,
) -> Result<TrainRun, TrainError> {
    config.validate()?;
    let model = *params.config();
    check_dataset(dataset, config, &model)?;
    let adam = config.adam();
    let first_epoch = optimizer_epoch_offset(&optimizer, dataset.len(), config.batch_size);
    let mut history = TrainHistory::default();

    for e in 0..config.epochs {
        let epoch = first_epoch + e;
        let started = Instant::now();
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut derive_rng(
            config.seed,
            stream::SHUFFLE,
            &[epoch as u64],
        ));

        let mut seen = Vec::with_capacity(dataset.len());
        for (batch_index, batch) in order.chunks(config.batch_size).enumerate() {
            let results: Vec<Result<(LossBreakdown, Vec<Tensor>), TrainError>> = batch
                .par_iter()
                .map(|&ci| {
                    let noise = train_noise(config.seed, epoch, ci, config.window_w, model.z_dim);
                    chunk_loss_and_grad(
                        &params,
                        dataset[ci].values.view(),
                        noise.view(),
                        config.lambda,
                        config.regularizer,
                    )
                })
                .collect();

            let scale = 1.0 / batch.len() as f64;
            let mut grads: Option<Vec<Tensor>> = None;
            let mut batch_losses = Vec::with_capacity(batch.len());
            for r in results {
                let (loss, g) = r?;
                batch_losses.push(loss);
                match grads.as_mut() {
                    None => grads = Some(g),
                    Some(acc) => {
                        for (a, b) in acc.iter_mut().zip(&g) {
                            a.data_mut()
                                .iter_mut()
                                .zip(b.data())
                                .for_each(|(x, y)| *x += y);
                        }
                    }
                }
            }
            let mut grads = grads.expect("batches are non-empty");
            for g in grads.iter_mut() {
                g.data_mut().iter_mut().for_each(|v| *v *= scale);
            }
            let mean_total = batch_losses.iter().map(|l| l.total).sum::<f64>() * scale;
            let non_finite = || TrainError::NonFinite {
                epoch: epoch + 1,
                batch: batch_index,
            };
            if !mean_total.is_finite() || !grads.iter().all(Tensor::is_finite) {
                return Err(non_finite());
            }
            clip_global_norm(&mut grads, config.clip_norm);
            adam_step(&mut params, &grads, &mut optimizer, config.lr, &adam)?;
            if !params.tensors().iter().all(Tensor::is_finite) {
                return Err(non_finite());
            }
            seen.extend(batch_losses);
        }

        let mean = LossBreakdown::mean(&seen).expect("dataset is non-empty");
        history.records.push(EpochRecord {
            epoch: epoch + 1,
            inference_kl: mean.inference_kl,
            neg_loglik: mean.neg_loglik,
            smooth: mean.smooth,
            total: mean.total,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok(TrainRun {
        params,
        optimizer,
        history,
    })
}

// Resumed runs continue the epoch counter so shuffles and noise are not
// replayed from epoch 0.
fn optimizer_epoch_offset(state: &AdamState, n_chunks: usize, batch_size: usize) -> usize {
    let per_epoch = n_chunks.div_ceil(batch_size) as u64;
    (state.step / per_epoch.max(1)) as usize
}
