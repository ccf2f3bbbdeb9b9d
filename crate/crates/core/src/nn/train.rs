use std::time::Instant;

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::mlp::Model;
use super::tape::{Mat, Tape, Var};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Seed of the noise used when a validation loss is stochastic; fixed so
/// successive checks are comparable.
const VALIDATION_SEED: u64 = 0x5eed_0f_7a11;

/// A differentiable training objective for a model of type `M`.
pub trait Objective<M: Model> {
    /// Loss of one batch as a scalar node; `params` are bound in
    /// [`Model::parameters`] order.
    fn loss(&self, model: &M, tape: &mut Tape, params: &[Var], batch: &Mat, rng: &mut Rng) -> Result<Var>;

    /// Loss on held-out data, evaluated without gradients.
    fn validation_loss(&self, model: &M, val: &Mat) -> Result<f64> {
        let mut tape = Tape::new();
        let params = tape.bind_constants(model.parameters());
        let mut r = rng::seeded(VALIDATION_SEED);
        let loss = self.loss(model, &mut tape, &params, val, &mut r)?;
        Ok(tape.scalar(loss))
    }

    /// Called before every validation check and on the returned model, e.g.
    /// to refresh statistics frozen from the full training set.
    fn prepare_evaluation(&self, _model: &mut M, _train: &Mat) -> Result<()> {
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TrainOptions {
    pub batch_size: usize,
    pub lr: f64,
    /// Non-improving validation checks tolerated before stopping.
    pub patience: usize,
    /// Batches between validation checks.
    pub check_interval: usize,
    pub max_batches: usize,
    pub seed: u64,
    #[serde(skip)]
    pub deadline: Option<Instant>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            batch_size: 64,
            lr: 1e-3,
            patience: 200,
            check_interval: 1,
            max_batches: 50_000,
            seed: 0,
            deadline: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainStatus {
    EarlyStopped,
    MaxBatches,
    /// A loss or parameter became non-finite; the best finite snapshot is
    /// returned.
    NonFinite,
    TimedOut,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct History {
    pub train_loss: Vec<f64>,
    /// `(batches completed, validation loss)` per check.
    pub val_loss: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub status: TrainStatus,
    pub batches: usize,
    pub best_batch: usize,
    pub best_val_loss: f64,
    pub history: History,
}

/// Mini-batch Adam with early stopping on `val`. The model is left at the
/// snapshot with the lowest validation loss (the initial parameters count as
/// a check).
pub fn train<M: Model>(
    model: &mut M,
    objective: &impl Objective<M>,
    train: &Mat,
    val: &Mat,
    opts: &TrainOptions,
) -> Result<TrainReport> {
    let n = train.nrows();
    if n == 0 || val.nrows() == 0 {
        return Err(Error::InsufficientData("training needs non-empty train and validation sets".into()));
    }
    if opts.batch_size == 0 || opts.check_interval == 0 {
        return Err(Error::invalid("batch size and check interval must be positive"));
    }
    let mut order_rng = rng::seeded(rng::derive_seed(opts.seed, 1));
    let mut noise_rng = rng::seeded(rng::derive_seed(opts.seed, 2));
    let mut adam = Adam::new(opts.lr);
    let mut history = History::default();

    objective.prepare_evaluation(model, train)?;
    let mut best_val = objective.validation_loss(model, val)?;
    history.val_loss.push((0, best_val));
    if !best_val.is_finite() {
        best_val = f64::INFINITY;
    }
    let mut best = model.clone();
    let mut best_batch = 0;
    let mut since_improve = 0;

    let batch_size = opts.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    let mut status = TrainStatus::MaxBatches;
    let mut batches = 0;

    while batches < opts.max_batches {
        if opts.deadline.is_some_and(|d| Instant::now() >= d) {
            status = TrainStatus::TimedOut;
            break;
        }
        if cursor + batch_size > n {
            rng::shuffle(&mut order_rng, &mut order);
            cursor = 0;
        }
        let batch = train.select(Axis(0), &order[cursor..cursor + batch_size]);
        cursor += batch_size;

        let mut tape = Tape::new();
        let params = tape.bind_params(model.parameters());
        let loss = objective.loss(model, &mut tape, &params, &batch, &mut noise_rng)?;
        let value = tape.scalar(loss);
        if !value.is_finite() {
            log::warn!("non-finite training loss after {batches} batches");
            status = TrainStatus::NonFinite;
            break;
        }
        let grads = tape.backward(loss);
        let grads: Vec<Mat> = params.iter().map(|&p| grads.wrt(p)).collect();
        adam.step(model.parameters_mut(), &grads);
        batches += 1;
        history.train_loss.push(value);
        if !model.params_finite() {
            status = TrainStatus::NonFinite;
            break;
        }

        if batches % opts.check_interval == 0 {
            objective.prepare_evaluation(model, train)?;
            let v = objective.validation_loss(model, val)?;
            history.val_loss.push((batches, v));
            if !v.is_finite() {
                status = TrainStatus::NonFinite;
                break;
            }
            if v < best_val {
                best_val = v;
                best = model.clone();
                best_batch = batches;
                since_improve = 0;
            } else {
                since_improve += 1;
                if since_improve > opts.patience {
                    status = TrainStatus::EarlyStopped;
                    break;
                }
            }
        }
    }
    *model = best;
    objective.prepare_evaluation(model, train)?;
    Ok(TrainReport {
        status,
        batches,
        best_batch,
        best_val_loss: best_val,
        history,
    })
}
