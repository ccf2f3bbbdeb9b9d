//! Normalizing flows: affine coupling (RealNVP-style) and masked
//! autoregressive stacks, optionally interleaved with batch norm.

mod made;
mod stack;

pub use made::{input_degrees, made_masks, made_network, Ordering};
pub use stack::{
    flow_logpdf, Autoregressive, BatchNorm, Coupling, FlowKind, FlowLayer, FlowSpec, FlowStack, Mode, TanhScale,
    BATCH_NORM_EPS,
};

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::detector::{check_dims, Scorer};
use crate::error::Result;
use crate::nn::{self, Mat, Objective, Tape, TrainOptions, TrainReport, Var};
use crate::rng::Rng;

/// Mean negative log likelihood plus `l2 * ||theta||^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowObjective {
    pub l2: f64,
}

impl Objective<FlowStack> for FlowObjective {
    fn loss(&self, m: &FlowStack, t: &mut Tape, params: &[Var], batch: &Mat, _: &mut Rng) -> Result<Var> {
        let x = t.constant(batch.clone());
        let lp = m.log_density_tape(t, params, x, Mode::Train);
        let nll = t.mean(lp);
        let mut loss = t.neg(nll);
        if self.l2 > 0.0 {
            for &p in params {
                let sq = t.square(p);
                let sq = t.sum(sq);
                let sq = t.scale(sq, self.l2);
                loss = t.add(loss, sq);
            }
        }
        Ok(loss)
    }

    /// Held-out mean negative log likelihood with frozen statistics.
    fn validation_loss(&self, m: &FlowStack, val: &Mat) -> Result<f64> {
        let lp = flow_logpdf(m, val);
        Ok(-lp.iter().sum::<f64>() / lp.len() as f64)
    }

    fn prepare_evaluation(&self, m: &mut FlowStack, train: &Mat) -> Result<()> {
        m.refresh_batch_norm(train);
        Ok(())
    }
}

/// Trains a fresh flow on `train`, early-stopping on `val`.
pub fn fit_flow(
    spec: &FlowSpec,
    l2: f64,
    train: ArrayView2<f64>,
    val: ArrayView2<f64>,
    opts: &TrainOptions,
) -> Result<(FlowStack, TrainReport)> {
    if !(l2 >= 0.0) {
        return Err(crate::Error::invalid("l2 penalty must be non-negative"));
    }
    let train = train.to_owned();
    let val = val.to_owned();
    let mut model = FlowStack::new(train.ncols(), spec, opts.seed)?;
    let report = nn::train(&mut model, &FlowObjective { l2 }, &train, &val, opts)?;
    Ok((model, report))
}

/// Scores rows by their negative log density.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowDetector {
    pub model: FlowStack,
}

impl Scorer for FlowDetector {
    fn score(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        check_dims(self.model.dim, &x)?;
        Ok(flow_logpdf(&self.model, &x.to_owned()).into_iter().map(|v| -v).collect())
    }
}
