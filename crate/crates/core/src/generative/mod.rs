//! Variational and Wasserstein autoencoders with likelihood-based scores.

mod autoencoder;
mod gaussian;
mod mmd;
mod scores;

pub use autoencoder::{AutoEncoder, AutoEncoderSpec, DecoderVariance, ElboObjective, Prior, WaeObjective};
pub use gaussian::{kld_gaussian, LN_2PI, LOG_SIGMA_MAX, LOG_SIGMA_MIN};
pub use mmd::{mmd_unbiased, MmdKernel, RQ_ALPHA};
pub use scores::{
    jacodeco_terms, score_elbo, score_jacodeco, score_rm, score_rs, AeScore, JacodecoTerms, DEFAULT_MC_SAMPLES,
    SINGULAR_VALUE_FLOOR,
};

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::detector::{check_dims, Scorer};
use crate::error::{Error, Result};
use crate::nn::{self, Mat, Model, Objective, Tape, TrainOptions, TrainReport};

/// Training objective of an autoencoder detector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AeObjective {
    Vae,
    Wae { lambda: f64, kernel: MmdKernel, bandwidth: f64 },
}

/// Negative ELBO of one batch with a fixed noise seed (for diagnostics and
/// gradient checks).
pub fn elbo_loss(m: &AutoEncoder, batch: &Mat, n_mc: usize, seed: u64) -> Result<f64> {
    eval_loss(m, &ElboObjective { n_mc }, batch, seed)
}

/// WAE loss of one batch with a fixed noise seed.
pub fn wae_loss(m: &AutoEncoder, batch: &Mat, objective: &WaeObjective, seed: u64) -> Result<f64> {
    eval_loss(m, objective, batch, seed)
}

fn eval_loss(m: &AutoEncoder, obj: &impl Objective<AutoEncoder>, batch: &Mat, seed: u64) -> Result<f64> {
    let mut t = Tape::new();
    let params = t.bind_constants(m.parameters());
    let mut r = crate::rng::seeded(seed);
    let l = obj.loss(m, &mut t, &params, batch, &mut r)?;
    Ok(t.scalar(l))
}

/// Trains a fresh autoencoder on `train`, early-stopping on `val`.
pub fn fit_autoencoder(
    spec: &AutoEncoderSpec,
    objective: AeObjective,
    train: ArrayView2<f64>,
    val: ArrayView2<f64>,
    opts: &TrainOptions,
) -> Result<(AutoEncoder, TrainReport)> {
    let train = train.to_owned();
    let val = val.to_owned();
    let center = train.mean_axis(Axis(0)).ok_or_else(|| Error::Empty("training set".into()))?;
    let mut model = AutoEncoder::new(train.ncols(), spec, center.as_slice(), opts.seed)?;
    let report = match objective {
        AeObjective::Vae => {
            if matches!(spec.prior, Prior::Vamp { .. }) {
                return Err(Error::invalid("the Vamp prior is only available for WAE"));
            }
            nn::train(&mut model, &ElboObjective { n_mc: 1 }, &train, &val, opts)?
        }
        AeObjective::Wae { lambda, kernel, bandwidth } => {
            if !(lambda >= 0.0 && bandwidth > 0.0) {
                return Err(Error::invalid("WAE needs lambda >= 0 and bandwidth > 0"));
            }
            let obj = WaeObjective { lambda, kernel, bandwidth };
            nn::train(&mut model, &obj, &train, &val, opts)?
        }
    };
    Ok((model, report))
}

/// Fitted autoencoder paired with the score it reports.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AeDetector {
    pub model: AutoEncoder,
    pub score: AeScore,
    pub n_samples: usize,
    pub seed: u64,
}

impl Scorer for AeDetector {
    fn score(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        check_dims(self.model.input_dim, &x)?;
        let x = x.to_owned();
        match self.score {
            AeScore::Rm => Ok(score_rm(&self.model, &x)),
            AeScore::Rs => Ok(score_rs(&self.model, &x, self.n_samples, self.seed)),
            AeScore::Elbo => Ok(score_elbo(&self.model, &x, self.n_samples, self.seed)),
            AeScore::Jacodeco => score_jacodeco(&self.model, &x),
        }
    }
}
