use std::time::Instant;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::config::{DetectorConfig, DetectorKind};
use crate::classical::{abod_fit, hbos_fit, iforest_fit, knn_fit, loda_fit, lof_fit, IForestParams};
use crate::detector::{check_dims, Scorer};
use crate::error::{Error, Result};
use crate::flows::{fit_flow, FlowDetector, FlowKind, FlowSpec};
use crate::generative::{fit_autoencoder, AeDetector, AeObjective, AutoEncoder, AutoEncoderSpec, DecoderVariance, Prior};
use crate::nn::{TrainOptions, TrainStatus};
use crate::ocsvm::{ocsvm_bag_fit, smo_train, Kernel, SmoOptions, SolverStatus};

/// A fitted detector of any kind.
pub struct Fitted {
    pub scorer: Box<dyn Scorer>,
    /// Iterative solvers and training loops finished without hitting a cap
    /// or producing non-finite values.
    pub converged: bool,
    /// The deadline interrupted fitting.
    pub timed_out: bool,
}

impl Fitted {
    fn done(scorer: impl Scorer + 'static) -> Self {
        Fitted { scorer: Box::new(scorer), converged: true, timed_out: false }
    }
}

fn train_options(cfg: &DetectorConfig, deadline: Option<Instant>) -> Result<TrainOptions> {
    Ok(TrainOptions {
        batch_size: cfg.usize("batch_size")?,
        lr: cfg.f64("lr")?,
        patience: cfg.usize("patience")?,
        check_interval: cfg.usize("check_interval")?,
        max_batches: cfg.usize("max_batches")?,
        seed: cfg.init_seed,
        deadline,
    })
}

fn status_flags(status: TrainStatus) -> (bool, bool) {
    (
        matches!(status, TrainStatus::EarlyStopped | TrainStatus::MaxBatches),
        status == TrainStatus::TimedOut,
    )
}

/// Autoencoder architecture described by a `vae`/`wae` config.
pub fn autoencoder_spec(cfg: &DetectorConfig) -> Result<AutoEncoderSpec> {
    let variance = match cfg.str("variance")? {
        "constant" => DecoderVariance::Constant { variance: cfg.f64("fixed_variance")? },
        "scalar" => DecoderVariance::Scalar,
        "diagonal" => DecoderVariance::Diagonal,
        other => return Err(Error::invalid(format!("unknown decoder variance {other:?}"))),
    };
    let prior = match cfg.params.get("prior").and_then(|v| v.as_str()) {
        None | Some("normal") => Prior::Normal,
        Some("vamp") => Prior::Vamp { components: cfg.usize("components")? },
        Some(other) => return Err(Error::invalid(format!("unknown prior {other:?}"))),
    };
    Ok(AutoEncoderSpec {
        latent_dim: cfg.usize("latent_dim")?,
        hidden_dim: cfg.usize("hidden_dim")?,
        n_layers: cfg.usize("n_layers")?,
        activation: cfg.str("activation")?.parse()?,
        variance,
        prior,
    })
}

/// Trains the autoencoder of a `vae`/`wae` config.
pub fn fit_autoencoder_config(
    cfg: &DetectorConfig,
    train: ArrayView2<f64>,
    val: ArrayView2<f64>,
    deadline: Option<Instant>,
) -> Result<(AutoEncoder, TrainStatus)> {
    let objective = match cfg.kind {
        DetectorKind::Vae => AeObjective::Vae,
        DetectorKind::Wae => AeObjective::Wae {
            lambda: cfg.f64("lambda")?,
            kernel: cfg.str("mmd_kernel")?.parse()?,
            bandwidth: cfg.f64("bandwidth")?,
        },
        other => return Err(Error::invalid(format!("{other} is not an autoencoder"))),
    };
    let (model, report) = fit_autoencoder(&autoencoder_spec(cfg)?, objective, train, val, &train_options(cfg, deadline)?)?;
    Ok((model, report.status))
}

fn flow_spec(cfg: &DetectorConfig) -> Result<FlowSpec> {
    let kind = match cfg.kind {
        DetectorKind::Realnvp => FlowKind::RealNvp { tanh_scaling: cfg.bool("tanh_scaling")? },
        DetectorKind::Maf => FlowKind::Maf {
            ordering: serde_json::from_value(cfg.params["ordering"].clone())
                .map_err(|_| Error::invalid("ordering must be natural or random"))?,
        },
        other => return Err(Error::invalid(format!("{other} is not a flow"))),
    };
    Ok(FlowSpec {
        kind,
        n_flows: cfg.usize("n_flows")?,
        hidden_dim: cfg.usize("hidden_dim")?,
        n_layers: cfg.usize("n_layers")?,
        activation: cfg.str("activation")?.parse()?,
        batch_norm: cfg.bool("batch_norm")?,
        init_identity: cfg.bool("init_identity")?,
    })
}

fn fit_ocsvm(cfg: &DetectorConfig, train: ArrayView2<f64>, deadline: Option<Instant>, n_bags: usize) -> Result<Fitted> {
    let kernel = Kernel::from_name(cfg.str("kernel")?, cfg.f64("gamma")?)?;
    let nu = cfg.f64("nu")?;
    let opts = SmoOptions { deadline, ..SmoOptions::default() };
    if n_bags <= 1 {
        let m = smo_train(train, nu, kernel, &opts)?;
        let (converged, timed_out) = (m.converged(), m.status == SolverStatus::TimedOut);
        Ok(Fitted { scorer: Box::new(m), converged, timed_out })
    } else {
        let m = ocsvm_bag_fit(train, nu, kernel, n_bags, cfg.init_seed, &opts)?;
        let converged = m.converged();
        let timed_out = m.members.iter().any(|s| s.status == SolverStatus::TimedOut);
        Ok(Fitted { scorer: Box::new(m), converged, timed_out })
    }
}

/// A classical detector applied to the latent means of a frozen encoder.
pub struct TwoStage {
    pub encoder: AutoEncoder,
    pub inner: Box<dyn Scorer>,
}

impl Scorer for TwoStage {
    fn score(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        check_dims(self.encoder.input_dim, &x)?;
        let z = self.encoder.encode_mean(&x.to_owned());
        self.inner.score(z.view())
    }
}

/// Fits a kNN or OC-SVM second stage on the latent means of `encoder`.
/// The encoder is cloned, never modified.
pub fn two_stage_fit(
    encoder: &AutoEncoder,
    second: &DetectorConfig,
    train: ArrayView2<f64>,
    deadline: Option<Instant>,
) -> Result<Fitted> {
    let z = encoder.encode_mean(&train.to_owned());
    let inner = match second.kind {
        DetectorKind::Knn | DetectorKind::VaeKnn => {
            Fitted::done(knn_fit(z.view(), second.usize("k")?, second.str("variant")?.parse()?)?)
        }
        DetectorKind::Ocsvm | DetectorKind::VaeOcsvm => fit_ocsvm(second, z.view(), deadline, 1)?,
        other => return Err(Error::invalid(format!("{other} cannot be a second stage"))),
    };
    Ok(Fitted {
        scorer: Box::new(TwoStage { encoder: encoder.clone(), inner: inner.scorer }),
        converged: inner.converged,
        timed_out: inner.timed_out,
    })
}

/// Fits the detector described by `cfg` on normal training rows; neural
/// models early-stop on `val_normals`. Two-stage kinds need `encoder`.
pub fn fit_detector(
    cfg: &DetectorConfig,
    train: ArrayView2<f64>,
    val_normals: ArrayView2<f64>,
    deadline: Option<Instant>,
    encoder: Option<&AutoEncoder>,
) -> Result<Fitted> {
    let seed = cfg.init_seed;
    Ok(match cfg.kind {
        DetectorKind::Knn => Fitted::done(knn_fit(train, cfg.usize("k")?, cfg.str("variant")?.parse()?)?),
        DetectorKind::Lof => Fitted::done(lof_fit(train, cfg.usize("k")?)?),
        DetectorKind::Hbos => Fitted::done(hbos_fit(train, cfg.usize("bins")?, cfg.f64("alpha")?, cfg.f64("tol")?)?),
        DetectorKind::Iforest => {
            let params = IForestParams {
                n_trees: cfg.usize("n_trees")?,
                max_samples: cfg.f64("max_samples")?,
                max_features: cfg.f64("max_features")?,
            };
            Fitted::done(iforest_fit(train, params, seed)?)
        }
        DetectorKind::Loda => Fitted::done(loda_fit(train, cfg.usize("bins")?, cfg.usize("cuts")?, seed)?),
        DetectorKind::Abod => Fitted::done(abod_fit(train, cfg.usize("k")?)?),
        DetectorKind::Ocsvm => fit_ocsvm(cfg, train, deadline, cfg.usize("n_bags")?)?,
        DetectorKind::Vae | DetectorKind::Wae => {
            let (model, status) = fit_autoencoder_config(cfg, train, val_normals, deadline)?;
            let (converged, timed_out) = status_flags(status);
            let det = AeDetector {
                model,
                score: cfg.str("score")?.parse()?,
                n_samples: cfg.usize("mc_samples")?,
                seed,
            };
            Fitted { scorer: Box::new(det), converged, timed_out }
        }
        DetectorKind::Realnvp | DetectorKind::Maf => {
            let opts = train_options(cfg, deadline)?;
            let (model, report) = fit_flow(&flow_spec(cfg)?, cfg.f64("l2")?, train, val_normals, &opts)?;
            let (converged, timed_out) = status_flags(report.status);
            Fitted { scorer: Box::new(FlowDetector { model }), converged, timed_out }
        }
        DetectorKind::VaeKnn | DetectorKind::VaeOcsvm => {
            let encoder = encoder.ok_or_else(|| Error::invalid(format!("{} needs a trained encoder", cfg.kind)))?;
            two_stage_fit(encoder, cfg, train, deadline)?
        }
    })
}

/// Which metadata a two-stage record carries about its encoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderSource {
    pub config_id: String,
    pub val_auc: f64,
}
