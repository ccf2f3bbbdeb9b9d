use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::gaussian::{kld_rows, logpdf_rows, LN_2PI, LOG_SIGMA_MAX, LOG_SIGMA_MIN};
use super::mmd::{mmd_on_tape, MmdKernel};
use crate::error::{Error, Result};
use crate::nn::{Activation, Mat, Mlp, Model, Objective, Tape, Var};
use crate::rng::{self, Rng};

/// How the decoder's output variance is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum DecoderVariance {
    /// Fixed variance, not learned.
    Constant { variance: f64 },
    /// One learned variance per sample.
    Scalar,
    /// One learned variance per sample and feature.
    Diagonal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Prior {
    Normal,
    /// Uniform mixture of the encoder applied to learnable pseudo-inputs.
    Vamp { components: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoEncoderSpec {
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub n_layers: usize,
    pub activation: Activation,
    pub variance: DecoderVariance,
    pub prior: Prior,
}

/// Gaussian encoder `x -> (mu, log sigma)` and Gaussian decoder
/// `z -> (mean, log sigma)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AutoEncoder {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub input_dim: usize,
    pub latent_dim: usize,
    pub variance: DecoderVariance,
    pub pseudo_inputs: Option<Mat>,
    /// Use the encoder mean as the latent code instead of sampling.
    #[serde(default)]
    pub deterministic_encoder: bool,
}

/// Parameter handles of one tape binding.
pub(crate) struct Bound<'a> {
    pub enc: &'a [Var],
    pub dec: &'a [Var],
    pub pseudo: Option<Var>,
}

impl AutoEncoder {
    /// Randomly initialized model; Vamp pseudo-inputs start at
    /// `center` plus standard normal noise.
    pub fn new(input_dim: usize, spec: &AutoEncoderSpec, center: Option<&[f64]>, seed: u64) -> Result<Self> {
        if spec.latent_dim == 0 || input_dim == 0 {
            return Err(Error::invalid("latent and input dimensions must be positive"));
        }
        if let DecoderVariance::Constant { variance } = spec.variance {
            if !(variance > 0.0) {
                return Err(Error::invalid("decoder variance must be positive"));
            }
        }
        let dec_out = match spec.variance {
            DecoderVariance::Constant { .. } => input_dim,
            DecoderVariance::Scalar => input_dim + 1,
            DecoderVariance::Diagonal => 2 * input_dim,
        };
        let encoder = Mlp::with_depth(
            input_dim,
            spec.hidden_dim,
            2 * spec.latent_dim,
            spec.n_layers,
            spec.activation,
            rng::derive_seed(seed, 1),
        );
        let decoder = Mlp::with_depth(
            spec.latent_dim,
            spec.hidden_dim,
            dec_out,
            spec.n_layers,
            spec.activation,
            rng::derive_seed(seed, 2),
        );
        let pseudo_inputs = match spec.prior {
            Prior::Normal => None,
            Prior::Vamp { components } => {
                if components == 0 {
                    return Err(Error::invalid("vamp prior needs at least one component"));
                }
                let mut r = rng::seeded(rng::derive_seed(seed, 3));
                let zero = vec![0.0; input_dim];
                let c = center.unwrap_or(&zero);
                Some(Array2::from_shape_fn((components, input_dim), |(_, j)| {
                    c[j] + rng::normal(&mut r)
                }))
            }
        };
        Ok(AutoEncoder {
            encoder,
            decoder,
            input_dim,
            latent_dim: spec.latent_dim,
            variance: spec.variance,
            pseudo_inputs,
            deterministic_encoder: false,
        })
    }

    pub(crate) fn bind<'a>(&self, params: &'a [Var]) -> Bound<'a> {
        let ne = self.encoder.n_tensors();
        let nd = self.decoder.n_tensors();
        Bound {
            enc: &params[..ne],
            dec: &params[ne..ne + nd],
            pseudo: self.pseudo_inputs.as_ref().map(|_| params[ne + nd]),
        }
    }

    /// Encoder mean and clamped log standard deviation.
    pub(crate) fn encode(&self, t: &mut Tape, p: &Bound, x: Var) -> (Var, Var) {
        let out = self.encoder.forward(t, p.enc, x);
        let l = self.latent_dim;
        let mu = t.slice_cols(out, 0, l);
        let ls = t.slice_cols(out, l, 2 * l);
        (mu, t.clamp(ls, LOG_SIGMA_MIN, LOG_SIGMA_MAX))
    }

    /// Decoder mean and log standard deviation (`1 x 1`, `n x 1` or `n x d`).
    pub(crate) fn decode(&self, t: &mut Tape, p: &Bound, z: Var) -> (Var, Var) {
        let out = self.decoder.forward(t, p.dec, z);
        let d = self.input_dim;
        let mean = t.slice_cols(out, 0, d);
        let ls = match self.variance {
            DecoderVariance::Constant { variance } => t.scalar_constant(0.5 * variance.ln()),
            DecoderVariance::Scalar => {
                let s = t.slice_cols(out, d, d + 1);
                t.clamp(s, LOG_SIGMA_MIN, LOG_SIGMA_MAX)
            }
            DecoderVariance::Diagonal => {
                let s = t.slice_cols(out, d, 2 * d);
                t.clamp(s, LOG_SIGMA_MIN, LOG_SIGMA_MAX)
            }
        };
        (mean, ls)
    }

    /// Reparameterized draw `mu + sigma * eps`.
    pub(crate) fn sample_latent(&self, t: &mut Tape, mu: Var, ls: Var, r: &mut Rng) -> Var {
        if self.deterministic_encoder {
            return mu;
        }
        reparameterize(t, mu, ls, r)
    }

    /// Row-wise reconstruction log-likelihood `log p(x | z)`.
    pub(crate) fn reconstruction_rows(&self, t: &mut Tape, p: &Bound, x: Var, z: Var) -> Var {
        let (mean, ls) = self.decode(t, p, z);
        logpdf_rows(t, x, mean, ls)
    }

    /// Row-wise prior log-density of latent codes.
    pub(crate) fn log_prior_rows(&self, t: &mut Tape, p: &Bound, z: Var) -> Var {
        match p.pseudo {
            None => {
                let l = self.latent_dim as f64;
                let sq = t.square(z);
                let s = t.sum_rows(sq);
                let s = t.offset(s, l * LN_2PI);
                t.scale(s, -0.5)
            }
            Some(u) => {
                let (mu, ls) = self.encode(t, p, u);
                vamp_log_density(t, z, mu, ls)
            }
        }
    }

    /// `n` draws from the prior; differentiable in the pseudo-inputs.
    pub(crate) fn sample_prior(&self, t: &mut Tape, p: &Bound, n: usize, r: &mut Rng) -> Var {
        let l = self.latent_dim;
        match p.pseudo {
            None => t.constant(Mat::from_shape_fn((n, l), |_| rng::normal(r))),
            Some(u) => {
                let (mu, ls) = self.encode(t, p, u);
                let k = t.shape(mu).0;
                let mut pick = Mat::zeros((n, k));
                for i in 0..n {
                    pick[[i, rng::index(r, k)]] = 1.0;
                }
                let pick = t.constant(pick);
                let m = t.matmul(pick, mu);
                let s = t.matmul(pick, ls);
                reparameterize(t, m, s, r)
            }
        }
    }

    /// Encoder means for every row of `x`.
    pub fn encode_mean(&self, x: &Mat) -> Mat {
        let out = self.encoder.eval(x);
        out.slice(ndarray::s![.., ..self.latent_dim]).to_owned()
    }
}

fn reparameterize(t: &mut Tape, mu: Var, ls: Var, r: &mut Rng) -> Var {
    let eps = Mat::from_shape_fn(t.shape(mu), |_| rng::normal(r));
    let eps = t.constant(eps);
    let sigma = t.exp(ls);
    let noise = t.mul(sigma, eps);
    t.add(mu, noise)
}

/// `log (1/K) sum_k N(z; mu_k, diag exp(2 ls_k))` for every row of `z`,
/// with component parameters in the rows of `mu` and `ls`.
pub(crate) fn vamp_log_density(t: &mut Tape, z: Var, mu: Var, ls: Var) -> Var {
    let (k, l) = t.shape(mu);
    let mut acc = None;
    for j in 0..l {
        let zj = t.slice_cols(z, j, j + 1);
        let mj = t.slice_cols(mu, j, j + 1);
        let mj = t.transpose(mj);
        let sj = t.slice_cols(ls, j, j + 1);
        let sj = t.transpose(sj);
        let r = t.sub(zj, mj);
        let r = t.square(r);
        let inv = t.scale(sj, -2.0);
        let inv = t.exp(inv);
        let q = t.mul(r, inv);
        let two = t.scale(sj, 2.0);
        let q = t.add(q, two);
        acc = Some(match acc {
            None => q,
            Some(a) => t.add(a, q),
        });
    }
    let q = t.offset(acc.unwrap(), l as f64 * LN_2PI);
    let comp = t.scale(q, -0.5);
    let lse = t.logsumexp_rows(comp);
    t.offset(lse, -(k as f64).ln())
}

impl Model for AutoEncoder {
    fn parameters(&self) -> Vec<&Mat> {
        let mut p = self.encoder.parameters();
        p.extend(self.decoder.parameters());
        p.extend(self.pseudo_inputs.iter());
        p
    }

    fn parameters_mut(&mut self) -> Vec<&mut Mat> {
        let mut p = self.encoder.parameters_mut();
        p.extend(self.decoder.parameters_mut());
        p.extend(self.pseudo_inputs.iter_mut());
        p
    }
}

/// Negative evidence lower bound averaged over the batch, with `n_mc`
/// reparameterized samples per row.
#[derive(Clone, Copy, Debug)]
pub struct ElboObjective {
    pub n_mc: usize,
}

impl Objective<AutoEncoder> for ElboObjective {
    fn loss(&self, m: &AutoEncoder, t: &mut Tape, params: &[Var], batch: &Mat, r: &mut Rng) -> Result<Var> {
        if m.pseudo_inputs.is_some() {
            return Err(Error::invalid("the ELBO objective uses the standard normal prior"));
        }
        let p = m.bind(params);
        let x = t.constant(batch.clone());
        let (mu, ls) = m.encode(t, &p, x);
        let mut recon = None;
        for _ in 0..self.n_mc.max(1) {
            let z = m.sample_latent(t, mu, ls, r);
            let lp = m.reconstruction_rows(t, &p, x, z);
            recon = Some(match recon {
                None => lp,
                Some(a) => t.add(a, lp),
            });
        }
        let recon = t.scale(recon.unwrap(), -1.0 / self.n_mc.max(1) as f64);
        let kld = kld_rows(t, mu, ls);
        let total = t.add(recon, kld);
        Ok(t.mean(total))
    }
}

/// Reconstruction error plus `lambda` times the unbiased MMD between the
/// encoded batch and a fresh prior sample of the same size.
#[derive(Clone, Copy, Debug)]
pub struct WaeObjective {
    pub lambda: f64,
    pub kernel: MmdKernel,
    pub bandwidth: f64,
}

impl WaeObjective {
    pub(crate) fn parts(
        &self,
        m: &AutoEncoder,
        t: &mut Tape,
        params: &[Var],
        batch: &Mat,
        r: &mut Rng,
    ) -> Result<(Var, Var)> {
        if batch.nrows() < 2 {
            return Err(Error::invalid("the MMD term needs batches of at least two rows"));
        }
        let p = m.bind(params);
        let x = t.constant(batch.clone());
        let (mu, ls) = m.encode(t, &p, x);
        let z = m.sample_latent(t, mu, ls, r);
        let lp = m.reconstruction_rows(t, &p, x, z);
        let recon = t.mean(lp);
        let recon = t.neg(recon);
        let prior = m.sample_prior(t, &p, batch.nrows(), r);
        let mmd = mmd_on_tape(t, z, prior, self.kernel, self.bandwidth);
        Ok((recon, mmd))
    }
}

impl Objective<AutoEncoder> for WaeObjective {
    fn loss(&self, m: &AutoEncoder, t: &mut Tape, params: &[Var], batch: &Mat, r: &mut Rng) -> Result<Var> {
        let (recon, mmd) = self.parts(m, t, params, batch, r)?;
        let d = t.scale(mmd, self.lambda);
        Ok(t.add(recon, d))
    }
}
