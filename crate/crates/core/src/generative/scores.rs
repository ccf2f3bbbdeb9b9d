use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::autoencoder::AutoEncoder;
use super::gaussian::{kld_rows, LN_2PI};
use crate::error::{Error, Result};
use crate::nn::{Mat, Model, Tape, Var};
use crate::rng;

/// Monte-Carlo samples used by the sampled scores.
pub const DEFAULT_MC_SAMPLES: usize = 100;

/// Floor on decoder-Jacobian singular values.
pub const SINGULAR_VALUE_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AeScore {
    /// Sampled reconstruction error.
    Rs,
    /// Reconstruction error at the encoder mean.
    Rm,
    /// Negative ELBO: sampled reconstruction plus KL divergence.
    Elbo,
    /// Tangent/orthogonal likelihood decomposition.
    Jacodeco,
}

impl std::str::FromStr for AeScore {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rs" => Ok(AeScore::Rs),
            "rm" => Ok(AeScore::Rm),
            "elbo" => Ok(AeScore::Elbo),
            "jacodeco" => Ok(AeScore::Jacodeco),
            other => Err(Error::invalid(format!("unknown score {other}"))),
        }
    }
}

fn column(t: &Tape, v: Var) -> Vec<f64> {
    t.value(v).column(0).to_vec()
}

/// `-log p(x | mu_enc(x))` per row.
pub fn score_rm(m: &AutoEncoder, x: &Mat) -> Vec<f64> {
    let mut t = Tape::new();
    let params = t.bind_constants(m.parameters());
    let p = m.bind(&params);
    let xv = t.constant(x.clone());
    let (mu, _) = m.encode(&mut t, &p, xv);
    let lp = m.reconstruction_rows(&mut t, &p, xv, mu);
    column(&t, lp).into_iter().map(|v| -v).collect()
}

/// `-(1/L) sum_l log p(x | z_l)` with `z_l` drawn from the encoder.
pub fn score_rs(m: &AutoEncoder, x: &Mat, n_samples: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::seeded(seed);
    let mut t = Tape::new();
    let params = t.bind_constants(m.parameters());
    let p = m.bind(&params);
    let xv = t.constant(x.clone());
    let (mu, ls) = m.encode(&mut t, &p, xv);
    let mut total = vec![0.0; x.nrows()];
    let n_samples = n_samples.max(1);
    for _ in 0..n_samples {
        let z = m.sample_latent(&mut t, mu, ls, &mut r);
        let lp = m.reconstruction_rows(&mut t, &p, xv, z);
        for (acc, v) in total.iter_mut().zip(t.value(lp).column(0)) {
            *acc -= v;
        }
    }
    total.iter().map(|v| v / n_samples as f64).collect()
}

/// [`score_rs`] plus the KL divergence of the encoder distribution.
pub fn score_elbo(m: &AutoEncoder, x: &Mat, n_samples: usize, seed: u64) -> Vec<f64> {
    let rs = score_rs(m, x, n_samples, seed);
    let mut t = Tape::new();
    let params = t.bind_constants(m.parameters());
    let p = m.bind(&params);
    let xv = t.constant(x.clone());
    let (mu, ls) = m.encode(&mut t, &p, xv);
    let k = kld_rows(&mut t, mu, ls);
    rs.iter().zip(column(&t, k)).map(|(a, b)| a + b).collect()
}

/// Result of [`score_jacodeco`] for one sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JacodecoTerms {
    /// `log p_z(z) - sum log s_i`.
    pub log_tangent: f64,
    /// Gaussian log-density of the residual in the orthogonal complement.
    pub log_orthogonal: f64,
    /// Some singular value hit [`SINGULAR_VALUE_FLOOR`].
    pub floored: bool,
}

impl JacodecoTerms {
    pub fn score(&self) -> f64 {
        -(self.log_tangent + self.log_orthogonal)
    }
}

/// Decoder Jacobian at `z` (one reverse sweep per output), decoder mean and
/// log standard deviation broadcast to `d` entries.
pub(crate) fn decoder_jacobian(m: &AutoEncoder, z: &[f64]) -> (DMatrix<f64>, Vec<f64>, Vec<f64>) {
    let d = m.input_dim;
    let mut t = Tape::new();
    let params = t.bind_constants(m.parameters());
    let p = m.bind(&params);
    let zv = t.param(Mat::from_shape_vec((1, z.len()), z.to_vec()).unwrap());
    let (mean, ls) = m.decode(&mut t, &p, zv);
    let mut jac = DMatrix::zeros(d, z.len());
    for i in 0..d {
        let mut seed = Mat::zeros((1, d));
        seed[[0, i]] = 1.0;
        let g = t.backward_from(mean, seed).wrt(zv);
        for j in 0..z.len() {
            jac[(i, j)] = g[[0, j]];
        }
    }
    let ls_v = t.value(ls);
    let log_sigma = (0..d).map(|i| ls_v[[0, i.min(ls_v.ncols() - 1)]]).collect();
    (jac, t.value(mean).row(0).to_vec(), log_sigma)
}

/// Jacobian-decomposed log-likelihood terms for every row of `x`.
pub fn jacodeco_terms(m: &AutoEncoder, x: &Mat) -> Result<Vec<JacodecoTerms>> {
    let z_all = m.encode_mean(x);
    let d = m.input_dim;
    let mut out = Vec::with_capacity(x.nrows());
    for (row, z) in x.outer_iter().zip(z_all.outer_iter()) {
        let z = z.to_vec();
        let (jac, mean, log_sigma) = decoder_jacobian(m, &z);

        let svd = jac.clone().svd(true, false);
        let u = svd.u.as_ref().ok_or_else(|| Error::Training("SVD failed".into()))?;
        let mut floored = false;
        let mut log_det = 0.0;
        for &s in svd.singular_values.iter() {
            if s < SINGULAR_VALUE_FLOOR {
                floored = true;
            }
            log_det += s.max(SINGULAR_VALUE_FLOOR).ln();
        }

        let log_prior = {
            let mut t = Tape::new();
            let params = t.bind_constants(m.parameters());
            let p = m.bind(&params);
            let zv = t.constant(Mat::from_shape_vec((1, z.len()), z.clone()).unwrap());
            let lp = m.log_prior_rows(&mut t, &p, zv);
            t.scalar(lp)
        };

        // orthonormal basis of the complement of the Jacobian's column space
        let rank = svd.singular_values.len().min(d);
        let proj = DMatrix::<f64>::identity(d, d) - u * u.transpose();
        let eig = nalgebra::SymmetricEigen::new(proj);
        let mut idx: Vec<usize> = (0..d).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let k = d - rank;
        let log_orthogonal = if k == 0 {
            0.0
        } else {
            let basis = DMatrix::from_fn(d, k, |i, j| eig.eigenvectors[(i, idx[j])]);
            let resid = DVector::from_iterator(d, row.iter().zip(&mean).map(|(a, b)| a - b));
            let r = basis.transpose() * resid;
            let cov_diag = DMatrix::from_diagonal(&DVector::from_iterator(
                d,
                log_sigma.iter().map(|ls| (2.0 * ls).exp()),
            ));
            let cov = basis.transpose() * cov_diag * &basis;
            let chol = cov
                .cholesky()
                .ok_or_else(|| Error::Training("orthogonal covariance is not positive definite".into()))?;
            let sol = chol.solve(&r);
            let log_det_cov: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            -0.5 * (r.dot(&sol) + log_det_cov + k as f64 * LN_2PI)
        };
        out.push(JacodecoTerms {
            log_tangent: log_prior - log_det,
            log_orthogonal,
            floored,
        });
    }
    let n_floored = out.iter().filter(|t| t.floored).count();
    if n_floored > 0 {
        log::warn!("{n_floored} samples had singular values below {SINGULAR_VALUE_FLOOR}");
    }
    Ok(out)
}

pub fn score_jacodeco(m: &AutoEncoder, x: &Mat) -> Result<Vec<f64>> {
    Ok(jacodeco_terms(m, x)?.iter().map(JacodecoTerms::score).collect())
}
