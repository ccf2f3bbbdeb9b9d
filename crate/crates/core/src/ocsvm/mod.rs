//! One-class support vector machine trained with SMO.

mod cache;
mod kernel;
mod smo;

pub use kernel::{Kernel, POLYNOMIAL_DEGREE};
pub use smo::{smo_solve, DualSolution, SmoOptions, SolverStatus};

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::detector::{check_dims, map_rows, Scorer};
use crate::error::{Error, Result};
use crate::rng;

/// Fitted one-class SVM; only support vectors (non-zero coefficients) are
/// kept.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OcsvmModel {
    pub kernel: Kernel,
    pub nu: f64,
    pub support_vectors: Array2<f64>,
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub status: SolverStatus,
    pub iterations: usize,
}

pub fn smo_train(train: ArrayView2<f64>, nu: f64, kernel: Kernel, opts: &SmoOptions) -> Result<OcsvmModel> {
    let train = train.as_standard_layout();
    let rows: Vec<&[f64]> = train.outer_iter().map(|r| r.to_slice().unwrap()).collect();
    let sol = smo_solve(&rows, nu, kernel, opts)?;
    if sol.status != SolverStatus::Converged {
        log::warn!("one-class SVM stopped early: {:?} after {} iterations", sol.status, sol.iterations);
    }
    let keep: Vec<usize> = (0..rows.len()).filter(|&i| sol.alpha[i] > 0.0).collect();
    Ok(OcsvmModel {
        kernel,
        nu,
        support_vectors: train.select(Axis(0), &keep),
        alpha: keep.iter().map(|&i| sol.alpha[i]).collect(),
        rho: sol.rho,
        status: sol.status,
        iterations: sol.iterations,
    })
}

impl OcsvmModel {
    pub fn converged(&self) -> bool {
        self.status == SolverStatus::Converged
    }

    /// `sum_i alpha_i k(sv_i, x) - rho`; non-negative inside the support.
    pub fn decision(&self, x: &[f64]) -> f64 {
        let sv = self.support_vectors.as_standard_layout();
        let s: f64 = sv
            .outer_iter()
            .zip(&self.alpha)
            .map(|(r, a)| a * self.kernel.eval(r.as_slice().unwrap(), x))
            .sum();
        s - self.rho
    }

    pub fn score_one(&self, x: &[f64]) -> f64 {
        -self.decision(x)
    }
}

impl Scorer for OcsvmModel {
    fn score(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        check_dims(self.support_vectors.ncols(), &x)?;
        Ok(map_rows(x, |r| self.score_one(r)))
    }
}

/// Average of one-class SVMs trained on disjoint, equally sized chunks.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OcsvmBag {
    pub members: Vec<OcsvmModel>,
}

/// Index chunks used by [`ocsvm_bag_fit`]: a seeded shuffle cut into
/// `n_bags` parts whose sizes differ by at most one. One bag keeps the
/// original order.
pub fn bag_indices(n: usize, n_bags: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    if n_bags > 1 {
        rng::shuffle(&mut rng::seeded(seed), &mut idx);
    }
    let (base, extra) = (n / n_bags, n % n_bags);
    let mut out = Vec::with_capacity(n_bags);
    let mut start = 0;
    for b in 0..n_bags {
        let len = base + usize::from(b < extra);
        out.push(idx[start..start + len].to_vec());
        start += len;
    }
    out
}

pub fn ocsvm_bag_fit(
    train: ArrayView2<f64>,
    nu: f64,
    kernel: Kernel,
    n_bags: usize,
    seed: u64,
    opts: &SmoOptions,
) -> Result<OcsvmBag> {
    if n_bags == 0 || train.nrows() < 2 * n_bags {
        return Err(Error::InsufficientData(format!(
            "{} rows cannot fill {n_bags} bags of >= 2",
            train.nrows()
        )));
    }
    let members = bag_indices(train.nrows(), n_bags, seed)
        .into_iter()
        .map(|idx| smo_train(train.select(Axis(0), &idx).view(), nu, kernel, opts))
        .collect::<Result<_>>()?;
    Ok(OcsvmBag { members })
}

impl OcsvmBag {
    pub fn converged(&self) -> bool {
        self.members.iter().all(OcsvmModel::converged)
    }

    pub fn score_one(&self, x: &[f64]) -> f64 {
        self.members.iter().map(|m| m.score_one(x)).sum::<f64>() / self.members.len() as f64
    }
}

impl Scorer for OcsvmBag {
    fn score(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        check_dims(self.members[0].support_vectors.ncols(), &x)?;
        Ok(map_rows(x, |r| self.score_one(r)))
    }
}
