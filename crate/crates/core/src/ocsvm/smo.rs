use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::cache::KernelRows;
use super::Kernel;
use crate::error::{Error, Result};

/// Curvature floor for pairs with non-positive second derivative (indefinite
/// kernels).
const TAU: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Converged,
    MaxIterations,
    TimedOut,
}

#[derive(Clone, Copy, Debug)]
pub struct SmoOptions {
    /// Stop once the maximal violating pair's gradient gap is at most this.
    pub tol: f64,
    /// Upper bound on pair updates.
    pub max_iter: usize,
    /// Problems up to this size use a precomputed kernel matrix.
    pub full_gram_limit: usize,
    /// Number of kernel entries kept by the row cache above that size.
    pub cache_entries: usize,
    pub deadline: Option<Instant>,
}

impl Default for SmoOptions {
    fn default() -> Self {
        SmoOptions {
            tol: 1e-3,
            max_iter: 10_000_000,
            full_gram_limit: 4000,
            cache_entries: 16_000_000,
            deadline: None,
        }
    }
}

/// Solution of `min 1/2 a'Qa  s.t. 0 <= a_i <= 1/(nu n), sum a = 1`.
#[derive(Clone, Debug)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    /// `Q alpha`.
    pub gradient: Vec<f64>,
    pub rho: f64,
    pub upper_bound: f64,
    pub status: SolverStatus,
    pub iterations: usize,
}

impl DualSolution {
    pub fn objective(&self) -> f64 {
        0.5 * self.alpha.iter().zip(&self.gradient).map(|(a, g)| a * g).sum::<f64>()
    }
}

/// Sequential minimal optimization with first-order (maximal violating
/// pair) working-set selection.
pub fn smo_solve(rows: &[&[f64]], nu: f64, kernel: Kernel, opts: &SmoOptions) -> Result<DualSolution> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("one-class SVM needs >= 2 points, got {n}")));
    }
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::invalid(format!("nu = {nu} outside (0, 1]")));
    }
    let c = 1.0 / (nu * n as f64);
    let mut q = KernelRows::new(kernel, rows, opts.full_gram_limit, opts.cache_entries);

    // Fill the first floor(nu n) coefficients to the bound and give the
    // remainder to the next one.
    let n_full = ((nu * n as f64).floor() as usize).min(n);
    let mut alpha = vec![0.0; n];
    for a in alpha.iter_mut().take(n_full) {
        *a = c;
    }
    if n_full < n {
        alpha[n_full] = (1.0 - n_full as f64 * c).max(0.0);
    }
    let mut gradient = vec![0.0; n];
    for (i, &a) in alpha.iter().enumerate() {
        if a != 0.0 {
            let row = q.row(i);
            for (g, k) in gradient.iter_mut().zip(row.iter()) {
                *g += a * k;
            }
        }
    }

    let mut status = SolverStatus::MaxIterations;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        if iterations % 1024 == 0 {
            if let Some(d) = opts.deadline {
                if Instant::now() >= d {
                    status = SolverStatus::TimedOut;
                    break;
                }
            }
        }
        // i can grow, j can shrink
        let (mut i, mut g_min) = (usize::MAX, f64::INFINITY);
        let (mut j, mut g_max) = (usize::MAX, f64::NEG_INFINITY);
        for k in 0..n {
            if alpha[k] < c && gradient[k] < g_min {
                i = k;
                g_min = gradient[k];
            }
            if alpha[k] > 0.0 && gradient[k] > g_max {
                j = k;
                g_max = gradient[k];
            }
        }
        if i == usize::MAX || j == usize::MAX || g_max - g_min <= opts.tol {
            status = SolverStatus::Converged;
            break;
        }
        iterations += 1;
        let row_i = q.row(i);
        let row_j = q.row(j);
        let eta = (q.diag(i) + q.diag(j) - 2.0 * row_i[j]).max(TAU);
        let room_i = c - alpha[i];
        let room_j = alpha[j];
        let step = (g_max - g_min) / eta;
        let delta = if step >= room_i.min(room_j) {
            // clip to whichever bound binds first, landing on it exactly
            if room_i <= room_j {
                alpha[i] = c;
                alpha[j] -= room_i;
                if room_i == room_j {
                    alpha[j] = 0.0;
                }
                room_i
            } else {
                alpha[i] += room_j;
                alpha[j] = 0.0;
                room_j
            }
        } else {
            alpha[i] += step;
            alpha[j] -= step;
            step
        };
        for ((g, ki), kj) in gradient.iter_mut().zip(row_i.iter()).zip(row_j.iter()) {
            *g += delta * (ki - kj);
        }
    }
    let rho = offset(&alpha, &gradient, c);
    Ok(DualSolution {
        alpha,
        gradient,
        rho,
        upper_bound: c,
        status,
        iterations,
    })
}

/// Mean gradient over free coefficients; without free ones, the midpoint of
/// the bounds implied by the coefficients sitting at zero and at the cap.
fn offset(alpha: &[f64], gradient: &[f64], c: f64) -> f64 {
    let (mut sum, mut free) = (0.0, 0usize);
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    for (&a, &g) in alpha.iter().zip(gradient) {
        if a >= c {
            lb = lb.max(g);
        } else if a <= 0.0 {
            ub = ub.min(g);
        } else {
            sum += g;
            free += 1;
        }
    }
    if free > 0 {
        sum / free as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else if lb.is_finite() {
        lb
    } else {
        ub
    }
}
