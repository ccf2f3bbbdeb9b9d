use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Mat, Tape, Var};

/// Exponent of the rational-quadratic kernel.
pub const RQ_ALPHA: f64 = 2.0;

/// Kernels of the scaled squared distance `r = |a - b|^2 / bandwidth`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MmdKernel {
    /// `exp(-r / 2)`
    Rbf,
    /// `1 / (1 + r)`
    Imq,
    /// `(1 + r / (2 alpha))^-alpha`
    Rq,
}

impl std::str::FromStr for MmdKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rbf" => Ok(MmdKernel::Rbf),
            "imq" => Ok(MmdKernel::Imq),
            "rq" => Ok(MmdKernel::Rq),
            other => Err(Error::invalid(format!("unknown mmd kernel {other}"))),
        }
    }
}

impl MmdKernel {
    pub fn of_scaled(self, r: f64) -> f64 {
        match self {
            MmdKernel::Rbf => (-r / 2.0).exp(),
            MmdKernel::Imq => 1.0 / (1.0 + r),
            MmdKernel::Rq => (1.0 + r / (2.0 * RQ_ALPHA)).powf(-RQ_ALPHA),
        }
    }

    pub fn eval(self, a: &[f64], b: &[f64], bandwidth: f64) -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        self.of_scaled(d2 / bandwidth)
    }

    fn on_tape(self, t: &mut Tape, r: Var) -> Var {
        match self {
            MmdKernel::Rbf => {
                let a = t.scale(r, -0.5);
                t.exp(a)
            }
            MmdKernel::Imq => {
                let a = t.offset(r, 1.0);
                t.powf(a, -1.0)
            }
            MmdKernel::Rq => {
                let a = t.scale(r, 1.0 / (2.0 * RQ_ALPHA));
                let a = t.offset(a, 1.0);
                t.powf(a, -RQ_ALPHA)
            }
        }
    }
}

/// Unbiased squared MMD between the rows of `x` and `y`.
pub fn mmd_unbiased(x: &Mat, y: &Mat, kernel: MmdKernel, bandwidth: f64) -> Result<f64> {
    let (n, m) = (x.nrows(), y.nrows());
    if n < 2 || m < 2 {
        return Err(Error::invalid("unbiased MMD needs at least two samples per set"));
    }
    let k = |a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>| {
        kernel.eval(a.as_slice().unwrap(), b.as_slice().unwrap(), bandwidth)
    };
    let x = x.as_standard_layout();
    let y = y.as_standard_layout();
    let within = |s: &ndarray::CowArray<f64, ndarray::Ix2>| {
        let n = s.nrows();
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    total += k(s.row(i), s.row(j));
                }
            }
        }
        total / (n * (n - 1)) as f64
    };
    let mut cross = 0.0;
    for i in 0..n {
        for j in 0..m {
            cross += k(x.row(i), y.row(j));
        }
    }
    Ok(within(&x) + within(&y) - 2.0 * cross / (n * m) as f64)
}

/// Pairwise scaled squared distances, accumulated one coordinate at a time
/// so that the diagonal of a self-comparison is exactly zero.
fn scaled_distances(t: &mut Tape, a: Var, b: Var, bandwidth: f64) -> Var {
    let d = t.shape(a).1;
    let mut acc = None;
    for l in 0..d {
        let al = t.slice_cols(a, l, l + 1);
        let bl = t.slice_cols(b, l, l + 1);
        let bl = t.transpose(bl);
        let diff = t.sub(al, bl);
        let sq = t.square(diff);
        acc = Some(match acc {
            None => sq,
            Some(s) => t.add(s, sq),
        });
    }
    t.scale(acc.expect("zero-dimensional samples"), 1.0 / bandwidth)
}

fn off_diagonal_mean(t: &mut Tape, k: Var, kernel: MmdKernel) -> Var {
    let n = t.shape(k).0 as f64;
    let total = t.sum(k);
    // every diagonal entry is k(0)
    let total = t.offset(total, -n * kernel.of_scaled(0.0));
    t.scale(total, 1.0 / (n * (n - 1.0)))
}

/// Differentiable [`mmd_unbiased`].
pub(crate) fn mmd_on_tape(t: &mut Tape, x: Var, y: Var, kernel: MmdKernel, bandwidth: f64) -> Var {
    let dxx = scaled_distances(t, x, x, bandwidth);
    let dyy = scaled_distances(t, y, y, bandwidth);
    let dxy = scaled_distances(t, x, y, bandwidth);
    let kxx = kernel.on_tape(t, dxx);
    let kyy = kernel.on_tape(t, dyy);
    let kxy = kernel.on_tape(t, dxy);
    let a = off_diagonal_mean(t, kxx, kernel);
    let b = off_diagonal_mean(t, kyy, kernel);
    let c = t.mean(kxy);
    let c = t.scale(c, -2.0);
    let ab = t.add(a, b);
    t.add(ab, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::array;

    #[test]
    fn identical_pairs() {
        let x = array![[0.0, 0.0], [1.0, 1.0]];
        let v = mmd_unbiased(&x, &x, MmdKernel::Rbf, 1.0).unwrap();
        let kab = (-1.0f64).exp();
        assert!((v - (kab - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn kernels_at_zero_are_one() {
        for k in [MmdKernel::Rbf, MmdKernel::Imq, MmdKernel::Rq] {
            assert_eq!(k.of_scaled(0.0), 1.0);
            assert!(k.of_scaled(3.0) < 1.0);
        }
    }

    #[test]
    fn tape_matches_plain() {
        let mut r = rng::seeded(3);
        let x = Mat::from_shape_fn((7, 3), |_| rng::normal(&mut r));
        let y = Mat::from_shape_fn((5, 3), |_| rng::normal(&mut r) + 0.5);
        for k in [MmdKernel::Rbf, MmdKernel::Imq, MmdKernel::Rq] {
            let plain = mmd_unbiased(&x, &y, k, 0.7).unwrap();
            let mut t = Tape::new();
            let xv = t.constant(x.clone());
            let yv = t.constant(y.clone());
            let v = mmd_on_tape(&mut t, xv, yv, k, 0.7);
            assert!((t.scalar(v) - plain).abs() < 1e-13);
        }
    }

    #[test]
    fn same_distribution_is_near_zero() {
        let mut r = rng::seeded(11);
        let n = 400;
        let x = Mat::from_shape_fn((n, 2), |_| rng::normal(&mut r));
        let y = Mat::from_shape_fn((n, 2), |_| rng::normal(&mut r));
        let v = mmd_unbiased(&x, &y, MmdKernel::Imq, 1.0).unwrap();
        assert!(v.abs() <= 3.0 / (n as f64).sqrt());
    }
}
