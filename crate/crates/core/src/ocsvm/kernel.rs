use serde::{Deserialize, Serialize};

/// Kernel functions. Sigmoid and polynomial use a zero offset; the
/// polynomial degree is fixed at three.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Kernel {
    Rbf { gamma: f64 },
    Sigmoid { gamma: f64 },
    Polynomial { gamma: f64 },
}

pub const POLYNOMIAL_DEGREE: i32 = 3;

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Kernel {
    pub fn gamma(&self) -> f64 {
        match *self {
            Kernel::Rbf { gamma } | Kernel::Sigmoid { gamma } | Kernel::Polynomial { gamma } => gamma,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Kernel::Rbf { .. } => "rbf",
            Kernel::Sigmoid { .. } => "sigmoid",
            Kernel::Polynomial { .. } => "polynomial",
        }
    }

    pub fn from_name(name: &str, gamma: f64) -> crate::Result<Self> {
        match name {
            "rbf" => Ok(Kernel::Rbf { gamma }),
            "sigmoid" => Ok(Kernel::Sigmoid { gamma }),
            "polynomial" | "poly" => Ok(Kernel::Polynomial { gamma }),
            other => Err(crate::Error::invalid(format!("unknown kernel {other}"))),
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
            Kernel::Sigmoid { gamma } => (gamma * dot(a, b)).tanh(),
            Kernel::Polynomial { gamma } => (gamma * dot(a, b)).powi(POLYNOMIAL_DEGREE),
        }
    }
}
