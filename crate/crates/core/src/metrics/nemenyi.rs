use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Significance levels covered by the embedded quantile table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Alpha {
    #[serde(rename = "0.05")]
    P05,
    #[serde(rename = "0.10")]
    P10,
}

impl Alpha {
    pub fn value(self) -> f64 {
        match self {
            Alpha::P05 => 0.05,
            Alpha::P10 => 0.10,
        }
    }

    pub fn from_value(alpha: f64) -> Result<Self> {
        if (alpha - 0.05).abs() < 1e-9 {
            Ok(Alpha::P05)
        } else if (alpha - 0.10).abs() < 1e-9 {
            Ok(Alpha::P10)
        } else {
            Err(Error::OutOfTable(format!("alpha = {alpha}; only 0.05 and 0.10 are tabulated")))
        }
    }
}

pub const MAX_TABLE_K: usize = 30;

// Upper quantiles of the studentized range for k groups and infinite degrees
// of freedom, divided by sqrt(2); index 0 is k = 2.
const Q_05: [f64; 29] = [
    1.959964, 2.343701, 2.569032, 2.727774, 2.849705, 2.948320, 3.030878, 3.101730, 3.163684,
    3.218654, 3.268004, 3.312739, 3.353618, 3.391230, 3.426041, 3.458425, 3.488685, 3.517073,
    3.543799, 3.569040, 3.592946, 3.615646, 3.637252, 3.657861, 3.677556, 3.696413, 3.714498,
    3.731869, 3.748578,
];
const Q_10: [f64; 29] = [
    1.644854, 2.052293, 2.291341, 2.459516, 2.588521, 2.692732, 2.779884, 2.854606, 2.919889,
    2.977768, 3.029694, 3.076733, 3.119693, 3.159199, 3.195743, 3.229723, 3.261461, 3.291224,
    3.319233, 3.345676, 3.370712, 3.394477, 3.417089, 3.438651, 3.459253, 3.478971, 3.497878,
    3.516033, 3.533492,
];

/// Tabulated critical value for `k` methods.
pub fn nemenyi_q(k: usize, alpha: Alpha) -> Result<f64> {
    if !(2..=MAX_TABLE_K).contains(&k) {
        return Err(Error::OutOfTable(format!("k = {k}; table covers 2..={MAX_TABLE_K}")));
    }
    let table = match alpha {
        Alpha::P05 => &Q_05,
        Alpha::P10 => &Q_10,
    };
    Ok(table[k - 2])
}

/// Nemenyi critical difference in average rank for `k` methods compared on
/// `n` datasets.
pub fn nemenyi_cd(k: usize, n: usize, alpha: Alpha) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("critical difference needs at least one dataset"));
    }
    let q = nemenyi_q(k, alpha)?;
    Ok(q * ((k * (k + 1)) as f64 / (6.0 * n as f64)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert!((nemenyi_cd(23, 40, Alpha::P10).unwrap() - 5.15).abs() < 0.02);
        assert!((nemenyi_cd(12, 4, Alpha::P10).unwrap() - 7.72).abs() < 0.02);
        assert!((nemenyi_cd(12, 40, Alpha::P10).unwrap() - 2.44).abs() < 0.02);
    }

    #[test]
    fn two_methods_match_normal_quantile() {
        // For k = 2 the statistic reduces to a two-sided z test.
        assert!((nemenyi_q(2, Alpha::P05).unwrap() - 1.959964).abs() < 1e-6);
    }

    #[test]
    fn tables_increase_in_k() {
        for t in [&Q_05, &Q_10] {
            assert!(t.windows(2).all(|w| w[0] < w[1]));
        }
        assert!(Q_05.iter().zip(Q_10.iter()).all(|(a, b)| a > b));
    }

    #[test]
    fn out_of_table() {
        assert!(matches!(nemenyi_cd(31, 10, Alpha::P05), Err(Error::OutOfTable(_))));
        assert!(matches!(nemenyi_cd(1, 10, Alpha::P05), Err(Error::OutOfTable(_))));
        assert!(Alpha::from_value(0.01).is_err());
        assert_eq!(Alpha::from_value(0.1).unwrap(), Alpha::P10);
    }
}
