use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-dataset ranks of several methods and their averages.
///
/// `values[m][d]` is the metric of method `m` on dataset `d`; rank 1 is the
/// best method on a dataset and ties share the mean of their ranks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub methods: Vec<String>,
    pub datasets: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub ranks: Vec<Vec<f64>>,
    pub average_ranks: Vec<f64>,
}

/// Ranks `values` (methods x datasets) within every dataset.
pub fn average_ranks(
    methods: &[String],
    datasets: &[String],
    values: &[Vec<f64>],
    higher_is_better: bool,
) -> Result<RankTable> {
    let k = methods.len();
    let n = datasets.len();
    if k < 2 || n == 0 {
        return Err(Error::invalid(format!("need >= 2 methods and >= 1 dataset, got {k} x {n}")));
    }
    if values.len() != k || values.iter().any(|row| row.len() != n) {
        return Err(Error::invalid("value matrix does not match methods x datasets"));
    }
    if values.iter().flatten().any(|v| v.is_nan()) {
        return Err(Error::invalid("NaN in rank input"));
    }
    let mut ranks = vec![vec![0.0; n]; k];
    for d in 0..n {
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| {
            let c = values[a][d].total_cmp(&values[b][d]);
            if higher_is_better {
                c.reverse()
            } else {
                c
            }
        });
        let mut i = 0;
        while i < k {
            let mut j = i;
            while j + 1 < k && values[order[j + 1]][d] == values[order[i]][d] {
                j += 1;
            }
            let mid = (i + j + 2) as f64 / 2.0;
            for &m in &order[i..=j] {
                ranks[m][d] = mid;
            }
            i = j + 1;
        }
    }
    let average_ranks = ranks.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
    Ok(RankTable {
        methods: methods.to_vec(),
        datasets: datasets.to_vec(),
        values: values.to_vec(),
        ranks,
        average_ranks,
    })
}

impl RankTable {
    /// Method indices sorted from best to worst average rank.
    pub fn order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.methods.len()).collect();
        idx.sort_by(|&a, &b| self.average_ranks[a].total_cmp(&self.average_ranks[b]));
        idx
    }

    /// CSV with one row per dataset, one column per method and a trailing
    /// average-rank row. Numbers use six decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dataset");
        for m in &self.methods {
            out.push(',');
            out.push_str(m);
        }
        out.push('\n');
        for (d, name) in self.datasets.iter().enumerate() {
            out.push_str(name);
            for row in &self.values {
                let _ = write!(out, ",{:.6}", row[d]);
            }
            out.push('\n');
        }
        out.push_str("average_rank");
        for r in &self.average_ranks {
            let _ = write!(out, ",{r:.6}");
        }
        out.push('\n');
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_csv().as_bytes())
    }
}
