//! Dataset ingestion, normalization, splitting and anomaly-label construction.

mod cache;
mod csv;
mod normalize;
mod split;
mod synthetic;

pub use cache::DatasetCache;
pub use csv::{format_csv, load_csv, parse_csv, write_csv, ColumnRef, CsvOptions};
pub use normalize::{fit_normalizer, Normalizer};
pub use split::{class_split, split_tabular, ClassSplitMode, DataSplit};
pub use synthetic::{make_synthetic, SyntheticKind};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

/// Label value of a normal sample.
pub const NORMAL: u8 = 0;
/// Label value of an anomalous sample.
pub const ANOMALY: u8 = 1;

/// A feature matrix with optional binary labels and optional class ids.
///
/// Rows are samples. `labels` is `None` when the source only carries class
/// ids and the anomaly labelling is deferred to [`class_split`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub features: Array2<f64>,
    pub labels: Option<Vec<u8>>,
    pub class_ids: Option<Vec<usize>>,
    /// Class names indexed by class id.
    pub class_names: Vec<String>,
    /// Rows rejected at ingestion because of non-finite features.
    pub dropped_rows: usize,
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: Array2<f64>, labels: Vec<u8>) -> Self {
        Dataset {
            name: name.into(),
            features,
            labels: Some(labels),
            class_ids: None,
            class_names: Vec::new(),
            dropped_rows: 0,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_dims(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_anomalies(&self) -> usize {
        self.labels
            .as_ref()
            .map_or(0, |l| l.iter().filter(|&&v| v == ANOMALY).count())
    }

    pub fn n_normals(&self) -> usize {
        self.labels
            .as_ref()
            .map_or(0, |l| l.iter().filter(|&&v| v == NORMAL).count())
    }

    /// Copies the given rows into a new matrix.
    pub fn rows(&self, idx: &[usize]) -> Array2<f64> {
        self.features.select(Axis(0), idx)
    }

    pub fn labels_of(&self, idx: &[usize]) -> Vec<u8> {
        let labels = self.labels.as_ref().expect("dataset has no labels");
        idx.iter().map(|&i| labels[i]).collect()
    }

    /// Replaces the feature matrix, keeping labels and metadata.
    pub fn with_features(&self, features: Array2<f64>) -> Dataset {
        assert_eq!(features.nrows(), self.n_samples());
        Dataset {
            features,
            ..self.clone()
        }
    }
}
