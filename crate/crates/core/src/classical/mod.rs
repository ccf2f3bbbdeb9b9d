//! Distance-, histogram- and tree-based detectors.

mod abod;
mod hbos;
mod iforest;
mod knn;
mod loda;
mod lof;

pub use abod::{abod_fit, AbodModel};
pub use hbos::{hbos_fit, HbosModel};
pub use iforest::{average_path_length, iforest_fit, IForestModel, IForestParams};
pub use knn::{knn_fit, KnnModel, KnnVariant};
pub use loda::{loda_fit, LodaModel};
pub use lof::{lof_fit, LofModel};

/// Floor applied to densities and reachability distances.
pub const DENSITY_FLOOR: f64 = 1e-12;
