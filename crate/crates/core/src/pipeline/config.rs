use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Knn,
    Lof,
    Hbos,
    Iforest,
    Loda,
    Abod,
    Ocsvm,
    Vae,
    Wae,
    Realnvp,
    Maf,
    /// kNN on the latent means of a trained VAE encoder.
    VaeKnn,
    /// OC-SVM on the latent means of a trained VAE encoder.
    VaeOcsvm,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 13] = [
        DetectorKind::Knn,
        DetectorKind::Lof,
        DetectorKind::Hbos,
        DetectorKind::Iforest,
        DetectorKind::Loda,
        DetectorKind::Abod,
        DetectorKind::Ocsvm,
        DetectorKind::Vae,
        DetectorKind::Wae,
        DetectorKind::Realnvp,
        DetectorKind::Maf,
        DetectorKind::VaeKnn,
        DetectorKind::VaeOcsvm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Knn => "knn",
            DetectorKind::Lof => "lof",
            DetectorKind::Hbos => "hbos",
            DetectorKind::Iforest => "iforest",
            DetectorKind::Loda => "loda",
            DetectorKind::Abod => "abod",
            DetectorKind::Ocsvm => "ocsvm",
            DetectorKind::Vae => "vae",
            DetectorKind::Wae => "wae",
            DetectorKind::Realnvp => "realnvp",
            DetectorKind::Maf => "maf",
            DetectorKind::VaeKnn => "vae_knn",
            DetectorKind::VaeOcsvm => "vae_ocsvm",
        }
    }

    /// Needs a trained VAE encoder before it can be fitted.
    pub fn is_two_stage(self) -> bool {
        matches!(self, DetectorKind::VaeKnn | DetectorKind::VaeOcsvm)
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DetectorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown detector {s:?}")))
    }
}

/// Candidate values of every hyperparameter of one detector kind.
pub type Grid = BTreeMap<String, Vec<Value>>;

fn range_i(lo: i64, hi: i64, step: i64) -> Vec<Value> {
    (lo..=hi).step_by(step as usize).map(|v| json!(v)).collect()
}

/// `lo, lo + step, ..., hi` rounded to ten decimals.
fn range_f(lo: f64, hi: f64, step: f64) -> Vec<Value> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n)
        .map(|i| json!(((lo + step * i as f64) * 1e10).round() / 1e10))
        .collect()
}

fn powers_of_two(lo: u32, hi: u32) -> Vec<Value> {
    (lo..=hi).map(|e| json!(1_u64 << e)).collect()
}

fn strs(values: &[&str]) -> Vec<Value> {
    values.iter().map(|v| json!(v)).collect()
}

fn vals(values: &[Value]) -> Vec<Value> {
    values.to_vec()
}

fn gamma_grid() -> Vec<Value> {
    (0..=60).map(|i| json!(10f64.powf((-40 + i) as f64 / 10.0))).collect()
}

fn knn_params(g: &mut Grid) {
    g.insert("k".into(), range_i(1, 101, 2));
    g.insert("variant".into(), strs(&["kappa", "gamma", "delta"]));
}

fn ocsvm_params(g: &mut Grid) {
    g.insert("gamma".into(), gamma_grid());
    g.insert("nu".into(), vals(&[json!(0.01), json!(0.5), json!(0.99)]));
    g.insert("kernel".into(), strs(&["rbf", "sigmoid", "polynomial"]));
}

fn training_params(g: &mut Grid, lr: Vec<Value>, batch: Vec<Value>) {
    g.insert("lr".into(), lr);
    g.insert("batch_size".into(), batch);
    g.insert("patience".into(), vec![json!(200)]);
    g.insert("check_interval".into(), vec![json!(1)]);
    g.insert("max_batches".into(), vec![json!(50_000)]);
}

fn autoencoder_params(g: &mut Grid) {
    g.insert("latent_dim".into(), powers_of_two(3, 8));
    g.insert("hidden_dim".into(), powers_of_two(4, 9));
    g.insert("activation".into(), strs(&["relu", "swish", "tanh"]));
    g.insert("n_layers".into(), vec![json!(3), json!(4)]);
    g.insert("variance".into(), strs(&["constant", "scalar", "diagonal"]));
    g.insert("fixed_variance".into(), vals(&[json!(0.01), json!(0.1), json!(1.0)]));
    g.insert("score".into(), strs(&["rs", "rm", "elbo", "jacodeco"]));
    g.insert("mc_samples".into(), vec![json!(100)]);
    training_params(
        g,
        vals(&[json!(1e-4), json!(1e-3)]),
        vals(&[json!(32), json!(64), json!(128)]),
    );
}

fn flow_params(g: &mut Grid) {
    g.insert("hidden_dim".into(), powers_of_two(4, 10));
    g.insert("n_flows".into(), vals(&[json!(2), json!(4), json!(8)]));
    g.insert("n_layers".into(), vec![json!(2), json!(3)]);
    g.insert("activation".into(), strs(&["relu", "tanh"]));
    g.insert("batch_norm".into(), vec![json!(true), json!(false)]);
    g.insert("init_identity".into(), vec![json!(true), json!(false)]);
    g.insert("l2".into(), vals(&[json!(0.0), json!(1e-5), json!(1e-6)]));
    training_params(g, vec![json!(1e-4)], vals(&[json!(32), json!(64), json!(128)]));
}

/// The full search space of a detector kind.
pub fn default_grid(kind: DetectorKind) -> Grid {
    let mut g = Grid::new();
    match kind {
        DetectorKind::Knn => knn_params(&mut g),
        DetectorKind::Lof => {
            g.insert("k".into(), range_i(1, 100, 1));
        }
        DetectorKind::Hbos => {
            g.insert("bins".into(), range_i(2, 100, 2));
            g.insert("alpha".into(), range_f(0.05, 1.0, 0.05));
            g.insert("tol".into(), range_f(0.0, 1.0, 0.05));
        }
        DetectorKind::Iforest => {
            g.insert("n_trees".into(), range_i(50, 500, 50));
            g.insert("max_samples".into(), range_f(0.5, 1.0, 0.1));
            g.insert("max_features".into(), range_f(0.5, 1.0, 0.1));
        }
        DetectorKind::Loda => {
            g.insert("bins".into(), range_i(2, 100, 2));
            g.insert("cuts".into(), range_i(40, 500, 20));
        }
        DetectorKind::Abod => {
            // angle variance needs at least two neighbours
            g.insert("k".into(), range_i(2, 100, 1));
        }
        DetectorKind::Ocsvm => {
            ocsvm_params(&mut g);
            g.insert("n_bags".into(), vec![json!(1)]);
        }
        DetectorKind::Vae => autoencoder_params(&mut g),
        DetectorKind::Wae => {
            autoencoder_params(&mut g);
            g.insert("lambda".into(), vals(&[json!(0.1), json!(1.0)]));
            g.insert("prior".into(), strs(&["normal", "vamp"]));
            g.insert("components".into(), powers_of_two(1, 6));
            g.insert("mmd_kernel".into(), strs(&["rbf", "imq", "rq"]));
            g.insert("bandwidth".into(), vals(&[json!(1e-3), json!(1e-2), json!(1e-1), json!(1.0)]));
        }
        DetectorKind::Realnvp => {
            flow_params(&mut g);
            g.insert("tanh_scaling".into(), vec![json!(true), json!(false)]);
        }
        DetectorKind::Maf => {
            flow_params(&mut g);
            g.insert("ordering".into(), strs(&["natural", "random"]));
        }
        DetectorKind::VaeKnn => knn_params(&mut g),
        DetectorKind::VaeOcsvm => ocsvm_params(&mut g),
    }
    g
}

/// Replaces the candidate lists of the named parameters; unknown names and
/// empty lists are rejected.
pub fn apply_overrides(grid: &mut Grid, overrides: &BTreeMap<String, Vec<Value>>) -> Result<()> {
    for (name, values) in overrides {
        let slot = grid
            .get_mut(name)
            .ok_or_else(|| Error::invalid(format!("unknown hyperparameter {name:?}")))?;
        if values.is_empty() {
            return Err(Error::invalid(format!("empty value list for {name:?}")));
        }
        *slot = values.clone();
    }
    Ok(())
}

/// One point of a detector's search space plus the seed that initializes
/// its randomness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub kind: DetectorKind,
    pub params: BTreeMap<String, Value>,
    pub init_seed: u64,
}

impl DetectorConfig {
    pub fn new(kind: DetectorKind, params: BTreeMap<String, Value>, init_seed: u64) -> Self {
        DetectorConfig { kind, params, init_seed }
    }

    /// Canonical JSON form (keys sorted); the identity of the config.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Short stable digest of [`Self::canonical`].
    pub fn id(&self) -> String {
        short_hash(self.canonical().as_bytes())
    }

    fn get(&self, name: &str) -> Result<&Value> {
        self.params
            .get(name)
            .ok_or_else(|| Error::invalid(format!("{}: missing hyperparameter {name:?}", self.kind)))
    }

    pub fn f64(&self, name: &str) -> Result<f64> {
        self.get(name)?
            .as_f64()
            .ok_or_else(|| Error::invalid(format!("{}: {name:?} is not a number", self.kind)))
    }

    pub fn usize(&self, name: &str) -> Result<usize> {
        self.get(name)?
            .as_u64()
            .map(|v| v as usize)
            .ok_or_else(|| Error::invalid(format!("{}: {name:?} is not a non-negative integer", self.kind)))
    }

    pub fn str(&self, name: &str) -> Result<&str> {
        self.get(name)?
            .as_str()
            .ok_or_else(|| Error::invalid(format!("{}: {name:?} is not a string", self.kind)))
    }

    pub fn bool(&self, name: &str) -> Result<bool> {
        self.get(name)?
            .as_bool()
            .ok_or_else(|| Error::invalid(format!("{}: {name:?} is not a boolean", self.kind)))
    }

    /// Whether every parameter value is a member of `grid` and no grid
    /// parameter is missing.
    pub fn in_grid(&self, grid: &Grid) -> bool {
        self.params.len() == grid.len()
            && self
                .params
                .iter()
                .all(|(k, v)| grid.get(k).is_some_and(|vals| vals.contains(v)))
    }
}

/// First 16 hex digits of the SHA-256 of `bytes`.
pub fn short_hash(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..8])
}

/// Draws up to `n` distinct configurations uniformly from `grid`; each gets
/// its own initialization seed. Returns fewer when the grid is smaller.
pub fn sample_configs(kind: DetectorKind, grid: &Grid, n: usize, seed: u64) -> Vec<DetectorConfig> {
    let mut r = rng::seeded(seed);
    let size = grid
        .values()
        .try_fold(1_usize, |acc, v| acc.checked_mul(v.len()))
        .unwrap_or(usize::MAX);
    let target = n.min(size);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(target);
    let mut attempts = 0;
    while out.len() < target && attempts < 1000 * n.max(1) {
        attempts += 1;
        let params: BTreeMap<String, Value> = grid
            .iter()
            .map(|(k, vals)| (k.clone(), vals[rng::index(&mut r, vals.len())].clone()))
            .collect();
        let init_seed = r.next_u64();
        let key = serde_json::to_string(&params).expect("params serialize");
        if seen.insert(key) {
            out.push(DetectorConfig::new(kind, params, init_seed));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_follow_the_tables() {
        let g = default_grid(DetectorKind::Ocsvm);
        assert_eq!(g["gamma"].len(), 61);
        assert!((g["gamma"][0].as_f64().unwrap() - 1e-4).abs() < 1e-18);
        assert!((g["gamma"][60].as_f64().unwrap() - 100.0).abs() < 1e-12);
        assert_eq!(default_grid(DetectorKind::Knn)["k"].len(), 51);
        assert_eq!(default_grid(DetectorKind::Hbos)["alpha"].len(), 20);
        assert_eq!(default_grid(DetectorKind::Hbos)["tol"][3], json!(0.15));
        assert_eq!(default_grid(DetectorKind::Loda)["cuts"].len(), 24);
        assert_eq!(default_grid(DetectorKind::Realnvp)["hidden_dim"].len(), 7);
        assert_eq!(default_grid(DetectorKind::Wae)["components"].last(), Some(&json!(64)));
    }

    #[test]
    fn samples_are_in_grid_and_reproducible() {
        for kind in DetectorKind::ALL {
            let g = default_grid(kind);
            let a = sample_configs(kind, &g, 7, 3);
            assert_eq!(a.len(), 7);
            assert!(a.iter().all(|c| c.in_grid(&g)));
            assert_eq!(a, sample_configs(kind, &g, 7, 3));
        }
        let g = default_grid(DetectorKind::Lof);
        let one = sample_configs(DetectorKind::Lof, &g, 1, 0);
        assert_eq!(one.len(), 1);
        assert!(one[0].in_grid(&g));
    }

    #[test]
    fn small_grids_are_exhausted_without_duplicates() {
        let mut g = default_grid(DetectorKind::Lof);
        apply_overrides(&mut g, &BTreeMap::from([("k".to_string(), vec![json!(3), json!(5)])])).unwrap();
        let c = sample_configs(DetectorKind::Lof, &g, 10, 1);
        assert_eq!(c.len(), 2);
        assert_ne!(c[0].params, c[1].params);
    }

    #[test]
    fn nu_frequencies_are_uniform() {
        let g = default_grid(DetectorKind::Ocsvm);
        let mut counts = [0_usize; 3];
        for seed in 0..1000 {
            let c = &sample_configs(DetectorKind::Ocsvm, &g, 1, seed)[0];
            counts[g["nu"].iter().position(|x| x == &c.params["nu"]).unwrap()] += 1;
        }
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - 1000.0 / 3.0).powi(2) / (1000.0 / 3.0)).sum();
        // chi-square with 2 degrees of freedom, 1% level
        assert!(chi2 < 9.21, "{counts:?}");
        assert!(counts.iter().all(|&c| (c as f64 / 1000.0 - 1.0 / 3.0).abs() < 0.05));
    }

    #[test]
    fn canonical_form_is_order_independent() {
        let a = DetectorConfig::new(
            DetectorKind::Knn,
            BTreeMap::from([("k".into(), json!(3)), ("variant".into(), json!("gamma"))]),
            1,
        );
        let mut params = BTreeMap::new();
        params.insert("variant".to_string(), json!("gamma"));
        params.insert("k".to_string(), json!(3));
        let b = DetectorConfig::new(DetectorKind::Knn, params, 1);
        assert_eq!(a.canonical(), b.canonical());
        assert_eq!(a.id(), b.id());
        assert_eq!(a.id().len(), 16);
        let back: DetectorConfig = serde_json::from_str(&a.canonical()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn overrides_reject_unknown_names() {
        let mut g = default_grid(DetectorKind::Knn);
        let bad = BTreeMap::from([("bogus".to_string(), vec![json!(1)])]);
        assert!(apply_overrides(&mut g, &bad).is_err());
    }
}
