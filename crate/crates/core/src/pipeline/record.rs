use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::config::{short_hash, DetectorConfig, DetectorKind};
use super::fit::{fit_detector, EncoderSource};
use crate::data::{split_tabular, Dataset, Normalizer, NORMAL};
use crate::error::{Error, Result};
use crate::generative::AutoEncoder;
use crate::io::write_atomic;
use crate::metrics::{precision_at_n, roc_auc, sanitize_scores, tpr_at_fpr};

/// Label budgets of the precision-at-n criteria.
pub const PR_NS: [usize; 6] = [5, 10, 50, 100, 500, 1000];
pub const AUC: &str = "auc";
pub const TPR5: &str = "tpr@5";

pub fn pr_metric(n: usize) -> String {
    format!("pr@{n}")
}

/// Every metric stored in a record, in a fixed order.
pub fn metric_names() -> Vec<String> {
    let mut names = vec![AUC.to_string(), TPR5.to_string()];
    names.extend(PR_NS.iter().map(|&n| pr_metric(n)));
    names
}

/// AUC, TPR at 5% FPR and precision at each label budget (clamped to the
/// number of samples).
pub fn evaluate_scores(scores: &[f64], labels: &[u8]) -> Result<BTreeMap<String, f64>> {
    let mut m = BTreeMap::new();
    m.insert(AUC.to_string(), roc_auc(scores, labels)?);
    m.insert(TPR5.to_string(), tpr_at_fpr(scores, labels, 0.05)?);
    for n in PR_NS {
        m.insert(pr_metric(n), precision_at_n(scores, labels, n.min(scores.len()))?);
    }
    Ok(m)
}

/// One normalized repetition of a dataset.
#[derive(Clone, Debug)]
pub struct SplitData {
    pub dataset: String,
    pub seed: u64,
    pub train: Array2<f64>,
    pub val: Array2<f64>,
    pub val_labels: Vec<u8>,
    pub test: Array2<f64>,
    pub test_labels: Vec<u8>,
}

impl SplitData {
    /// Splits `d` with `seed` and standardizes with training statistics.
    pub fn prepare(d: &Dataset, seed: u64) -> Result<Self> {
        let split = split_tabular(d, seed)?;
        let norm = Normalizer::fit(&d.rows(&split.train_idx));
        Ok(SplitData {
            dataset: d.name.clone(),
            seed,
            train: norm.apply(&d.rows(&split.train_idx)),
            val: norm.apply(&d.rows(&split.val_idx)),
            val_labels: d.labels_of(&split.val_idx),
            test: norm.apply(&d.rows(&split.test_idx)),
            test_labels: d.labels_of(&split.test_idx),
        })
    }

    /// Validation rows labelled normal (used for early stopping).
    pub fn val_normals(&self) -> Array2<f64> {
        let idx: Vec<usize> = (0..self.val_labels.len()).filter(|&i| self.val_labels[i] == NORMAL).collect();
        self.val.select(Axis(0), &idx)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Timeout,
    Failed,
    /// More than half of a score vector was NaN.
    NanDiscarded,
}

/// Outcome of fitting one configuration on one repetition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub dataset: String,
    pub seed: u64,
    pub kind: DetectorKind,
    pub config_id: String,
    pub config: DetectorConfig,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    /// Largest NaN fraction over the validation and test scores.
    pub nan_fraction: f64,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder: Option<EncoderSource>,
    pub val: BTreeMap<String, f64>,
    pub test: BTreeMap<String, f64>,
    pub fit_seconds: f64,
    pub predict_seconds: f64,
}

impl EvalRecord {
    /// File stem identifying `(dataset, seed, config)`.
    pub fn key_for(dataset: &str, seed: u64, config: &DetectorConfig) -> String {
        short_hash(format!("{dataset}\n{seed}\n{}", config.canonical()).as_bytes())
    }

    pub fn key(&self) -> String {
        Self::key_for(&self.dataset, self.seed, &self.config)
    }

    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }

    /// Everything except timings, serialized; equal across reruns with the
    /// same inputs.
    pub fn metric_fields(&self) -> String {
        let mut r = self.clone();
        r.fit_seconds = 0.0;
        r.predict_seconds = 0.0;
        serde_json::to_string(&r).expect("record serializes")
    }

    fn empty(split: &SplitData, config: &DetectorConfig, status: RunStatus) -> Self {
        EvalRecord {
            dataset: split.dataset.clone(),
            seed: split.seed,
            kind: config.kind,
            config_id: config.id(),
            config: config.clone(),
            status,
            message: None,
            nan_fraction: 0.0,
            converged: false,
            encoder: None,
            val: BTreeMap::new(),
            test: BTreeMap::new(),
            fit_seconds: 0.0,
            predict_seconds: 0.0,
        }
    }
}

/// Raw scores kept next to a record on request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreSidecar {
    pub val: Vec<f64>,
    pub val_labels: Vec<u8>,
    pub test: Vec<f64>,
    pub test_labels: Vec<u8>,
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    /// Wall-clock budget of one fit plus prediction, in seconds.
    pub budget_seconds: f64,
    /// Results directory; records are not persisted when `None`.
    pub out_dir: Option<PathBuf>,
    pub keep_scores: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { budget_seconds: 600.0, out_dir: None, keep_scores: false }
    }
}

pub fn records_dir(out: &Path) -> PathBuf {
    out.join("records")
}

pub fn scores_dir(out: &Path) -> PathBuf {
    out.join("scores")
}

fn record_path(out: &Path, key: &str) -> PathBuf {
    records_dir(out).join(format!("{key}.json"))
}

fn scores_path(out: &Path, key: &str) -> PathBuf {
    scores_dir(out).join(format!("{key}.json.gz"))
}

pub fn read_record(path: &Path) -> Result<EvalRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_record(out: &Path, r: &EvalRecord) -> Result<()> {
    let dir = records_dir(out);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut text = serde_json::to_string_pretty(r)?;
    text.push('\n');
    write_atomic(&record_path(out, &r.key()), text.as_bytes())
}

fn write_scores(out: &Path, key: &str, s: &ScoreSidecar) -> Result<()> {
    let dir = scores_dir(out);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = scores_path(out, key);
    let mut gz = GzEncoder::new(Vec::new(), Compression::default());
    gz.write_all(serde_json::to_string(s)?.as_bytes()).map_err(|e| Error::io(&path, e))?;
    let bytes = gz.finish().map_err(|e| Error::io(&path, e))?;
    write_atomic(&path, &bytes)
}

/// Stored scores of the record with file stem `key`, if any.
pub fn load_scores(out: &Path, key: &str) -> Result<Option<ScoreSidecar>> {
    let path = scores_path(out, key);
    if !path.exists() {
        return Ok(None);
    }
    let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut text = String::new();
    GzDecoder::new(file).read_to_string(&mut text).map_err(|e| Error::io(&path, e))?;
    Ok(Some(serde_json::from_str(&text)?))
}

/// All records under `out`, sorted by kind, dataset, seed and config.
pub fn load_records(out: &Path) -> Result<Vec<EvalRecord>> {
    let dir = records_dir(out);
    let mut records = Vec::new();
    let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&dir, e))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            records.push(read_record(&path)?);
        }
    }
    records.sort_by(|a, b| {
        (a.kind, &a.dataset, a.seed, a.config.canonical()).cmp(&(b.kind, &b.dataset, b.seed, b.config.canonical()))
    });
    Ok(records)
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panic".into())
}

/// Fits `config` on `split`, scores validation and test data and persists
/// the record. An existing record for the same `(dataset, seed, config)` is
/// returned unchanged. Fitting errors produce a `failed` record and an
/// exhausted budget a `timeout` record; only I/O errors are returned.
pub fn run_experiment(
    split: &SplitData,
    config: &DetectorConfig,
    opts: &RunOptions,
    encoder: Option<(&AutoEncoder, &EncoderSource)>,
) -> Result<EvalRecord> {
    let key = EvalRecord::key_for(&split.dataset, split.seed, config);
    if let Some(out) = &opts.out_dir {
        let path = record_path(out, &key);
        if path.exists() {
            return read_record(&path);
        }
    }
    let (record, scores) = evaluate(split, config, opts.budget_seconds, encoder);
    if let Some(out) = &opts.out_dir {
        write_record(out, &record)?;
        if opts.keep_scores {
            if let Some(s) = scores {
                write_scores(out, &key, &s)?;
            }
        }
    }
    Ok(record)
}

fn evaluate(
    split: &SplitData,
    config: &DetectorConfig,
    budget: f64,
    encoder: Option<(&AutoEncoder, &EncoderSource)>,
) -> (EvalRecord, Option<ScoreSidecar>) {
    let mut rec = EvalRecord::empty(split, config, RunStatus::Ok);
    rec.encoder = encoder.map(|(_, src)| src.clone());
    if !(budget > 0.0) {
        rec.status = RunStatus::Timeout;
        rec.message = Some("zero budget".into());
        return (rec, None);
    }
    let budget = Duration::from_secs_f64(budget.min(1e9));
    let start = Instant::now();
    let deadline = start + budget;
    let val_normals = split.val_normals();
    let fitted = catch_unwind(AssertUnwindSafe(|| {
        fit_detector(config, split.train.view(), val_normals.view(), Some(deadline), encoder.map(|e| e.0))
    }));
    rec.fit_seconds = start.elapsed().as_secs_f64();
    let fitted = match fitted {
        Ok(Ok(f)) => f,
        Ok(Err(e)) => return failed(rec, e.to_string()),
        Err(p) => return failed(rec, panic_message(p)),
    };
    rec.converged = fitted.converged;
    if fitted.timed_out || Instant::now() >= deadline {
        rec.status = RunStatus::Timeout;
        return (rec, None);
    }

    let t0 = Instant::now();
    let scored = catch_unwind(AssertUnwindSafe(|| -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((fitted.scorer.score(split.val.view())?, fitted.scorer.score(split.test.view())?))
    }));
    rec.predict_seconds = t0.elapsed().as_secs_f64();
    let (mut val, mut test) = match scored {
        Ok(Ok(s)) => s,
        Ok(Err(e)) => return failed(rec, e.to_string()),
        Err(p) => return failed(rec, panic_message(p)),
    };
    if Instant::now() >= deadline {
        rec.status = RunStatus::Timeout;
        return (rec, None);
    }
    let rv = sanitize_scores(&mut val);
    let rt = sanitize_scores(&mut test);
    rec.nan_fraction = rv.nan_fraction.max(rt.nan_fraction);
    if rv.discarded || rt.discarded {
        rec.status = RunStatus::NanDiscarded;
        return (rec, None);
    }
    if rv.replaced + rt.replaced > 0 {
        log::warn!("{} on {}: replaced {} non-finite scores", config.kind, split.dataset, rv.replaced + rt.replaced);
    }
    match (evaluate_scores(&val, &split.val_labels), evaluate_scores(&test, &split.test_labels)) {
        (Ok(v), Ok(t)) => {
            rec.val = v;
            rec.test = t;
        }
        (Err(e), _) | (_, Err(e)) => return failed(rec, e.to_string()),
    }
    let sidecar = ScoreSidecar {
        val,
        val_labels: split.val_labels.clone(),
        test,
        test_labels: split.test_labels.clone(),
    };
    (rec, Some(sidecar))
}

fn failed(mut rec: EvalRecord, message: String) -> (EvalRecord, Option<ScoreSidecar>) {
    log::warn!("{} on {} seed {} failed: {message}", rec.kind, rec.dataset, rec.seed);
    rec.status = RunStatus::Failed;
    rec.message = Some(message);
    (rec, None)
}
