use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::{apply_overrides, default_grid, sample_configs, DetectorConfig, DetectorKind};
use super::ensemble::{delta_table, ensemble_topk};
use super::fit::{fit_autoencoder_config, EncoderSource};
use super::record::{load_scores, records_dir, run_experiment, EvalRecord, RunOptions, RunStatus, SplitData, AUC, PR_NS};
use super::select::{knowledge_curve, select, selection_ranks, Protocol, DEFAULT_MIN_REPS};
use crate::data::{load_csv, make_synthetic, CsvOptions, Dataset, SyntheticKind};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::metrics::{nemenyi_cd, render_cd_svg, Alpha};
use crate::rng;

/// Everything a sweep needs; the JSON form of the CLI config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    /// Synthetic generator names or paths to CSV files with a `label` column.
    pub datasets: Vec<String>,
    pub detectors: Vec<DetectorKind>,
    pub n_configs: usize,
    /// Repetition seeds (one split per seed).
    pub seeds: Vec<u64>,
    /// Per-configuration wall-clock budget.
    pub budget_seconds: f64,
    pub output_dir: PathBuf,
    /// Per-kind replacement candidate lists.
    pub grid_overrides: BTreeMap<DetectorKind, BTreeMap<String, Vec<Value>>>,
    pub keep_scores: bool,
    pub search_seed: u64,
    /// Size and seed of generated synthetic datasets.
    pub n_normal: usize,
    pub n_anomaly: usize,
    pub data_seed: u64,
    /// Worker threads; 0 uses one per core.
    pub threads: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            datasets: vec!["blobs".into()],
            detectors: vec![DetectorKind::Knn],
            n_configs: 100,
            seeds: (1..=5).collect(),
            budget_seconds: 600.0,
            output_dir: PathBuf::from("results"),
            grid_overrides: BTreeMap::new(),
            keep_scores: false,
            search_seed: 0,
            n_normal: 500,
            n_anomaly: 50,
            data_seed: 0,
            threads: 0,
        }
    }
}

impl SuiteConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() || self.detectors.is_empty() || self.seeds.is_empty() {
            return Err(Error::invalid("datasets, detectors and seeds must be non-empty"));
        }
        if self.n_configs == 0 {
            return Err(Error::invalid("n_configs must be positive"));
        }
        if self.detectors.iter().any(|k| k.is_two_stage()) && !self.detectors.contains(&DetectorKind::Vae) {
            return Err(Error::invalid("two-stage detectors need vae in the detector list"));
        }
        for kind in &self.detectors {
            self.grid(*kind)?;
        }
        Ok(())
    }

    /// Search space of `kind` after overrides.
    pub fn grid(&self, kind: DetectorKind) -> Result<super::config::Grid> {
        let mut g = default_grid(kind);
        if let Some(o) = self.grid_overrides.get(&kind) {
            apply_overrides(&mut g, o).map_err(|e| Error::invalid(format!("{kind}: {e}")))?;
        }
        Ok(g)
    }

    /// Sampled configurations of `kind`; the stream depends only on the
    /// search seed and the kind.
    pub fn configs(&self, kind: DetectorKind) -> Result<Vec<DetectorConfig>> {
        let stream = DetectorKind::ALL.iter().position(|k| *k == kind).unwrap() as u64;
        Ok(sample_configs(kind, &self.grid(kind)?, self.n_configs, rng::derive_seed(self.search_seed, stream)))
    }

    pub fn load_dataset(&self, name: &str) -> Result<Dataset> {
        match name.parse::<SyntheticKind>() {
            Ok(kind) => Ok(make_synthetic(kind, self.n_normal.max(1), self.n_anomaly.max(1), self.data_seed)),
            Err(_) if name.ends_with(".csv") => load_csv(name, &CsvOptions::default()),
            Err(e) => Err(e),
        }
    }

    fn run_options(&self) -> RunOptions {
        RunOptions {
            budget_seconds: self.budget_seconds,
            out_dir: Some(self.output_dir.clone()),
            keep_scores: self.keep_scores,
        }
    }
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))
}

/// The validation-AUC-best finished VAE record of one split.
fn best_vae<'a>(records: &'a [EvalRecord], split: &SplitData) -> Option<&'a EvalRecord> {
    records
        .iter()
        .filter(|r| r.kind == DetectorKind::Vae && r.is_ok() && r.dataset == split.dataset && r.seed == split.seed)
        .min_by(|a, b| {
            b.val[AUC]
                .total_cmp(&a.val[AUC])
                .then_with(|| a.config.canonical().cmp(&b.config.canonical()))
        })
}

/// Runs every (dataset, seed, configuration) combination and returns the
/// records in task order. Existing records are reused, so an interrupted
/// sweep resumes and a finished one is a no-op.
pub fn run_suite(cfg: &SuiteConfig) -> Result<Vec<EvalRecord>> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    std::fs::create_dir_all(records_dir(out)).map_err(|e| Error::io(out, e))?;
    write_atomic(&out.join("suite.json"), serde_json::to_string_pretty(cfg)?.as_bytes())?;

    let mut splits = Vec::new();
    for name in &cfg.datasets {
        let d = cfg.load_dataset(name)?;
        for &seed in &cfg.seeds {
            splits.push(SplitData::prepare(&d, seed)?);
        }
    }
    let mut single = Vec::new();
    let mut two_stage = Vec::new();
    for &kind in &cfg.detectors {
        let configs = cfg.configs(kind)?;
        if kind.is_two_stage() {
            two_stage.extend(configs);
        } else {
            single.extend(configs);
        }
    }
    let opts = cfg.run_options();
    let pool = pool(cfg.threads)?;

    let tasks: Vec<(&SplitData, &DetectorConfig)> =
        splits.iter().flat_map(|s| single.iter().map(move |c| (s, c))).collect();
    log::info!("running {} single-stage tasks", tasks.len());
    let mut records = pool.install(|| {
        tasks
            .par_iter()
            .map(|(s, c)| run_experiment(s, c, &opts, None))
            .collect::<Result<Vec<_>>>()
    })?;

    if !two_stage.is_empty() {
        let stage2 = pool.install(|| {
            splits
                .par_iter()
                .map(|s| run_second_stage(s, &two_stage, &records, &opts))
                .collect::<Result<Vec<_>>>()
        })?;
        records.extend(stage2.into_iter().flatten());
    }
    Ok(records)
}

fn run_second_stage(
    split: &SplitData,
    configs: &[DetectorConfig],
    records: &[EvalRecord],
    opts: &RunOptions,
) -> Result<Vec<EvalRecord>> {
    let Some(vae) = best_vae(records, split) else {
        log::warn!("{} seed {}: no finished VAE, two-stage models skipped", split.dataset, split.seed);
        return Ok(Vec::new());
    };
    let source = EncoderSource { config_id: vae.config_id.clone(), val_auc: vae.val[AUC] };
    // records already on disk do not need the encoder again
    let cached: Option<Vec<EvalRecord>> = configs
        .iter()
        .map(|c| {
            let path = opts.out_dir.as_ref()?.join("records").join(format!(
                "{}.json",
                EvalRecord::key_for(&split.dataset, split.seed, c)
            ));
            super::record::read_record(&path).ok()
        })
        .collect();
    if let Some(c) = cached {
        return Ok(c);
    }
    let (encoder, _) = fit_autoencoder_config(&vae.config, split.train.view(), split.val_normals().view(), None)?;
    configs
        .iter()
        .map(|c| run_experiment(split, c, opts, Some((&encoder, &source))))
        .collect()
}

/// What `report` produces.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportOptions {
    /// Test metric placed in the tables.
    pub metric: String,
    /// Validation criterion used for selection.
    pub criterion: String,
    pub alpha: f64,
    pub min_reps: usize,
    pub ensemble_sizes: Vec<usize>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            metric: AUC.into(),
            criterion: AUC.into(),
            alpha: 0.1,
            min_reps: DEFAULT_MIN_REPS,
            ensemble_sizes: vec![5, 10],
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ReportSummary {
    pub records: usize,
    pub status_counts: BTreeMap<String, usize>,
    pub nan_excluded: usize,
    pub files: Vec<PathBuf>,
}

fn ranks_csv(t: &crate::metrics::RankTable) -> String {
    let mut out = String::from("dataset");
    for m in &t.methods {
        let _ = write!(out, ",{m}");
    }
    out.push('\n');
    for (d, name) in t.datasets.iter().enumerate() {
        out.push_str(name);
        for row in &t.ranks {
            let _ = write!(out, ",{:.6}", row[d]);
        }
        out.push('\n');
    }
    out
}

/// Knowledge curve as CSV (`kind,criterion,n,test,n_datasets`).
pub fn curve_csv(points: &[super::select::CurvePoint]) -> String {
    let mut out = String::from("kind,criterion,n,test,n_datasets\n");
    for p in points {
        let n = p.n.map_or_else(|| "all".to_string(), |n| n.to_string());
        let _ = writeln!(out, "{},{},{n},{:.6},{}", p.kind, p.criterion, p.test, p.n_datasets);
    }
    out
}

/// Writes method x dataset tables, ranks, CD diagrams (when at least two
/// methods share a dataset), knowledge curves, ensemble deltas (when scores
/// were kept) and a summary into `out/report`.
pub fn write_report(out: &Path, records: &[EvalRecord], opts: &ReportOptions) -> Result<ReportSummary> {
    let dir = out.join("report");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut summary = ReportSummary { records: records.len(), ..Default::default() };
    for r in records {
        let s = serde_json::to_value(r.status)?.as_str().unwrap_or("unknown").to_string();
        *summary.status_counts.entry(s).or_default() += 1;
    }
    summary.nan_excluded = records.iter().filter(|r| r.status == RunStatus::NanDiscarded).count();
    let alpha = Alpha::from_value(opts.alpha)?;
    let write = |name: String, text: String, summary: &mut ReportSummary| -> Result<()> {
        let path = dir.join(name);
        write_atomic(&path, text.as_bytes())?;
        summary.files.push(path);
        Ok(())
    };

    for protocol in [Protocol::Mean, Protocol::Max] {
        let sel = select(records, protocol, &opts.criterion, opts.min_reps)?;
        let stem = format!("{}_{}", protocol.name(), opts.metric);
        write(format!("{stem}_selection.json"), serde_json::to_string_pretty(&sel)?, &mut summary)?;
        match selection_ranks(&sel, &opts.metric) {
            Ok(table) if !table.datasets.is_empty() => {
                write(format!("{stem}_values.csv"), table.to_csv(), &mut summary)?;
                write(format!("{stem}_ranks.csv"), ranks_csv(&table), &mut summary)?;
                if let Ok(cd) = nemenyi_cd(table.methods.len(), table.datasets.len(), alpha) {
                    write(format!("{stem}_cd.svg"), render_cd_svg(&table, cd)?, &mut summary)?;
                }
            }
            Ok(_) => log::warn!("{stem}: no dataset has selections for every method"),
            Err(e) => log::warn!("{stem}: no rank table ({e})"),
        }
        let curve = knowledge_curve(records, protocol, &PR_NS, &opts.metric, opts.min_reps)?;
        write(format!("curve_{}.csv", protocol.name()), curve_csv(&curve), &mut summary)?;
    }

    let mut deltas = Vec::new();
    for &k in &opts.ensemble_sizes {
        deltas.extend(ensemble_topk(records, k, &opts.criterion, false, |r| load_scores(out, &r.key()))?);
    }
    if !deltas.is_empty() {
        write("ensemble_deltas.csv".into(), delta_table(&deltas), &mut summary)?;
        write("ensemble_rows.json".into(), serde_json::to_string_pretty(&deltas)?, &mut summary)?;
    }
    let text = serde_json::to_string_pretty(&summary)?;
    write_atomic(&dir.join("summary.json"), text.as_bytes())?;
    Ok(summary)
}
