use std::path::{Path, PathBuf};

use adbench::data::{make_synthetic, write_csv, SyntheticKind};
use adbench::metrics::{nemenyi_cd, render_cd_svg, Alpha};
use adbench::pipeline::{
    curve_csv, delta_table, ensemble_topk, knowledge_curve, load_records, load_scores, run_suite, select,
    selection_ranks, write_report, DetectorKind, Protocol, ReportOptions, SuiteConfig, DEFAULT_MIN_REPS, PR_NS,
};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adbench", version, about = "Anomaly detection benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    GenData(GenData),
    /// Run a hyperparameter sweep and persist one record per run.
    Run(Run),
    /// Select configurations under the mean or max protocol.
    Select(Select),
    /// Average-rank table of the selected test metric.
    Rank(Select),
    /// Critical-difference diagram of the rank table.
    CdDiagram(CdDiagram),
    /// Top-k ensembles against the best single model (needs kept scores).
    Ensemble(Ensemble),
    /// Selected test metric as a function of the label budget.
    Curve(Select),
    /// All tables, diagrams and curves under <results>/report.
    Report(Report),
}

#[derive(Args)]
struct GenData {
    #[arg(long, default_value = "blobs")]
    kind: String,
    #[arg(long, default_value_t = 500)]
    n_normal: usize,
    #[arg(long, default_value_t = 50)]
    n_anomaly: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Run {
    /// JSON config file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Synthetic dataset name or CSV path (repeatable).
    #[arg(long = "dataset")]
    datasets: Vec<String>,
    /// Detector kind (repeatable).
    #[arg(long = "detector")]
    detectors: Vec<String>,
    #[arg(long)]
    n_configs: Option<usize>,
    /// Number of repetitions; seeds 1..=N.
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long = "budget")]
    budget_seconds: Option<f64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    keep_scores: bool,
    #[arg(long)]
    search_seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct Results {
    /// Results directory of a previous `run`.
    #[arg(long, default_value = "results")]
    results: PathBuf,
    /// Output file; defaults to a file under <results>/report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Select {
    #[command(flatten)]
    io: Results,
    #[arg(long, default_value = "mean")]
    protocol: String,
    /// Validation criterion used for selection.
    #[arg(long, default_value = "auc")]
    criterion: String,
    /// Test metric reported.
    #[arg(long, default_value = "auc")]
    metric: String,
    #[arg(long, default_value_t = DEFAULT_MIN_REPS)]
    min_reps: usize,
}

#[derive(Args)]
struct CdDiagram {
    #[command(flatten)]
    select: Select,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
}

#[derive(Args)]
struct Ensemble {
    #[command(flatten)]
    io: Results,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value = "auc")]
    criterion: String,
    /// Average normalized ranks instead of raw scores.
    #[arg(long)]
    rank_normalize: bool,
}

#[derive(Args)]
struct Report {
    #[arg(long, default_value = "results")]
    results: PathBuf,
    #[arg(long, default_value = "auc")]
    metric: String,
    #[arg(long, default_value = "auc")]
    criterion: String,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_MIN_REPS)]
    min_reps: usize,
}

fn output(io: &Results, default_name: &str, text: &str) -> Result<PathBuf> {
    let path = io.out.clone().unwrap_or_else(|| io.results.join("report").join(default_name));
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("{}", path.display());
    Ok(path)
}

fn records(dir: &Path) -> Result<Vec<adbench::pipeline::EvalRecord>> {
    let r = load_records(dir).with_context(|| format!("reading records under {}", dir.display()))?;
    if r.is_empty() {
        bail!("no records under {}", dir.display());
    }
    Ok(r)
}

fn suite_config(a: &Run) -> Result<SuiteConfig> {
    let mut cfg = match &a.config {
        Some(p) => SuiteConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => SuiteConfig::default(),
    };
    if !a.datasets.is_empty() {
        cfg.datasets = a.datasets.clone();
    }
    if !a.detectors.is_empty() {
        cfg.detectors = a.detectors.iter().map(|d| d.parse()).collect::<adbench::Result<Vec<DetectorKind>>>()?;
    }
    if let Some(n) = a.n_configs {
        cfg.n_configs = n;
    }
    if let Some(n) = a.seeds {
        cfg.seeds = (1..=n).collect();
    }
    if let Some(b) = a.budget_seconds {
        cfg.budget_seconds = b;
    }
    if let Some(o) = &a.output_dir {
        cfg.output_dir = o.clone();
    }
    if let Some(s) = a.search_seed {
        cfg.search_seed = s;
    }
    if let Some(t) = a.threads {
        cfg.threads = t;
    }
    cfg.keep_scores |= a.keep_scores;
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::GenData(a) => {
            let kind: SyntheticKind = a.kind.parse()?;
            if a.n_normal == 0 || a.n_anomaly == 0 {
                bail!("--n-normal and --n-anomaly must be positive");
            }
            write_csv(&make_synthetic(kind, a.n_normal, a.n_anomaly, a.seed), &a.out)?;
            println!("{}", a.out.display());
        }
        Command::Run(a) => {
            let cfg = suite_config(&a)?;
            let recs = run_suite(&cfg)?;
            let ok = recs.iter().filter(|r| r.is_ok()).count();
            println!("{} records ({ok} ok) in {}", recs.len(), cfg.output_dir.display());
        }
        Command::Select(a) => {
            let protocol: Protocol = a.protocol.parse()?;
            let sel = select(&records(&a.io.results)?, protocol, &a.criterion, a.min_reps)?;
            let name = format!("selection_{}_{}.json", protocol.name(), a.criterion);
            output(&a.io, &name, &serde_json::to_string_pretty(&sel)?)?;
        }
        Command::Rank(a) => {
            let protocol: Protocol = a.protocol.parse()?;
            let sel = select(&records(&a.io.results)?, protocol, &a.criterion, a.min_reps)?;
            let table = selection_ranks(&sel, &a.metric)?;
            output(&a.io, &format!("rank_{}_{}.csv", protocol.name(), a.metric), &table.to_csv())?;
        }
        Command::CdDiagram(a) => {
            let s = &a.select;
            let protocol: Protocol = s.protocol.parse()?;
            let sel = select(&records(&s.io.results)?, protocol, &s.criterion, s.min_reps)?;
            let table = selection_ranks(&sel, &s.metric)?;
            let cd = nemenyi_cd(table.methods.len(), table.datasets.len(), Alpha::from_value(a.alpha)?)?;
            let name = format!("cd_{}_{}.svg", protocol.name(), s.metric);
            output(&s.io, &name, &render_cd_svg(&table, cd)?)?;
        }
        Command::Ensemble(a) => {
            let dir = a.io.results.clone();
            let rows = ensemble_topk(&records(&dir)?, a.k, &a.criterion, a.rank_normalize, |r| {
                load_scores(&dir, &r.key())
            })?;
            if rows.is_empty() {
                bail!("no stored scores; rerun with --keep-scores");
            }
            output(&a.io, &format!("ensemble_k{}.csv", a.k), &delta_table(&rows))?;
        }
        Command::Curve(a) => {
            let protocol: Protocol = a.protocol.parse()?;
            let points = knowledge_curve(&records(&a.io.results)?, protocol, &PR_NS, &a.metric, a.min_reps)?;
            output(&a.io, &format!("curve_{}.csv", protocol.name()), &curve_csv(&points))?;
        }
        Command::Report(a) => {
            let opts = ReportOptions {
                metric: a.metric,
                criterion: a.criterion,
                alpha: a.alpha,
                min_reps: a.min_reps,
                ..ReportOptions::default()
            };
            let summary = write_report(&a.results, &records(&a.results)?, &opts)?;
            for f in &summary.files {
                println!("{}", f.display());
            }
            println!("{}", a.results.join("report").join("summary.json").display());
        }
    }
    Ok(())
}
