use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::DetectorKind;
use super::record::{pr_metric, EvalRecord, RunStatus, AUC};
use crate::error::{Error, Result};
use crate::metrics::{average_ranks, RankTable};

/// Repetitions a configuration needs before the mean protocol considers it.
pub const DEFAULT_MIN_REPS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// One configuration per dataset, best mean validation criterion.
    Mean,
    /// Best configuration per repetition.
    Max,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Mean => "mean",
            Protocol::Max => "max",
        }
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Protocol::Mean),
            "max" => Ok(Protocol::Max),
            other => Err(Error::invalid(format!("unknown protocol {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedChoice {
    pub seed: u64,
    pub config_id: String,
    /// Validation criterion of the chosen config on this repetition.
    pub val: f64,
    pub test: BTreeMap<String, f64>,
}

/// Selected configuration(s) of one detector kind on one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub kind: DetectorKind,
    pub dataset: String,
    /// The shared configuration under the mean protocol.
    pub config_id: Option<String>,
    /// Mean validation criterion over the chosen records.
    pub val: f64,
    /// Test metrics averaged over repetitions.
    pub test: BTreeMap<String, f64>,
    pub per_seed: Vec<SeedChoice>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub protocol: Protocol,
    pub criterion: String,
    pub selections: Vec<Selection>,
    /// Records left out because more than half of their scores were NaN.
    pub nan_excluded: usize,
    /// Records left out because they timed out or failed.
    pub unfinished: usize,
}

impl SelectionResult {
    pub fn get(&self, kind: DetectorKind, dataset: &str) -> Option<&Selection> {
        self.selections.iter().find(|s| s.kind == kind && s.dataset == dataset)
    }
}

struct Usable<'a> {
    groups: BTreeMap<(DetectorKind, String), Vec<&'a EvalRecord>>,
    nan_excluded: usize,
    unfinished: usize,
}

fn usable<'a>(records: &'a [EvalRecord], criterion: &str) -> Result<Usable<'a>> {
    let mut groups: BTreeMap<_, Vec<&EvalRecord>> = BTreeMap::new();
    let (mut nan_excluded, mut unfinished) = (0, 0);
    for r in records {
        match r.status {
            RunStatus::Ok => {}
            RunStatus::NanDiscarded => {
                nan_excluded += 1;
                continue;
            }
            RunStatus::Timeout | RunStatus::Failed => {
                unfinished += 1;
                continue;
            }
        }
        if !r.val.contains_key(criterion) {
            return Err(Error::invalid(format!("records carry no validation metric {criterion:?}")));
        }
        groups.entry((r.kind, r.dataset.clone())).or_default().push(r);
    }
    Ok(Usable { groups, nan_excluded, unfinished })
}

fn mean_metrics<'a>(records: impl IntoIterator<Item = &'a BTreeMap<String, f64>>) -> BTreeMap<String, f64> {
    let mut sum: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for m in records {
        for (k, v) in m {
            let e = sum.entry(k.clone()).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    sum.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

/// `a` beats `b`: higher value, ties to the smaller canonical string.
fn better(a: (f64, &str), b: (f64, &str)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
}

fn seed_choice(r: &EvalRecord, criterion: &str) -> SeedChoice {
    SeedChoice {
        seed: r.seed,
        config_id: r.config_id.clone(),
        val: r.val[criterion],
        test: r.test.clone(),
    }
}

/// Mean protocol: per (kind, dataset) the configuration with the best mean
/// validation `criterion` over its repetitions; configurations with fewer
/// than `min_reps` finished repetitions are skipped.
pub fn select_mean(records: &[EvalRecord], criterion: &str, min_reps: usize) -> Result<SelectionResult> {
    let u = usable(records, criterion)?;
    let mut selections = Vec::new();
    for ((kind, dataset), recs) in u.groups {
        let mut by_config: BTreeMap<String, Vec<&EvalRecord>> = BTreeMap::new();
        for r in recs {
            by_config.entry(r.config.canonical()).or_default().push(r);
        }
        let mut best: Option<(f64, String)> = None;
        for (canon, rs) in &by_config {
            if rs.len() < min_reps.max(1) {
                continue;
            }
            let m = rs.iter().map(|r| r.val[criterion]).sum::<f64>() / rs.len() as f64;
            if best.as_ref().is_none_or(|(bv, bc)| better((m, canon), (*bv, bc))) {
                best = Some((m, canon.clone()));
            }
        }
        let Some((val, canon)) = best else {
            log::warn!("{kind} on {dataset}: no configuration has {min_reps} finished repetitions");
            continue;
        };
        let mut chosen = by_config.remove(&canon).unwrap();
        chosen.sort_by_key(|r| r.seed);
        selections.push(Selection {
            kind,
            dataset,
            config_id: Some(chosen[0].config_id.clone()),
            val,
            test: mean_metrics(chosen.iter().map(|r| &r.test)),
            per_seed: chosen.iter().map(|r| seed_choice(r, criterion)).collect(),
        });
    }
    Ok(SelectionResult {
        protocol: Protocol::Mean,
        criterion: criterion.to_string(),
        selections,
        nan_excluded: u.nan_excluded,
        unfinished: u.unfinished,
    })
}

/// Max protocol: per (kind, dataset, seed) the record with the best
/// validation `criterion`; test metrics are averaged over seeds.
pub fn select_max(records: &[EvalRecord], criterion: &str) -> Result<SelectionResult> {
    let u = usable(records, criterion)?;
    let mut selections = Vec::new();
    for ((kind, dataset), recs) in u.groups {
        let mut by_seed: BTreeMap<u64, (&EvalRecord, String)> = BTreeMap::new();
        for r in recs {
            let canon = r.config.canonical();
            match by_seed.get(&r.seed) {
                Some((b, bc)) if !better((r.val[criterion], &canon), (b.val[criterion], bc)) => {}
                _ => {
                    by_seed.insert(r.seed, (r, canon));
                }
            }
        }
        let chosen: Vec<&EvalRecord> = by_seed.values().map(|(r, _)| *r).collect();
        selections.push(Selection {
            kind,
            dataset,
            config_id: None,
            val: chosen.iter().map(|r| r.val[criterion]).sum::<f64>() / chosen.len() as f64,
            test: mean_metrics(chosen.iter().map(|r| &r.test)),
            per_seed: chosen.iter().map(|r| seed_choice(r, criterion)).collect(),
        });
    }
    Ok(SelectionResult {
        protocol: Protocol::Max,
        criterion: criterion.to_string(),
        selections,
        nan_excluded: u.nan_excluded,
        unfinished: u.unfinished,
    })
}

pub fn select(records: &[EvalRecord], protocol: Protocol, criterion: &str, min_reps: usize) -> Result<SelectionResult> {
    match protocol {
        Protocol::Mean => select_mean(records, criterion, min_reps),
        Protocol::Max => select_max(records, criterion),
    }
}

/// One point of a label-budget curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub kind: DetectorKind,
    /// Selection criterion: `pr@n` or `auc`.
    pub criterion: String,
    /// Label budget; `None` for the full-AUC point.
    pub n: Option<usize>,
    /// Selected test metric averaged over datasets.
    pub test: f64,
    pub n_datasets: usize,
}

/// Test `test_metric` achieved when selecting by precision at each `n` in
/// `ns` (in the given order) and finally by validation AUC.
pub fn knowledge_curve(
    records: &[EvalRecord],
    protocol: Protocol,
    ns: &[usize],
    test_metric: &str,
    min_reps: usize,
) -> Result<Vec<CurvePoint>> {
    let mut criteria: Vec<(String, Option<usize>)> = ns.iter().map(|&n| (pr_metric(n), Some(n))).collect();
    criteria.push((AUC.to_string(), None));
    let mut points = Vec::new();
    for (criterion, n) in criteria {
        let sel = select(records, protocol, &criterion, min_reps)?;
        let mut per_kind: BTreeMap<DetectorKind, Vec<f64>> = BTreeMap::new();
        for s in &sel.selections {
            if let Some(v) = s.test.get(test_metric) {
                per_kind.entry(s.kind).or_default().push(*v);
            }
        }
        for (kind, vals) in per_kind {
            points.push(CurvePoint {
                kind,
                criterion: criterion.clone(),
                n,
                test: vals.iter().sum::<f64>() / vals.len() as f64,
                n_datasets: vals.len(),
            });
        }
    }
    Ok(points)
}

/// Method x dataset matrix of the selected test metric. Datasets on which
/// some method has no selection are dropped.
pub fn selection_matrix(sel: &SelectionResult, test_metric: &str) -> (Vec<String>, Vec<String>, Vec<Vec<f64>>) {
    let mut kinds: Vec<DetectorKind> = sel.selections.iter().map(|s| s.kind).collect();
    kinds.sort();
    kinds.dedup();
    let mut datasets: Vec<String> = sel.selections.iter().map(|s| s.dataset.clone()).collect();
    datasets.sort();
    datasets.dedup();
    datasets.retain(|d| {
        let complete = kinds
            .iter()
            .all(|&k| sel.get(k, d).is_some_and(|s| s.test.contains_key(test_metric)));
        if !complete {
            log::warn!("dataset {d} dropped from the table: some method has no selection");
        }
        complete
    });
    let values = kinds
        .iter()
        .map(|&k| datasets.iter().map(|d| sel.get(k, d).unwrap().test[test_metric]).collect())
        .collect();
    (kinds.iter().map(|k| k.name().to_string()).collect(), datasets, values)
}

/// Average ranks of the selected test metric (higher is better).
pub fn selection_ranks(sel: &SelectionResult, test_metric: &str) -> Result<RankTable> {
    let (methods, datasets, values) = selection_matrix(sel, test_metric);
    average_ranks(&methods, &datasets, &values, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::config::DetectorConfig;
    use crate::rng;
    use serde_json::json;

    fn record(config: usize, seed: u64, val: f64, test: f64) -> EvalRecord {
        let cfg = DetectorConfig::new(DetectorKind::Knn, BTreeMap::from([("k".to_string(), json!(config))]), 0);
        EvalRecord {
            dataset: "d".into(),
            seed,
            kind: DetectorKind::Knn,
            config_id: cfg.id(),
            config: cfg,
            status: RunStatus::Ok,
            message: None,
            nan_fraction: 0.0,
            converged: true,
            encoder: None,
            val: BTreeMap::from([(AUC.to_string(), val), (pr_metric(5), val.min(1.0))]),
            test: BTreeMap::from([(AUC.to_string(), test)]),
            fit_seconds: 0.0,
            predict_seconds: 0.0,
        }
    }

    #[test]
    fn single_config_is_selected() {
        let recs: Vec<_> = (0..3).map(|s| record(1, s, 0.8, 0.7)).collect();
        let m = select_mean(&recs, AUC, 3).unwrap();
        assert_eq!(m.selections.len(), 1);
        assert_eq!(m.selections[0].config_id.as_deref(), Some(recs[0].config_id.as_str()));
        assert!((m.selections[0].test[AUC] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn mean_ties_go_to_the_smaller_canonical_string() {
        // config 1: {0.9, 0.5}, config 2: {0.7, 0.7}; both average 0.7
        let recs = vec![record(1, 0, 0.9, 0.1), record(1, 1, 0.5, 0.1), record(2, 0, 0.7, 0.2), record(2, 1, 0.7, 0.2)];
        let m = select_mean(&recs, AUC, 2).unwrap();
        let first = recs[0].config.canonical().min(recs[2].config.canonical());
        let chosen = recs.iter().find(|r| r.config.canonical() == first).unwrap();
        assert_eq!(m.selections[0].config_id.as_deref(), Some(chosen.config_id.as_str()));
    }

    #[test]
    fn min_reps_is_enforced() {
        let recs = vec![record(1, 0, 0.9, 0.1), record(1, 1, 0.9, 0.1), record(2, 0, 0.5, 0.2), record(2, 1, 0.5, 0.2), record(2, 2, 0.5, 0.2)];
        let m = select_mean(&recs, AUC, 3).unwrap();
        assert_eq!(m.selections[0].config_id.as_deref(), Some(recs[2].config_id.as_str()));
    }

    #[test]
    fn nan_discarded_records_are_excluded_and_counted() {
        let mut recs: Vec<_> = (0..3).map(|s| record(1, s, 0.6, 0.6)).collect();
        for s in 0..3 {
            let mut r = record(2, s, 0.99, 0.99);
            r.status = RunStatus::NanDiscarded;
            r.val.clear();
            recs.push(r);
        }
        let m = select_mean(&recs, AUC, 3).unwrap();
        assert_eq!(m.nan_excluded, 3);
        assert_eq!(m.selections[0].config_id.as_deref(), Some(recs[0].config_id.as_str()));
        assert_eq!(select_max(&recs, AUC).unwrap().nan_excluded, 3);
    }

    fn random_table(seed: u64) -> Vec<EvalRecord> {
        let mut r = rng::seeded(seed);
        let mut recs = Vec::new();
        for c in 0..3 {
            for s in 0..5 {
                recs.push(record(c, s, rng::uniform(&mut r, 0.4, 1.0), rng::uniform(&mut r, 0.4, 1.0)));
            }
        }
        recs
    }

    #[test]
    fn selections_match_brute_force() {
        for t in 0..20 {
            let recs = random_table(t);
            // exhaustive mean search
            let means: Vec<f64> = (0..3).map(|c| (0..5).map(|s| recs[c * 5 + s].val[AUC]).sum::<f64>() / 5.0).collect();
            let best = (0..3).fold(0, |b, c| if means[c] > means[b] { c } else { b });
            let test_mean = (0..5).map(|s| recs[best * 5 + s].test[AUC]).sum::<f64>() / 5.0;
            let m = select_mean(&recs, AUC, 3).unwrap();
            assert_eq!(m.selections[0].config_id.as_deref(), Some(recs[best * 5].config_id.as_str()));
            assert!((m.selections[0].test[AUC] - test_mean).abs() < 1e-12);

            let mut total = 0.0;
            for s in 0..5 {
                let b = (0..3).fold(0, |b, c| if recs[c * 5 + s].val[AUC] > recs[b * 5 + s].val[AUC] { c } else { b });
                total += recs[b * 5 + s].test[AUC];
                // argmax dominance on every repetition
                let x = select_max(&recs, AUC).unwrap();
                assert!(x.selections[0].per_seed[s].val >= m.selections[0].per_seed[s].val);
            }
            let x = select_max(&recs, AUC).unwrap();
            assert!((x.selections[0].test[AUC] - total / 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn one_repetition_max_equals_mean() {
        let recs: Vec<_> = random_table(4).into_iter().filter(|r| r.seed == 0).collect();
        let m = select_mean(&recs, AUC, 1).unwrap();
        let x = select_max(&recs, AUC).unwrap();
        assert_eq!(m.selections[0].test, x.selections[0].test);
        assert_eq!(m.selections[0].per_seed, x.selections[0].per_seed);
    }

    #[test]
    fn curve_ends_with_the_auc_selection() {
        let recs = random_table(1);
        let c = knowledge_curve(&recs, Protocol::Max, &[5], AUC, 3).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].n, Some(5));
        assert_eq!(c[1].criterion, AUC);
        assert_eq!(c[1].test, select_max(&recs, AUC).unwrap().selections[0].test[AUC]);
    }
}
