use std::collections::BTreeMap;

use adbench::classical::{knn_fit, KnnVariant};
use adbench::data::{make_synthetic, Dataset, SyntheticKind};
use adbench::detector::Scorer;
use adbench::generative::AutoEncoder;
use adbench::metrics::roc_auc;
use adbench::nn::{Mat, Model};
use adbench::pipeline::{
    default_grid, ensemble_topk, fit_autoencoder_config, knowledge_curve, load_records, load_scores, metric_names,
    run_experiment, sample_configs, select, two_stage_fit, DetectorConfig, DetectorKind, EvalRecord, Protocol,
    RunOptions, RunStatus, SplitData, AUC,
};
use adbench::rng;
use ndarray::Array2;
use serde_json::{json, Value};

fn config(kind: DetectorKind, params: Value, seed: u64) -> DetectorConfig {
    let params: BTreeMap<String, Value> = serde_json::from_value(params).unwrap();
    DetectorConfig::new(kind, params, seed)
}

fn knn(k: usize) -> DetectorConfig {
    config(DetectorKind::Knn, json!({"k": k, "variant": "gamma"}), 0)
}

fn blobs_split(seed: u64) -> SplitData {
    SplitData::prepare(&make_synthetic(SyntheticKind::Blobs, 400, 40, 0), seed).unwrap()
}

#[test]
fn knn_run_yields_finite_metrics() {
    let rec = run_experiment(&blobs_split(1), &knn(5), &RunOptions::default(), None).unwrap();
    assert_eq!(rec.status, RunStatus::Ok);
    assert!(rec.fit_seconds > 0.0);
    for name in metric_names() {
        for m in [&rec.val, &rec.test] {
            let v = m[&name];
            assert!(v.is_finite() && (0.0..=1.0).contains(&v), "{name} = {v}");
        }
    }
    assert!(rec.test[AUC] > 0.9);
}

#[test]
fn zero_budget_times_out_without_metrics() {
    let opts = RunOptions { budget_seconds: 0.0, ..Default::default() };
    let rec = run_experiment(&blobs_split(1), &knn(5), &opts, None).unwrap();
    assert_eq!(rec.status, RunStatus::Timeout);
    assert!(rec.val.is_empty() && rec.test.is_empty());
}

#[test]
fn failures_become_records() {
    // more neighbours than training rows
    let rec = run_experiment(&blobs_split(1), &knn(100_000), &RunOptions::default(), None).unwrap();
    assert_eq!(rec.status, RunStatus::Failed);
    assert!(rec.message.is_some());
}

#[test]
fn reruns_return_the_stored_record() {
    let tmp = tempfile::tempdir().unwrap();
    let opts = RunOptions { out_dir: Some(tmp.path().to_path_buf()), keep_scores: true, ..Default::default() };
    let split = blobs_split(2);
    let first = run_experiment(&split, &knn(3), &opts, None).unwrap();
    let path = tmp.path().join("records").join(format!("{}.json", first.key()));
    let bytes = std::fs::read(&path).unwrap();
    let modified = std::fs::metadata(&path).unwrap().modified().unwrap();

    let again = run_experiment(&split, &knn(3), &opts, None).unwrap();
    assert_eq!(first, again);
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
    assert_eq!(std::fs::metadata(&path).unwrap().modified().unwrap(), modified);
    assert_eq!(load_records(tmp.path()).unwrap(), vec![first.clone()]);
    let scores = load_scores(tmp.path(), &first.key()).unwrap().unwrap();
    assert_eq!(scores.test_labels, split.test_labels);
}

fn split_with_nan_rows(fraction: f64) -> SplitData {
    let mut s = blobs_split(3);
    let n = (fraction * s.test.nrows() as f64).round() as usize;
    for r in 0..n {
        s.test[[r, 0]] = f64::NAN;
    }
    s
}

#[test]
fn mostly_nan_scores_are_discarded_and_excluded() {
    let bad = run_experiment(&split_with_nan_rows(0.6), &knn(3), &RunOptions::default(), None).unwrap();
    assert_eq!(bad.status, RunStatus::NanDiscarded);
    assert!(bad.nan_fraction > 0.5);

    let tolerable = run_experiment(&split_with_nan_rows(0.3), &knn(5), &RunOptions::default(), None).unwrap();
    assert_eq!(tolerable.status, RunStatus::Ok);
    assert!((tolerable.nan_fraction - 0.3).abs() < 0.02);

    let sel = select(&[bad, tolerable.clone()], Protocol::Max, AUC, 1).unwrap();
    assert_eq!(sel.nan_excluded, 1);
    assert_eq!(sel.selections.len(), 1);
    assert_eq!(sel.selections[0].per_seed[0].config_id, tolerable.config_id);
}

/// Records of one kind over `n_tables` datasets where every config has a
/// latent quality; validation AUC sees it with little noise, precision at 5
/// with a lot, and the test metric with moderate noise.
fn simulated_records(n_tables: usize, seed: u64) -> Vec<EvalRecord> {
    let mut r = rng::seeded(seed);
    let mut out = Vec::new();
    for table in 0..n_tables {
        let dataset = format!("table{table}");
        for c in 0..20 {
            let quality = rng::uniform(&mut r, 0.6, 0.95);
            let cfg = config(DetectorKind::Knn, json!({"k": 2 * c + 1, "variant": "kappa"}), c as u64);
            for s in 1..=3u64 {
                let mut val = BTreeMap::new();
                val.insert(AUC.to_string(), quality + 0.01 * rng::normal(&mut r));
                val.insert("pr@5".to_string(), quality + 0.3 * rng::normal(&mut r));
                let mut test = BTreeMap::new();
                test.insert(AUC.to_string(), quality + 0.03 * rng::normal(&mut r));
                out.push(EvalRecord {
                    dataset: dataset.clone(),
                    seed: s,
                    kind: cfg.kind,
                    config_id: cfg.id(),
                    config: cfg.clone(),
                    status: RunStatus::Ok,
                    message: None,
                    nan_fraction: 0.0,
                    converged: true,
                    encoder: None,
                    val,
                    test,
                    fit_seconds: 0.0,
                    predict_seconds: 0.0,
                });
            }
        }
    }
    out
}

#[test]
fn few_labels_select_worse_models_on_average() {
    for (seed, protocol) in [(1, Protocol::Mean), (2, Protocol::Max)] {
        let records = simulated_records(25, seed);
        let curve = knowledge_curve(&records, protocol, &[5], AUC, 3).unwrap();
        assert_eq!(curve.len(), 2);
        assert_eq!(curve[0].n, Some(5));
        assert_eq!(curve[1].n, None);
        assert!(curve[0].n_datasets == 25 && curve[1].n_datasets == 25);
        assert!(curve[0].test <= curve[1].test, "{protocol:?}: {} > {}", curve[0].test, curve[1].test);

        // the full-AUC point is exactly the plain selection
        let sel = select(&records, protocol, AUC, 3).unwrap();
        let mean = sel.selections.iter().map(|s| s.test[AUC]).sum::<f64>() / 25.0;
        assert_eq!(curve[1].test, mean);
    }
}

#[test]
fn one_member_ensemble_is_the_best_single_model() {
    let tmp = tempfile::tempdir().unwrap();
    let opts = RunOptions { out_dir: Some(tmp.path().to_path_buf()), keep_scores: true, ..Default::default() };
    let split = blobs_split(4);
    let configs = sample_configs(DetectorKind::Knn, &default_grid(DetectorKind::Knn), 6, 9);
    let recs: Vec<EvalRecord> = configs.iter().map(|c| run_experiment(&split, c, &opts, None).unwrap()).collect();
    let rows = ensemble_topk(&recs, 1, AUC, false, |r| load_scores(tmp.path(), &r.key())).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].delta, 0.0);
    let best = recs
        .iter()
        .max_by(|a, b| a.val[AUC].total_cmp(&b.val[AUC]).then_with(|| b.config.canonical().cmp(&a.config.canonical())))
        .unwrap();
    assert_eq!(rows[0].members, vec![best.config_id.clone()]);
    assert!((rows[0].ensemble_auc - best.test[AUC]).abs() < 1e-12);

    let rows5 = ensemble_topk(&recs, 5, AUC, true, |r| load_scores(tmp.path(), &r.key())).unwrap();
    assert_eq!(rows5[0].members.len(), 5);
}

fn vae_config(latent_dim: usize) -> DetectorConfig {
    config(
        DetectorKind::Vae,
        json!({
            "latent_dim": latent_dim, "hidden_dim": 32, "activation": "tanh", "n_layers": 3,
            "variance": "scalar", "fixed_variance": 1.0, "score": "rm", "mc_samples": 10,
            "lr": 1e-3, "batch_size": 64, "patience": 20, "check_interval": 10, "max_batches": 3000,
        }),
        7,
    )
}

/// Encoder whose mean is the input itself.
fn identity_encoder(dim: usize) -> AutoEncoder {
    let mut ae = AutoEncoder::new(dim, &adbench::generative::AutoEncoderSpec {
        latent_dim: dim,
        hidden_dim: 4,
        n_layers: 1,
        activation: adbench::nn::Activation::Tanh,
        variance: adbench::generative::DecoderVariance::Scalar,
        prior: adbench::generative::Prior::Normal,
    }, None, 0)
    .unwrap();
    let layer = &mut ae.encoder.layers[0];
    layer.weight = Array2::from_shape_fn((dim, 2 * dim), |(i, j)| f64::from(u8::from(i == j)));
    layer.bias.fill(0.0);
    ae
}

#[test]
fn identity_encoder_reduces_to_the_plain_detector() {
    let split = blobs_split(5);
    let second = knn(7);
    let fitted = two_stage_fit(&identity_encoder(2), &second, split.train.view(), None).unwrap();
    let plain = knn_fit(split.train.view(), 7, KnnVariant::Gamma).unwrap();
    assert_eq!(fitted.scorer.score(split.test.view()).unwrap(), plain.score(split.test.view()).unwrap());
}

/// Blobs embedded in ten dimensions by a fixed random linear map plus small
/// isotropic noise.
fn blobs_in_ten_dims() -> Dataset {
    let d = make_synthetic(SyntheticKind::Blobs, 600, 60, 1);
    let mut r = rng::seeded(42);
    let map = Mat::from_shape_fn((2, 10), |_| rng::normal(&mut r));
    let mut x = d.features.dot(&map);
    x.mapv_inplace(|v| v + 0.05 * rng::normal(&mut r));
    d.with_features(x)
}

#[test]
fn low_dimensional_encoder_keeps_blobs_separable() {
    let split = SplitData::prepare(&blobs_in_ten_dims(), 1).unwrap();
    let val = split.val_normals();
    let (encoder, _) = fit_autoencoder_config(&vae_config(2), split.train.view(), val.view(), None).unwrap();
    let before = encoder.flat_params();
    let fitted = two_stage_fit(&encoder, &knn(5), split.train.view(), None).unwrap();
    assert_eq!(encoder.flat_params(), before);
    let auc = roc_auc(&fitted.scorer.score(split.test.view()).unwrap(), &split.test_labels).unwrap();
    assert!(auc >= 0.85, "latent kNN AUC {auc}");
}
