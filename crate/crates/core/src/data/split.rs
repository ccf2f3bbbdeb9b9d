use serde::{Deserialize, Serialize};

use super::{Dataset, ANOMALY, NORMAL};
use crate::error::{Error, Result};
use crate::rng;

/// Train/validation/test index sets of one repetition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSplit {
    pub seed: u64,
    /// Normal samples only.
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

/// Splits normals 60/20/20 and anomalies 50/50 between validation and test.
///
/// Train and validation sizes are floored; the remainder goes to test.
pub fn split_tabular(d: &Dataset, seed: u64) -> Result<DataSplit> {
    let labels = d
        .labels
        .as_ref()
        .ok_or_else(|| Error::invalid("split_tabular needs labels"))?;
    let mut normals: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == NORMAL).collect();
    let mut anomalies: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == ANOMALY).collect();
    if normals.len() < 5 || anomalies.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{}: need at least 5 normals and 2 anomalies, have {} and {}",
            d.name,
            normals.len(),
            anomalies.len()
        )));
    }
    let mut rng = rng::seeded(seed);
    rng::shuffle(&mut rng, &mut normals);
    rng::shuffle(&mut rng, &mut anomalies);

    let n_train = normals.len() * 6 / 10;
    let n_val = normals.len() * 2 / 10;
    let a_val = anomalies.len() / 2;

    let mut train_idx = normals[..n_train].to_vec();
    let mut val_idx: Vec<usize> = normals[n_train..n_train + n_val]
        .iter()
        .chain(&anomalies[..a_val])
        .copied()
        .collect();
    let mut test_idx: Vec<usize> = normals[n_train + n_val..]
        .iter()
        .chain(&anomalies[a_val..])
        .copied()
        .collect();
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok(DataSplit {
        seed,
        train_idx,
        val_idx,
        test_idx,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassSplitMode {
    /// The given class is the only normal class.
    LeaveOneIn,
    /// The given class is the only anomalous class.
    LeaveOneOut,
}

/// Turns a multi-class dataset into a binary anomaly problem.
pub fn class_split(d: &Dataset, class: &str, mode: ClassSplitMode) -> Result<Dataset> {
    let ids = d
        .class_ids
        .as_ref()
        .ok_or_else(|| Error::invalid("class_split needs class ids"))?;
    let target = d
        .class_names
        .iter()
        .position(|c| c == class)
        .ok_or_else(|| Error::UnknownClass(class.to_string()))?;
    let labels = ids
        .iter()
        .map(|&id| {
            let is_target = id == target;
            match (mode, is_target) {
                (ClassSplitMode::LeaveOneOut, true) | (ClassSplitMode::LeaveOneIn, false) => ANOMALY,
                _ => NORMAL,
            }
        })
        .collect();
    let suffix = match mode {
        ClassSplitMode::LeaveOneIn => "in",
        ClassSplitMode::LeaveOneOut => "out",
    };
    Ok(Dataset {
        name: format!("{}:{}-{}", d.name, class, suffix),
        labels: Some(labels),
        ..d.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn labelled(normals: usize, anomalies: usize) -> Dataset {
        let n = normals + anomalies;
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        let mut labels = vec![NORMAL; normals];
        labels.extend(vec![ANOMALY; anomalies]);
        Dataset::new("t", x, labels)
    }

    fn classes(names: &[&str]) -> Dataset {
        let mut cn: Vec<String> = Vec::new();
        let ids = names
            .iter()
            .map(|n| match cn.iter().position(|c| c == n) {
                Some(i) => i,
                None => {
                    cn.push(n.to_string());
                    cn.len() - 1
                }
            })
            .collect();
        Dataset {
            name: "c".into(),
            features: Array2::zeros((names.len(), 1)),
            labels: None,
            class_ids: Some(ids),
            class_names: cn,
            dropped_rows: 0,
        }
    }

    #[test]
    fn ratio_arithmetic() {
        let d = labelled(10, 4);
        let s = split_tabular(&d, 1).unwrap();
        assert_eq!(s.train_idx.len(), 6);
        assert!(s.train_idx.iter().all(|&i| i < 10));
        let count = |idx: &[usize]| idx.iter().filter(|&&i| i >= 10).count();
        assert_eq!((s.val_idx.len(), count(&s.val_idx)), (4, 2));
        assert_eq!((s.test_idx.len(), count(&s.test_idx)), (4, 2));
    }

    #[test]
    fn deterministic() {
        let d = labelled(10, 4);
        assert_eq!(split_tabular(&d, 1).unwrap(), split_tabular(&d, 1).unwrap());
    }

    #[test]
    fn seeds_vary_validation_anomalies() {
        // Enumerated under xoshiro256++: five distinct validation sets whose
        // anomaly parts jointly cover all four anomalies.
        let d = labelled(10, 4);
        let vals: Vec<Vec<usize>> = (1..=5).map(|s| split_tabular(&d, s).unwrap().val_idx).collect();
        let distinct: BTreeSet<_> = vals.iter().cloned().collect();
        assert_eq!(distinct.len(), 5);
        let covered: BTreeSet<usize> = vals.iter().flatten().copied().filter(|&i| i >= 10).collect();
        assert_eq!(covered, (10..14).collect());
        let total: usize = vals.iter().map(|v| v.iter().filter(|&&i| i >= 10).count()).sum();
        assert!(total > covered.len());
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            split_tabular(&labelled(4, 4), 0),
            Err(Error::InsufficientData(_))
        ));
        assert!(matches!(
            split_tabular(&labelled(10, 1), 0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn leave_one_out_relabels() {
        let d = classes(&["a", "a", "a", "a", "a", "b", "b", "b", "b", "b"]);
        let s = class_split(&d, "b", ClassSplitMode::LeaveOneOut).unwrap();
        assert_eq!(s.n_normals(), 5);
        assert_eq!(s.n_anomalies(), 5);
    }

    #[test]
    fn leave_one_in_complement() {
        let d = classes(&["a", "b", "c"]);
        let s = class_split(&d, "a", ClassSplitMode::LeaveOneIn).unwrap();
        assert_eq!(s.labels.unwrap(), vec![0, 1, 1]);
    }

    #[test]
    fn leave_one_out_counts() {
        let names = ["a", "b", "b", "c", "c", "c", "a", "c"];
        let d = classes(&names);
        for class in ["a", "b", "c"] {
            let n_class = names.iter().filter(|&&n| n == class).count();
            let s = class_split(&d, class, ClassSplitMode::LeaveOneOut).unwrap();
            assert_eq!(s.n_normals(), names.len() - n_class);
        }
    }

    #[test]
    fn unknown_class() {
        let d = classes(&["a", "b"]);
        assert!(matches!(
            class_split(&d, "z", ClassSplitMode::LeaveOneOut),
            Err(Error::UnknownClass(_))
        ));
    }

    proptest! {
        #[test]
        fn split_invariants(normals in 5usize..80, anomalies in 2usize..30, seed in any::<u64>()) {
            let d = labelled(normals, anomalies);
            let s = split_tabular(&d, seed).unwrap();
            let mut all: Vec<usize> = s.train_idx.iter().chain(&s.val_idx).chain(&s.test_idx).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..normals + anomalies).collect::<Vec<_>>());
            prop_assert!(s.train_idx.iter().all(|&i| i < normals));
            let train = s.train_idx.len() as f64;
            prop_assert!((train - 0.6 * normals as f64).abs() <= 1.0);
            let val_norm = s.val_idx.iter().filter(|&&i| i < normals).count() as f64;
            prop_assert!((val_norm - 0.2 * normals as f64).abs() <= 1.0);
            let val_anom = s.val_idx.iter().filter(|&&i| i >= normals).count() as f64;
            prop_assert!((val_anom - 0.5 * anomalies as f64).abs() <= 1.0);
        }

        #[test]
        fn leave_one_in_is_complement_of_leave_one_out(ids in prop::collection::vec(0usize..4, 1..40)) {
            let names: Vec<String> = ids.iter().map(|i| format!("k{i}")).collect();
            let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
            let d = classes(&refs);
            let class = refs[0];
            let lin = class_split(&d, class, ClassSplitMode::LeaveOneIn).unwrap().labels.unwrap();
            let lout = class_split(&d, class, ClassSplitMode::LeaveOneOut).unwrap().labels.unwrap();
            // normals of leave-one-in are exactly the anomalies of leave-one-out
            for (a, b) in lin.iter().zip(&lout) {
                prop_assert_eq!(*a == NORMAL, *b == ANOMALY);
            }
        }
    }
}
