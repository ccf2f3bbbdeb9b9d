use std::f64::consts::PI;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Dataset, ANOMALY, NORMAL};
use crate::error::Error;
use crate::rng::{self, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    Blobs,
    TwoMoons,
    Ring,
}

impl SyntheticKind {
    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::Blobs => "blobs",
            SyntheticKind::TwoMoons => "two_moons",
            SyntheticKind::Ring => "ring",
        }
    }

    pub const ALL: [SyntheticKind; 3] = [SyntheticKind::Blobs, SyntheticKind::TwoMoons, SyntheticKind::Ring];
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "blobs" => Ok(SyntheticKind::Blobs),
            "two_moons" | "moons" => Ok(SyntheticKind::TwoMoons),
            "ring" => Ok(SyntheticKind::Ring),
            other => Err(Error::invalid(format!("unknown synthetic dataset {other:?}"))),
        }
    }
}

const BLOB_CENTERS: [[f64; 2]; 3] = [[-2.0, -2.0], [2.0, -1.0], [0.0, 2.5]];
const BLOB_STD: f64 = 0.5;
const MOON_NOISE: f64 = 0.08;
const RING_RADIUS: f64 = 2.0;
const RING_NOISE: f64 = 0.15;
/// Anomaly box margin as a fraction of each coordinate's normal range.
const BOX_MARGIN: f64 = 0.25;

fn normal_point(kind: SyntheticKind, i: usize, rng: &mut Rng) -> [f64; 2] {
    match kind {
        SyntheticKind::Blobs => {
            let c = BLOB_CENTERS[rng::index(rng, BLOB_CENTERS.len())];
            [
                c[0] + BLOB_STD * rng::normal(rng),
                c[1] + BLOB_STD * rng::normal(rng),
            ]
        }
        SyntheticKind::TwoMoons => {
            let t = rng::uniform(rng, 0.0, PI);
            let (x, y) = if i % 2 == 0 {
                (t.cos(), t.sin())
            } else {
                (1.0 - t.cos(), 0.5 - t.sin())
            };
            [
                x + MOON_NOISE * rng::normal(rng),
                y + MOON_NOISE * rng::normal(rng),
            ]
        }
        SyntheticKind::Ring => {
            let t = rng::uniform(rng, 0.0, 2.0 * PI);
            let r = RING_RADIUS + RING_NOISE * rng::normal(rng);
            [r * t.cos(), r * t.sin()]
        }
    }
}

/// Two-dimensional toy data: normals from the named generator, anomalies
/// uniform over the normals' bounding box widened by a margin. Normals come
/// first in row order.
pub fn make_synthetic(kind: SyntheticKind, n_normal: usize, n_anomaly: usize, seed: u64) -> Dataset {
    assert!(n_normal >= 1 && n_anomaly >= 1, "counts must be positive");
    let mut rng = rng::seeded(seed);
    let mut x = Array2::zeros((n_normal + n_anomaly, 2));
    for i in 0..n_normal {
        let p = normal_point(kind, i, &mut rng);
        x[[i, 0]] = p[0];
        x[[i, 1]] = p[1];
    }
    for j in 0..2 {
        let col = x.column(j);
        let (lo, hi) = col
            .iter()
            .take(n_normal)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let margin = BOX_MARGIN * (hi - lo).max(1e-9);
        for i in n_normal..n_normal + n_anomaly {
            x[[i, j]] = rng::uniform(&mut rng, lo - margin, hi + margin);
        }
    }
    let mut labels = vec![NORMAL; n_normal];
    labels.extend(std::iter::repeat_n(ANOMALY, n_anomaly));
    Dataset::new(kind.name(), x, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape() {
        let d = make_synthetic(SyntheticKind::Blobs, 100, 10, 7);
        assert_eq!(d.n_samples(), 110);
        assert_eq!(d.n_dims(), 2);
        assert_eq!(d.n_anomalies(), 10);
    }

    #[test]
    fn bitwise_deterministic() {
        for kind in SyntheticKind::ALL {
            let a = make_synthetic(kind, 50, 5, 3);
            let b = make_synthetic(kind, 50, 5, 3);
            let bits = |d: &Dataset| d.features.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a), bits(&b));
        }
    }

    #[test]
    fn parses_names() {
        assert_eq!("ring".parse::<SyntheticKind>().unwrap(), SyntheticKind::Ring);
        assert!("cube".parse::<SyntheticKind>().is_err());
    }
}
