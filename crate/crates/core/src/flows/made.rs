use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, Mat, Mlp};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ordering {
    /// Alternates the natural and the reversed order between layers.
    Natural,
    /// A fresh random permutation per layer.
    Random,
}

/// Autoregressive degree of every input (a permutation of `1..=dim`).
pub fn input_degrees(dim: usize, ordering: Ordering, layer: usize, seed: u64) -> Vec<usize> {
    match ordering {
        Ordering::Natural if layer % 2 == 0 => (1..=dim).collect(),
        Ordering::Natural => (1..=dim).rev().collect(),
        Ordering::Random => {
            let mut d: Vec<usize> = (1..=dim).collect();
            rng::shuffle(&mut rng::seeded(rng::derive_seed(seed, layer as u64)), &mut d);
            d
        }
    }
}

/// Connectivity masks (shaped like the weights, `in x out`) for a network
/// with the given hidden widths. Hidden units get cyclic degrees
/// `(k mod (dim - 1)) + 1`; a hidden unit sees inputs of degree at most its
/// own and an output sees hidden units of strictly smaller degree.
pub fn made_masks(degrees: &[usize], hidden: &[usize]) -> Result<Vec<Mat>> {
    let dim = degrees.len();
    if dim < 2 {
        return Err(Error::invalid("autoregressive masks need at least two dimensions"));
    }
    let mut prev = degrees.to_vec();
    let mut masks = Vec::with_capacity(hidden.len() + 1);
    for &h in hidden {
        let deg: Vec<usize> = (0..h).map(|k| k % (dim - 1) + 1).collect();
        masks.push(Array2::from_shape_fn((prev.len(), h), |(i, k)| f64::from(u8::from(deg[k] >= prev[i]))));
        prev = deg;
    }
    masks.push(Array2::from_shape_fn((prev.len(), dim), |(k, j)| {
        f64::from(u8::from(degrees[j] > prev[k]))
    }));
    Ok(masks)
}

/// Masked network mapping `dim` inputs to `dim` autoregressive outputs.
pub fn made_network(
    degrees: &[usize],
    hidden_dim: usize,
    n_layers: usize,
    activation: Activation,
    seed: u64,
) -> Result<Mlp> {
    let dim = degrees.len();
    let hidden = vec![hidden_dim; n_layers.max(1) - 1];
    let masks = made_masks(degrees, &hidden)?;
    let mut sizes = vec![dim];
    sizes.extend(&hidden);
    sizes.push(dim);
    let mut net = Mlp::new(&sizes, activation, Activation::Identity, seed);
    for (layer, mask) in net.layers.iter_mut().zip(masks) {
        layer.mask = Some(mask);
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Input-to-output connectivity: product of the masks.
    fn connectivity(masks: &[Mat]) -> Mat {
        let mut c = masks[0].clone();
        for m in &masks[1..] {
            c = c.dot(m);
        }
        c
    }

    #[test]
    fn natural_two_dims() {
        let masks = made_masks(&[1, 2], &[4]).unwrap();
        let c = connectivity(&masks);
        // output 1 depends on nothing, output 2 on input 1 only
        assert_eq!(c.column(0).sum(), 0.0);
        assert!(c[[0, 1]] > 0.0);
        assert_eq!(c[[1, 1]], 0.0);
    }

    #[test]
    fn strictly_triangular_under_ordering() {
        for ordering in [Ordering::Natural, Ordering::Random] {
            for layer in 0..3 {
                let deg = input_degrees(5, ordering, layer, 7);
                let c = connectivity(&made_masks(&deg, &[8, 8]).unwrap());
                for i in 0..5 {
                    for j in 0..5 {
                        if c[[i, j]] > 0.0 {
                            assert!(deg[i] < deg[j]);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn random_ordering_is_seeded() {
        assert_eq!(input_degrees(6, Ordering::Random, 1, 3), input_degrees(6, Ordering::Random, 1, 3));
        assert_eq!(input_degrees(3, Ordering::Natural, 1, 0), vec![3, 2, 1]);
        let mut d = input_degrees(6, Ordering::Random, 2, 3);
        d.sort_unstable();
        assert_eq!(d, (1..=6).collect::<Vec<_>>());
    }
}
