use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::probe::{HiddenStateBundle, HiddenStateMatrix, LayerTag, TokenTag, PRIMARY_CELL};
use crate::rng;

/// Strength of the correctness direction in each cell, relative to the
/// primary cell. Deeper layers and the answer token carry more.
fn cell_weight(layer: LayerTag, token: TokenTag) -> f64 {
    if (layer, token) == PRIMARY_CELL {
        return 1.0;
    }
    let l = match layer {
        LayerTag::First => 0.1,
        LayerTag::Middle => 0.6,
        LayerTag::Last => 1.0,
    };
    let t = match token {
        TokenTag::PreAnswer => 0.7,
        TokenTag::LastAnswer => 1.0,
    };
    l * t
}

/// Gaussian hidden states where column 0 is shifted by `±signal/2` times
/// the cell weight according to `labels`. Rows depend only on the seed,
/// the item id and the cell.
pub fn simulate_hidden_states(
    ids: &[&str],
    labels: &[bool],
    dim: usize,
    signal: f64,
    seed: u64,
) -> Result<HiddenStateBundle> {
    if ids.len() != labels.len() {
        return Err(Error::Invalid(format!("{} ids but {} labels", ids.len(), labels.len())));
    }
    if dim == 0 {
        return Err(Error::Invalid("hidden-state dimension must be positive".into()));
    }
    let mut matrices = Vec::new();
    for (ci, layer) in LayerTag::ALL.into_iter().enumerate() {
        for (ti, token) in TokenTag::ALL.into_iter().enumerate() {
            let shift = signal * cell_weight(layer, token) / 2.0;
            let mut x = Array2::<f64>::zeros((ids.len(), dim));
            for (r, (id, &y)) in ids.iter().zip(labels).enumerate() {
                let mut g = rng::substream(seed ^ rng::key_of(id), (ci * 2 + ti) as u64);
                for c in 0..dim {
                    x[[r, c]] = StandardNormal.sample(&mut g);
                }
                x[[r, 0]] += if y { shift } else { -shift };
            }
            let ids = ids.iter().map(|s| (*s).to_owned()).collect();
            matrices.push(HiddenStateMatrix::new(ids, x, layer, token)?);
        }
    }
    HiddenStateBundle::from_matrices(matrices)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primary_cell_separates_labels() {
        let ids: Vec<String> = (0..400).map(|i| format!("s{i}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let labels: Vec<bool> = (0..400).map(|i| i % 2 == 0).collect();
        let b = simulate_hidden_states(&refs, &labels, 4, 3.0, 1).unwrap();
        let m = b.get(PRIMARY_CELL).unwrap();
        let mean = |want: bool| {
            let xs: Vec<f64> = labels.iter().enumerate().filter(|(_, &l)| l == want).map(|(r, _)| m.features[[r, 0]]).collect();
            xs.iter().sum::<f64>() / xs.len() as f64
        };
        assert!(mean(true) - mean(false) > 2.5);
        assert_eq!(b.cells().count(), 6);
    }

    #[test]
    fn rows_are_stable_under_reordering() {
        let a = simulate_hidden_states(&["x", "y"], &[true, false], 3, 1.0, 7).unwrap();
        let b = simulate_hidden_states(&["y", "x"], &[false, true], 3, 1.0, 7).unwrap();
        let (ma, mb) = (a.get(PRIMARY_CELL).unwrap(), b.get(PRIMARY_CELL).unwrap());
        assert_eq!(ma.features.row(0), mb.features.row(1));
    }
}
