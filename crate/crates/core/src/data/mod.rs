//! Dataset formats: splits, cross-validation folds, manifests, and loaders
//! for the TU multi-file text layout and node-classification bundles.

mod manifest;
mod tu;

pub use manifest::{load_graph_dataset, load_node_dataset, DatasetManifest, GraphDataset, NodeDataset, SplitSpec, DEFAULT_SPLIT_RATIOS};
pub use tu::{load_tudataset, TuDataset};

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Disjoint train/validation/test index lists.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn validate(&self, n_items: usize) -> Result<()> {
        let mut seen = BTreeSet::new();
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= n_items {
                return Err(Error::index(format!("split index {i} out of range for {n_items} items")));
            }
            if !seen.insert(i) {
                return Err(Error::index(format!("split index {i} appears twice")));
            }
        }
        Ok(())
    }

    /// Seeded random split by `ratios` (train, val, test; any positive scale).
    pub fn random(n_items: usize, ratios: [f64; 3], seed: u64) -> Result<Self> {
        let mut idx: Vec<usize> = (0..n_items).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (a, b) = split_counts(n_items, ratios)?;
        Ok(Self {
            train: idx[..a].to_vec(),
            val: idx[a..a + b].to_vec(),
            test: idx[a + b..].to_vec(),
        })
    }

    /// Like [`random`](Self::random) but applied per class, so every part
    /// keeps the class proportions. Index lists come out sorted.
    pub fn stratified(labels: &[usize], ratios: [f64; 3], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let classes = labels.iter().copied().max().map_or(0, |c| c + 1);
        let mut split = Split::default();
        for c in 0..classes {
            let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
            idx.shuffle(&mut rng);
            let (a, b) = split_counts(idx.len(), ratios)?;
            split.train.extend_from_slice(&idx[..a]);
            split.val.extend_from_slice(&idx[a..a + b]);
            split.test.extend_from_slice(&idx[a + b..]);
        }
        split.train.sort_unstable();
        split.val.sort_unstable();
        split.test.sort_unstable();
        Ok(split)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        serde_json::to_writer(BufWriter::new(File::create(path)?), self)?;
        Ok(())
    }
}

fn split_counts(n: usize, ratios: [f64; 3]) -> Result<(usize, usize)> {
    if ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) || ratios.iter().sum::<f64>() <= 0.0 {
        return Err(Error::config(format!("invalid split ratios {ratios:?}")));
    }
    let total: f64 = ratios.iter().sum();
    let train = ((n as f64) * ratios[0] / total).round() as usize;
    let val = (((n as f64) * ratios[1] / total).round() as usize).min(n - train.min(n));
    Ok((train.min(n), val))
}

/// One cross-validation fold: held-out `test` plus an inner train/val
/// holdout of the remaining items.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Fold {
    pub fn split(&self) -> Split {
        Split {
            train: self.train.clone(),
            val: self.val.clone(),
            test: self.test.clone(),
        }
    }
}

/// `k` seeded folds whose sizes differ by at most one; inside each fold the
/// non-test items are split 9:1 into train and validation.
pub fn kfold_splits(n_items: usize, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k == 0 || n_items < k {
        return Err(Error::config(format!("cannot make {k} folds from {n_items} items")));
    }
    let mut idx: Vec<usize> = (0..n_items).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = n_items / k;
    let extra = n_items % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let test: Vec<usize> = idx[start..start + len].to_vec();
        let rest: Vec<usize> = idx[..start].iter().chain(&idx[start + len..]).copied().collect();
        let n_val = ((rest.len() as f64) * 0.1).round() as usize;
        let n_val = if rest.len() >= 2 { n_val.max(1) } else { 0 };
        let (train, val) = rest.split_at(rest.len() - n_val);
        folds.push(Fold {
            train: train.to_vec(),
            val: val.to_vec(),
            test,
        });
        start += len;
    }
    Ok(folds)
}

/// Maps arbitrary label values onto `0..C` in ascending value order.
pub(crate) fn remap_labels<T: Ord + Clone>(raw: &[T]) -> (Vec<usize>, Vec<T>) {
    let values: Vec<T> = raw.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let labels = raw.iter().map(|v| values.binary_search(v).expect("value collected above")).collect();
    (labels, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton_folds() {
        let folds = kfold_splits(10, 10, 3).unwrap();
        assert!(folds.iter().all(|f| f.test.len() == 1 && f.train.len() + f.val.len() == 9 && f.val.len() == 1));
    }

    #[test]
    fn folds_partition_the_items() {
        let folds = kfold_splits(600, 10, 0).unwrap();
        assert!(folds.iter().all(|f| f.test.len() == 60));
        let mut all: Vec<usize> = folds.iter().flat_map(|f| f.test.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..600).collect::<Vec<_>>());
        for f in &folds {
            f.split().validate(600).unwrap();
            assert_eq!(f.val.len(), 54);
        }
        let uneven = kfold_splits(23, 10, 1).unwrap();
        let sizes: Vec<usize> = uneven.iter().map(|f| f.test.len()).collect();
        assert_eq!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap(), 1);
        assert!(kfold_splits(3, 10, 0).is_err());
    }

    #[test]
    fn stratified_split_keeps_proportions() {
        let labels: Vec<usize> = (0..8000).map(|i| i % 4).collect();
        let split = Split::stratified(&labels, [8.0, 1.0, 1.0], 0).unwrap();
        assert_eq!((split.train.len(), split.val.len(), split.test.len()), (6400, 800, 800));
        for c in 0..4 {
            assert_eq!(split.test.iter().filter(|&&i| labels[i] == c).count(), 200);
        }
        split.validate(8000).unwrap();
    }

    #[test]
    fn overlapping_split_is_rejected() {
        let split = Split {
            train: vec![0, 1],
            val: vec![1],
            test: vec![],
        };
        assert!(matches!(split.validate(3), Err(Error::Index(_))));
    }

    #[test]
    fn labels_are_remapped_densely() {
        let (labels, values) = remap_labels(&[-1, 5, 5, 2]);
        assert_eq!(labels, vec![0, 2, 2, 1]);
        assert_eq!(values, vec![-1, 2, 5]);
    }
}
