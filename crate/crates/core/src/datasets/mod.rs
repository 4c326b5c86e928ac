//! Labeled datasets: the Yin-Yang generator, MNIST IDX ingestion and the
//! decision-boundary grid.

mod idx;
mod mnist;
mod yinyang;

pub use idx::{decode_idx_images, decode_idx_labels, encode_idx_images, encode_idx_labels, IdxImages};
pub use mnist::{
    default_cache_root, fetch_mnist, load_mnist, load_or_fetch_mnist, mnist_dir, MnistFile,
    DATA_DIR_ENV, MNIST_FILES, MNIST_URL_ENV, DEFAULT_MNIST_URL, FETCH_ATTEMPTS,
};
pub use yinyang::{generate_yinyang, yinyang_class, YinYangRegion, YANG, YIN};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::RealMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    /// n_samples × n_features.
    pub inputs: RealMatrix,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub name: String,
    pub seed: u64,
}

impl LabeledDataset {
    pub fn new(
        inputs: RealMatrix,
        labels: Vec<usize>,
        n_classes: usize,
        name: impl Into<String>,
        seed: u64,
    ) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::shape(
                "LabeledDataset::new",
                format!("{} input rows but {} labels", inputs.rows(), labels.len()),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} outside [0, {n_classes})"
            )));
        }
        Ok(LabeledDataset {
            inputs,
            labels,
            n_classes,
            name: name.into(),
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.inputs.cols()
    }

    /// The first `n` samples.
    pub fn head(&self, n: usize) -> Result<LabeledDataset> {
        if n == 0 || n > self.len() {
            return Err(Error::InvalidArgument(format!(
                "requested {n} samples from a dataset of {}",
                self.len()
            )));
        }
        Ok(LabeledDataset {
            inputs: self.inputs.row_range(0, n),
            labels: self.labels[..n].to_vec(),
            n_classes: self.n_classes,
            name: self.name.clone(),
            seed: self.seed,
        })
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// `resolution²` points tiling `[0,1]²`; row `i·resolution + j` is
/// `(x_j, y_i)` with spacing `1 / (resolution − 1)`.
pub fn decision_grid(resolution: usize) -> Result<RealMatrix> {
    if resolution < 2 {
        return Err(Error::InvalidArgument(format!(
            "grid resolution must be at least 2, got {resolution}"
        )));
    }
    let step = 1.0 / (resolution - 1) as f64;
    let mut data = Vec::with_capacity(2 * resolution * resolution);
    for i in 0..resolution {
        for j in 0..resolution {
            data.push(j as f64 * step);
            data.push(i as f64 * step);
        }
    }
    RealMatrix::from_vec(resolution * resolution, 2, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_corners_and_spacing() {
        let g = decision_grid(2).unwrap();
        assert_eq!(g.as_slice(), &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let g = decision_grid(3).unwrap();
        assert_eq!(g.rows(), 9);
        assert_eq!(g.row(1), &[0.5, 0.0]);
        assert_eq!(g.row(5), &[1.0, 0.5]);
        assert_eq!(decision_grid(500).unwrap().rows(), 250_000);
        assert!(decision_grid(1).is_err());
    }

    #[test]
    fn dataset_rejects_bad_labels() {
        let x = RealMatrix::zeros(2, 1);
        assert!(LabeledDataset::new(x.clone(), vec![0, 2], 2, "t", 0).is_err());
        assert!(LabeledDataset::new(x.clone(), vec![0], 2, "t", 0).is_err());
        let d = LabeledDataset::new(x, vec![0, 1], 2, "t", 0).unwrap();
        assert_eq!(d.class_counts(), vec![1, 1]);
        assert!(d.head(3).is_err());
    }
}
