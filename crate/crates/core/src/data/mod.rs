//! Image datasets: synthetic shape rasters and IDX files.
//!
//! Pixels are stored flattened row-major in `[-1, 1]`, matching the range of
//! the generator's `tanh` output.

mod idx;
mod shapes;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use idx::{load_idx, read_idx_images, read_idx_labels, write_idx, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use shapes::{gen_shapes, write_manifest, ShapeConfig, ShapeKind};

use crate::autodiff::Matrix;
use crate::error::{CdganError, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Synthetic,
    IdxFile,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageBatch {
    /// `N × (height·width)`
    pub images: Matrix<f32>,
    pub labels: Option<Vec<usize>>,
    pub height: usize,
    pub width: usize,
    pub provenance: Provenance,
}

impl ImageBatch {
    pub fn len(&self) -> usize {
        self.images.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// Number of classes implied by the labels (max label + 1).
    pub fn classes(&self) -> Option<usize> {
        self.labels.as_ref().and_then(|l| l.iter().max().map(|m| m + 1))
    }

    pub fn select(&self, idx: &[usize]) -> ImageBatch {
        ImageBatch {
            images: self.images.select_rows(idx),
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
            height: self.height,
            width: self.width,
            provenance: self.provenance,
        }
    }

    /// Indices of each class, in dataset order.
    pub fn class_indices(&self) -> Result<Vec<Vec<usize>>> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| CdganError::contract("dataset has no labels"))?;
        let k = self.classes().unwrap_or(0);
        let mut by_class = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            by_class[l].push(i);
        }
        Ok(by_class)
    }
}

/// Stratified (when labeled) disjoint train/test split.
pub fn split(batch: &ImageBatch, test_fraction: f64, rng: &mut Rng) -> Result<(ImageBatch, ImageBatch)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CdganError::validation(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let groups = match batch.labels {
        Some(_) => batch.class_indices()?,
        None => vec![(0..batch.len()).collect()],
    };
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut g in groups {
        g.shuffle(rng);
        let n_test = (test_fraction * g.len() as f64).round() as usize;
        test.extend_from_slice(&g[..n_test]);
        train.extend_from_slice(&g[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((batch.select(&train), batch.select(&test)))
}
