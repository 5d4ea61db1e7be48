//! Datasets and client partitioning.

mod blobs;
mod idx;
mod partition;

pub use blobs::{make_blobs, BlobGenerator, MIN_SEPARATION_IN_SPREADS};
pub use idx::{
    idx_to_dataset, load_idx, parse_idx_images, parse_idx_labels, write_idx_images,
    write_idx_labels, IdxImages, IMAGES_MAGIC, LABELS_MAGIC,
};
pub use partition::partition_iid;

use crate::localnode::CentroidSet;
use crate::numkit::Matrix;
use crate::{Error, Result};

/// Feature rows with clean and observed labels.
///
/// `true_labels` exist only for metrics; training reads `given_labels`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub true_labels: Vec<usize>,
    pub given_labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(x: Matrix, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if x.rows() != labels.len() {
            return Err(Error::Data(format!(
                "{} feature rows but {} labels",
                x.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::Data(format!("label {bad} >= class count {classes}")));
        }
        Ok(Dataset {
            x,
            given_labels: labels.clone(),
            true_labels: labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    /// Replace the observed labels, e.g. after corruption.
    pub fn set_given_labels(&mut self, given: Vec<usize>) -> Result<()> {
        if given.len() != self.len() || given.iter().any(|&y| y >= self.classes) {
            return Err(Error::Data("given labels do not fit the dataset".into()));
        }
        self.given_labels = given;
        Ok(())
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            true_labels: idx.iter().map(|&i| self.true_labels[i]).collect(),
            given_labels: idx.iter().map(|&i| self.given_labels[i]).collect(),
            classes: self.classes,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.classes];
        for &y in &self.true_labels {
            c[y] += 1;
        }
        c
    }
}

/// One client's slice of the training set plus its per-client state.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientShard {
    pub client_id: usize,
    /// Row indices into the parent dataset.
    pub indices: Vec<usize>,
    /// Soft targets from the last broadcast global model.
    pub pseudo_labels: Option<Matrix>,
    /// Confident-sample mask from the last local epoch, aligned with `indices`.
    pub confident_mask: Vec<bool>,
    pub local_centroids: Option<CentroidSet>,
}

impl ClientShard {
    pub fn new(client_id: usize, indices: Vec<usize>) -> Self {
        ClientShard {
            client_id,
            indices,
            pseudo_labels: None,
            confident_mask: Vec::new(),
            local_centroids: None,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}
