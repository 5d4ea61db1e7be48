use crate::numkit::{cosine_similarity, Matrix};
use crate::{Error, Result};

/// One feature vector per class, plus whether any sample has contributed to it.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidSet {
    pub vectors: Matrix,
    pub presence: Vec<bool>,
}

impl CentroidSet {
    pub fn empty(classes: usize, dim: usize) -> Self {
        CentroidSet {
            vectors: Matrix::zeros(classes, dim),
            presence: vec![false; classes],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let vectors = Matrix::from_rows(rows)?;
        Ok(CentroidSet {
            presence: vec![true; vectors.rows()],
            vectors,
        })
    }

    pub fn classes(&self) -> usize {
        self.vectors.rows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn get(&self, class: usize) -> &[f64] {
        self.vectors.row(class)
    }

    pub fn is_present(&self, class: usize) -> bool {
        self.presence[class]
    }

    pub fn any_present(&self) -> bool {
        self.presence.iter().any(|&p| p)
    }

    pub fn is_finite(&self) -> bool {
        self.vectors.is_finite()
    }

    fn check_compatible(&self, other: &CentroidSet) -> Result<()> {
        if self.vectors.shape() != other.vectors.shape() {
            return Err(Error::contract(format!(
                "centroid sets of shape {:?} and {:?}",
                self.vectors.shape(),
                other.vectors.shape()
            )));
        }
        Ok(())
    }
}

/// Per-class mean of the `selected` feature rows, grouped by their given label.
/// Classes with no selected sample are absent with a zero vector.
pub fn class_mean_features(
    features: &Matrix,
    labels: &[usize],
    selected: &[usize],
    classes: usize,
) -> Result<(CentroidSet, Vec<usize>)> {
    if labels.len() != features.rows() {
        return Err(Error::contract("one label per feature row required"));
    }
    let mut out = CentroidSet::empty(classes, features.cols());
    let mut counts = vec![0usize; classes];
    for &i in selected {
        let y = *labels
            .get(i)
            .ok_or_else(|| Error::contract(format!("selected index {i} outside batch")))?;
        if y >= classes {
            return Err(Error::Data(format!("label {y} >= {classes}")));
        }
        counts[y] += 1;
        for (acc, &f) in out.vectors.row_mut(y).iter_mut().zip(features.row(i)) {
            *acc += f;
        }
    }
    for (c, &n) in counts.iter().enumerate() {
        if n > 0 {
            out.presence[c] = true;
            let inv = 1.0 / n as f64;
            out.vectors.row_mut(c).iter_mut().for_each(|v| *v *= inv);
        }
    }
    Ok((out, counts))
}

/// Similarity-weighted blend: `out = (1 − s²)·prev + s²·fresh` with
/// `s = cos(prev, fresh)`, per class.
///
/// A class missing from `fresh` keeps `prev`; a class missing from `prev`
/// takes `fresh` as is.
pub fn blend_with_global(prev: &CentroidSet, fresh: &CentroidSet) -> Result<CentroidSet> {
    prev.check_compatible(fresh)?;
    let mut out = prev.clone();
    for c in 0..prev.classes() {
        if !fresh.is_present(c) {
            continue;
        }
        if !prev.is_present(c) {
            out.vectors.row_mut(c).copy_from_slice(fresh.get(c));
            out.presence[c] = true;
            continue;
        }
        let s = cosine_similarity(prev.get(c), fresh.get(c))?;
        let w = s * s;
        for ((o, &p), &f) in out
            .vectors
            .row_mut(c)
            .iter_mut()
            .zip(prev.get(c))
            .zip(fresh.get(c))
        {
            *o = (1.0 - w) * p + w * f;
        }
    }
    Ok(out)
}

/// Overwrite each class present in `fresh`; used when centroids are kept
/// purely local.
pub fn replace_present(prev: &CentroidSet, fresh: &CentroidSet) -> Result<CentroidSet> {
    prev.check_compatible(fresh)?;
    let mut out = prev.clone();
    for c in (0..prev.classes()).filter(|&c| fresh.is_present(c)) {
        out.vectors.row_mut(c).copy_from_slice(fresh.get(c));
        out.presence[c] = true;
    }
    Ok(out)
}

/// For every feature row, the present class whose centroid is most
/// cosine-similar. Ties go to the lowest class index.
pub fn similarity_labels(features: &Matrix, centroids: &CentroidSet) -> Result<Vec<usize>> {
    if !centroids.any_present() {
        return Err(Error::contract(
            "similarity labels need at least one present centroid",
        ));
    }
    if features.cols() != centroids.dim() {
        return Err(Error::contract(format!(
            "feature width {} vs centroid width {}",
            features.cols(),
            centroids.dim()
        )));
    }
    features
        .row_iter()
        .map(|f| {
            let mut best = None::<(usize, f64)>;
            for c in (0..centroids.classes()).filter(|&c| centroids.is_present(c)) {
                let s = cosine_similarity(centroids.get(c), f)?;
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((c, s));
                }
            }
            Ok(best.expect("at least one present class").0)
        })
        .collect()
}

pub fn confident_mask(similarity: &[usize], given: &[usize]) -> Result<Vec<bool>> {
    if similarity.len() != given.len() {
        return Err(Error::contract("mask inputs differ in length"));
    }
    Ok(similarity.iter().zip(given).map(|(a, b)| a == b).collect())
}
