use super::CentroidSet;
use crate::numkit::{ForwardRecord, Matrix};
use crate::{Error, Result};

/// Trade-off weights for one step of the composite loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_cen: f64,
    pub lambda_e: f64,
}

/// Per-term values of the batch-mean loss.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub classification: f64,
    pub centroid: f64,
    pub entropy: f64,
    pub total: f64,
}

/// Loss terms and their partials with respect to logits and hidden features.
#[derive(Debug, Clone)]
pub struct LossGrads {
    pub loss: LossBreakdown,
    pub d_logits: Matrix,
    pub d_hidden: Matrix,
}

/// Batch inputs of the composite loss beyond the forward pass itself.
#[derive(Debug, Clone, Copy)]
pub struct LossBatch<'a> {
    pub given: &'a [usize],
    /// Soft targets for unconfident samples, one row per example.
    pub pseudo: &'a Matrix,
    pub mask: &'a [bool],
    pub centroids: &'a CentroidSet,
}

/// Composite batch-mean loss `L_c + λ_cen·L_cen + λ_e·L_e`:
///
/// - `L_c`: cross-entropy against the given label for confident samples and
///   against the pseudo-label row otherwise. Without `use_pseudo` every
///   sample uses its given label.
/// - `L_cen`: squared distance from each confident sample's features to the
///   centroid of its given class, for classes with a centroid. Centroids are
///   constants here.
/// - `L_e`: prediction entropy over all samples.
pub fn total_loss_and_grads(
    rec: &ForwardRecord,
    batch: LossBatch<'_>,
    weights: LossWeights,
    use_pseudo: bool,
) -> Result<LossGrads> {
    let (b, classes) = rec.probs.shape();
    let dh = rec.hidden.cols();
    if batch.given.len() != b || batch.mask.len() != b {
        return Err(Error::contract("labels and mask must match the batch size"));
    }
    if use_pseudo && batch.pseudo.shape() != (b, classes) {
        return Err(Error::contract(format!(
            "pseudo-label shape {:?}, expected {:?}",
            batch.pseudo.shape(),
            (b, classes)
        )));
    }
    if weights.lambda_cen != 0.0
        && (batch.centroids.dim() != dh || batch.centroids.classes() != classes)
    {
        return Err(Error::contract("centroid set does not match model shape"));
    }
    if b == 0 {
        return Err(Error::contract("empty batch"));
    }
    let bf = b as f64;

    let mut d_logits = Matrix::zeros(b, classes);
    let mut d_hidden = Matrix::zeros(b, dh);
    let mut ce_sum = 0.0;
    let mut cen_sum = 0.0;
    let mut ent_sum = 0.0;

    for i in 0..b {
        let y = batch.given[i];
        if y >= classes {
            return Err(Error::Data(format!("label {y} >= {classes}")));
        }
        let p = rec.probs.row(i);
        let logp = rec.log_probs.row(i);
        let confident = batch.mask[i];
        let g = d_logits.row_mut(i);

        if confident || !use_pseudo {
            ce_sum -= logp[y];
            for (c, (gc, &pc)) in g.iter_mut().zip(p).enumerate() {
                let t = if c == y { 1.0 } else { 0.0 };
                *gc = (pc - t) / bf;
            }
        } else {
            let q = batch.pseudo.row(i);
            let mut ce = 0.0;
            for ((gc, &pc), (&qc, &lpc)) in g.iter_mut().zip(p).zip(q.iter().zip(logp)) {
                ce -= qc * lpc;
                *gc = (pc - qc) / bf;
            }
            ce_sum += ce;
        }

        if weights.lambda_e != 0.0 {
            // ∂H/∂z_j = −p_j (log p_j + H)
            let h: f64 = -p.iter().zip(logp).map(|(&pc, &lpc)| pc * lpc).sum::<f64>();
            ent_sum += h;
            for (gc, (&pc, &lpc)) in g.iter_mut().zip(p.iter().zip(logp)) {
                *gc += weights.lambda_e * (-pc * (lpc + h)) / bf;
            }
        }

        if weights.lambda_cen != 0.0 && confident && batch.centroids.is_present(y) {
            let target = batch.centroids.get(y);
            let mut dist = 0.0;
            for ((gh, &hv), &fv) in d_hidden
                .row_mut(i)
                .iter_mut()
                .zip(rec.hidden.row(i))
                .zip(target)
            {
                let diff = hv - fv;
                dist += diff * diff;
                *gh = weights.lambda_cen * 2.0 * diff / bf;
            }
            cen_sum += dist;
        }
    }

    let loss = LossBreakdown {
        classification: ce_sum / bf,
        centroid: cen_sum / bf,
        entropy: ent_sum / bf,
        total: (ce_sum + weights.lambda_cen * cen_sum + weights.lambda_e * ent_sum) / bf,
    };
    for (name, v) in [
        ("classification", loss.classification),
        ("centroid", loss.centroid),
        ("entropy", loss.entropy),
    ] {
        if !v.is_finite() {
            return Err(Error::Diverged(format!("{name} loss is {v}")));
        }
    }
    Ok(LossGrads {
        loss,
        d_logits,
        d_hidden,
    })
}

/// Per-example cross-entropy against the given labels.
pub fn per_example_ce(rec: &ForwardRecord, given: &[usize]) -> Vec<f64> {
    given
        .iter()
        .enumerate()
        .map(|(i, &y)| -rec.log_probs.get(i, y))
        .collect()
}

/// One-hot rows for `labels`.
pub fn one_hot(labels: &[usize], classes: usize) -> Matrix {
    let mut m = Matrix::zeros(labels.len(), classes);
    for (i, &y) in labels.iter().enumerate() {
        m.set(i, y, 1.0);
    }
    m
}
