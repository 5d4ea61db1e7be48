use rand::seq::SliceRandom;

use super::centroids::{
    blend_with_global, class_mean_features, confident_mask, replace_present, similarity_labels,
    CentroidSet,
};
use super::loss::{one_hot, per_example_ce, total_loss_and_grads, LossBatch, LossWeights};
use super::selection::small_loss_filter;
use super::{HyperParams, Method};
use crate::datagen::{ClientShard, Dataset};
use crate::numkit::{mlp_backward, mlp_forward, sgd_step, Matrix, ModelParams};
use crate::rng::{self, Purpose};
use crate::{Error, Result};

/// Mask quality against the hidden true labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MaskCounts {
    pub samples: usize,
    pub confident: usize,
    /// Samples flagged as noisy (mask 0).
    pub detected: usize,
    /// Flagged samples whose given label really is wrong.
    pub detected_and_noisy: usize,
    /// Samples whose given label is wrong.
    pub noisy: usize,
}

impl MaskCounts {
    pub fn add(&mut self, other: &MaskCounts) {
        self.samples += other.samples;
        self.confident += other.confident;
        self.detected += other.detected;
        self.detected_and_noisy += other.detected_and_noisy;
        self.noisy += other.noisy;
    }

    pub fn record(&mut self, confident: bool, noisy: bool) {
        self.samples += 1;
        self.confident += usize::from(confident);
        self.detected += usize::from(!confident);
        self.detected_and_noisy += usize::from(!confident && noisy);
        self.noisy += usize::from(noisy);
    }

    /// Fraction of flagged samples that are noisy; 1 when nothing was flagged.
    pub fn precision(&self) -> f64 {
        if self.detected == 0 {
            1.0
        } else {
            self.detected_and_noisy as f64 / self.detected as f64
        }
    }

    /// Fraction of noisy samples that were flagged; 1 when there is no noise.
    pub fn recall(&self) -> f64 {
        if self.noisy == 0 {
            1.0
        } else {
            self.detected_and_noisy as f64 / self.noisy as f64
        }
    }

    pub fn confident_fraction(&self) -> f64 {
        if self.samples == 0 {
            1.0
        } else {
            self.confident as f64 / self.samples as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LocalStats {
    /// Mean composite loss over every step of the update.
    pub mean_loss: f64,
    /// Mask counts from the final local epoch.
    pub mask: MaskCounts,
}

impl LocalStats {
    pub fn confident_fraction(&self) -> f64 {
        self.mask.confident_fraction()
    }
}

#[derive(Debug, Clone)]
pub struct LocalUpdateResult {
    pub client_id: usize,
    pub params: ModelParams,
    pub centroids: CentroidSet,
    pub stats: LocalStats,
}

/// What a client receives at broadcast time.
#[derive(Debug, Clone, Copy)]
pub struct Broadcast<'a> {
    pub params: &'a ModelParams,
    /// `None` before the first aggregation.
    pub centroids: Option<&'a CentroidSet>,
    /// 1-based round index.
    pub round: usize,
    /// Fraction of each batch treated as small-loss.
    pub keep_ratio: f64,
}

/// Soft predictions of the broadcast model over the shard rows.
pub fn global_pseudo_labels(global: &ModelParams, x: &Matrix) -> Result<Matrix> {
    if !global.weights.is_finite() {
        return Err(Error::Diverged(
            "broadcast model has non-finite weights".into(),
        ));
    }
    Ok(mlp_forward(global, x)?.probs)
}

/// Class means of the small-loss part of the whole shard; seeds the running
/// centroids when no global centroids are available.
fn bootstrap_centroids(
    params: &ModelParams,
    x: &Matrix,
    given: &[usize],
    keep_ratio: f64,
    classes: usize,
) -> Result<CentroidSet> {
    let rec = mlp_forward(params, x)?;
    let kept = small_loss_filter(&per_example_ce(&rec, given), keep_ratio)?;
    Ok(class_mean_features(&rec.hidden, given, &kept, classes)?.0)
}

/// Run one client's local training for a round.
///
/// Per mini-batch: forward, pick the small-loss subset, mask samples whose
/// centroid-similarity label disagrees with the given label, take one SGD
/// step on the composite loss, then refresh the running centroids from the
/// small-loss subset under the updated model.
///
/// The shard's pseudo-labels, final-epoch mask and centroids are written back.
pub fn local_update(
    shard: &mut ClientShard,
    dataset: &Dataset,
    broadcast: Broadcast<'_>,
    hp: &HyperParams,
    method: Method,
    seed: u64,
) -> Result<LocalUpdateResult> {
    if shard.is_empty() {
        return Err(Error::contract(format!(
            "client {} has no data",
            shard.client_id
        )));
    }
    let classes = dataset.classes;
    let x = dataset.x.select_rows(&shard.indices);
    let given: Vec<usize> = shard
        .indices
        .iter()
        .map(|&i| dataset.given_labels[i])
        .collect();
    let truth: Vec<usize> = shard
        .indices
        .iter()
        .map(|&i| dataset.true_labels[i])
        .collect();

    let mut params = broadcast.params.clone();
    params.reset_velocity();

    let uses_centroids = method.uses_centroids();
    let mut running = if !uses_centroids {
        CentroidSet::empty(classes, params.hidden_dim())
    } else {
        match broadcast.centroids {
            Some(global) if method.uses_global_centroids() => global.clone(),
            _ => bootstrap_centroids(&params, &x, &given, broadcast.keep_ratio, classes)?,
        }
    };

    let use_pseudo = method.uses_pseudo_labels() && broadcast.round >= hp.t_pl;
    let mut pseudo = if use_pseudo {
        global_pseudo_labels(broadcast.params, &x)?
    } else {
        one_hot(&given, classes)
    };
    let weights = LossWeights {
        lambda_cen: if uses_centroids {
            hp.lambda_cen_at(broadcast.round)
        } else {
            0.0
        },
        lambda_e: if method == Method::CeBaseline {
            0.0
        } else {
            hp.lambda_e
        },
    };
    let lr = hp.learning_rate_at(broadcast.round);

    let mut rng = rng::stream(
        seed,
        Purpose::LocalShuffle,
        broadcast.round as u64,
        shard.client_id as u64,
    );
    let mut order: Vec<usize> = (0..shard.len()).collect();
    let mut loss_sum = 0.0;
    let mut steps = 0usize;
    let mut mask_counts = MaskCounts::default();
    let mut final_mask = vec![true; shard.len()];

    for epoch in 0..hp.local_epochs {
        order.shuffle(&mut rng);
        if use_pseudo && method == Method::NaivePseudo {
            pseudo = mlp_forward(&params, &x)?.probs;
        }
        let last_epoch = epoch + 1 == hp.local_epochs;
        let mut epoch_counts = MaskCounts::default();

        for batch in order.chunks(hp.batch_size) {
            let xb = x.select_rows(batch);
            let yb: Vec<usize> = batch.iter().map(|&i| given[i]).collect();
            let rec = mlp_forward(&params, &xb)?;

            let kept = small_loss_filter(&per_example_ce(&rec, &yb), broadcast.keep_ratio)?;
            let mask = if method.uses_mask() && running.any_present() {
                confident_mask(&similarity_labels(&rec.hidden, &running)?, &yb)?
            } else {
                vec![true; batch.len()]
            };

            let pb = pseudo.select_rows(batch);
            let lg = total_loss_and_grads(
                &rec,
                LossBatch {
                    given: &yb,
                    pseudo: &pb,
                    mask: &mask,
                    centroids: &running,
                },
                weights,
                use_pseudo,
            )?;
            let grads = mlp_backward(&params, &xb, &rec, &lg.d_logits, &lg.d_hidden)?;
            sgd_step(&mut params, &grads, lr, hp.momentum, hp.weight_decay)?;
            loss_sum += lg.loss.total;
            steps += 1;

            if uses_centroids {
                let kept_x = xb.select_rows(&kept);
                let kept_y: Vec<usize> = kept.iter().map(|&i| yb[i]).collect();
                let feats = mlp_forward(&params, &kept_x)?.hidden;
                let all: Vec<usize> = (0..kept.len()).collect();
                let (fresh, _) = class_mean_features(&feats, &kept_y, &all, classes)?;
                running = if method.uses_global_centroids() {
                    blend_with_global(&running, &fresh)?
                } else {
                    replace_present(&running, &fresh)?
                };
            }

            if last_epoch {
                for (&pos, &m) in batch.iter().zip(&mask) {
                    epoch_counts.record(m, given[pos] != truth[pos]);
                    final_mask[pos] = m;
                }
            }
        }
        if last_epoch {
            mask_counts = epoch_counts;
        }
    }

    if !running.is_finite() {
        return Err(Error::Diverged("local centroids became non-finite".into()));
    }
    shard.pseudo_labels = use_pseudo.then_some(pseudo);
    if hp.local_epochs > 0 {
        shard.confident_mask = final_mask;
    }
    shard.local_centroids = uses_centroids.then(|| running.clone());

    Ok(LocalUpdateResult {
        client_id: shard.client_id,
        params,
        centroids: running,
        stats: LocalStats {
            mean_loss: if steps == 0 {
                0.0
            } else {
                loss_sum / steps as f64
            },
            mask: mask_counts,
        },
    })
}
