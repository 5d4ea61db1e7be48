//! Client-side local update: small-loss selection, centroid maintenance,
//! confident masking, pseudo-label targets and the composite loss.

mod centroids;
mod loss;
mod selection;
mod update;

pub use centroids::{
    blend_with_global, class_mean_features, confident_mask, replace_present, similarity_labels,
    CentroidSet,
};
pub use loss::{
    one_hot, per_example_ce, total_loss_and_grads, LossBatch, LossBreakdown, LossGrads, LossWeights,
};
pub use selection::{keep_count, small_loss_filter};
pub use update::{
    global_pseudo_labels, local_update, Broadcast, LocalStats, LocalUpdateResult, MaskCounts,
};

use crate::{Error, Result};

/// Training method run by every client.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Centroid exchange, confident masking and global-guided pseudo-labels.
    Proposed,
    /// Plain cross-entropy FedAvg.
    CeBaseline,
    /// As `Proposed`, but pseudo-labels come from the local model, refreshed each epoch.
    NaivePseudo,
    /// As `Proposed`, but centroids stay local: no blending with global centroids
    /// and no server-side centroid aggregation.
    NoGlobalCentroids,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Proposed,
        Method::CeBaseline,
        Method::NaivePseudo,
        Method::NoGlobalCentroids,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::CeBaseline => "ce_baseline",
            Method::NaivePseudo => "naive_pseudo_ablation",
            Method::NoGlobalCentroids => "no_global_centroids_ablation",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn uses_centroids(self) -> bool {
        self != Method::CeBaseline
    }

    pub fn uses_global_centroids(self) -> bool {
        matches!(self, Method::Proposed | Method::NaivePseudo)
    }

    pub fn uses_mask(self) -> bool {
        self != Method::CeBaseline
    }

    pub fn uses_pseudo_labels(self) -> bool {
        self != Method::CeBaseline
    }
}

/// Local-training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub lambda_cen: f64,
    pub lambda_e: f64,
    /// First round (1-based) that trains unconfident samples on pseudo-labels.
    pub t_pl: usize,
    /// Rounds over which the small-loss keep ratio decays to `1 − tau`.
    pub r_horizon: usize,
    /// Final fraction of each batch dropped by small-loss selection.
    pub tau: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Rounds over which `lambda_cen` ramps linearly up from 0.
    pub lambda_cen_warmup_rounds: usize,
    /// Divide the learning rate by `lr_decay_factor` every this many rounds (0 = never).
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            lambda_cen: 1.0,
            lambda_e: 0.8,
            t_pl: 100,
            r_horizon: 10,
            tau: 0.4,
            local_epochs: 5,
            batch_size: 50,
            learning_rate: 0.25,
            momentum: 0.5,
            weight_decay: 1e-4,
            lambda_cen_warmup_rounds: 100,
            lr_decay_every: 0,
            lr_decay_factor: 10.0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str, m: &str| Err(Error::config(format!("train.{f}"), m));
        if !(0.0..1.0).contains(&self.tau) {
            return bad("tau", "must be in [0,1)");
        }
        if self.r_horizon == 0 {
            return bad("r_horizon", "must be >= 1");
        }
        if !self.lambda_cen.is_finite() || self.lambda_cen < 0.0 {
            return bad("lambda_cen", "must be finite and >= 0");
        }
        if !self.lambda_e.is_finite() || self.lambda_e < 0.0 {
            return bad("lambda_e", "must be finite and >= 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be >= 1");
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return bad("learning_rate", "must be > 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum", "must be in [0,1)");
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return bad("weight_decay", "must be >= 0");
        }
        if !self.lr_decay_factor.is_finite() || self.lr_decay_factor <= 0.0 {
            return bad("lr_decay_factor", "must be > 0");
        }
        Ok(())
    }

    /// `lambda_cen` at 1-based round `t`: 0 at round 1, rising linearly to the
    /// configured value after `lambda_cen_warmup_rounds` rounds.
    pub fn lambda_cen_at(&self, round: usize) -> f64 {
        if self.lambda_cen_warmup_rounds == 0 {
            return self.lambda_cen;
        }
        let frac = (round.saturating_sub(1) as f64 / self.lambda_cen_warmup_rounds as f64).min(1.0);
        self.lambda_cen * frac
    }

    pub fn learning_rate_at(&self, round: usize) -> f64 {
        if self.lr_decay_every == 0 {
            return self.learning_rate;
        }
        let drops = round.saturating_sub(1) / self.lr_decay_every;
        self.learning_rate / self.lr_decay_factor.powi(drops as i32)
    }
}
