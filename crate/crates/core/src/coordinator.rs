//! Server side of the federation: client selection, parameter averaging,
//! similarity-weighted centroid aggregation and the round loop.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::bench::metrics::{weight_divergence, MetricsRecord};
use crate::datagen::{ClientShard, Dataset};
use crate::localnode::{
    local_update, Broadcast, CentroidSet, HyperParams, LocalUpdateResult, MaskCounts, Method,
};
use crate::numkit::{cosine_similarity, mlp_forward, Activation, ModelParams, Weights};
use crate::rng::{self, Purpose};
use crate::{Error, Result};

/// Lower clamp on centroid aggregation weights; keeps the combination convex
/// when a local centroid points away from the stored global one.
pub const DEFAULT_CENTROID_WEIGHT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct FederationConfig {
    pub num_clients: usize,
    /// Clients sampled per round (`m`).
    pub clients_per_round: usize,
    pub rounds: usize,
    pub hidden: usize,
    pub activation: Activation,
    pub centroid_weight_floor: f64,
    pub hp: HyperParams,
}

impl Default for FederationConfig {
    fn default() -> Self {
        FederationConfig {
            num_clients: 100,
            clients_per_round: 10,
            rounds: 100,
            hidden: 32,
            activation: crate::numkit::DEFAULT_ACTIVATION,
            centroid_weight_floor: DEFAULT_CENTROID_WEIGHT_FLOOR,
            hp: HyperParams::default(),
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_clients == 0 {
            return Err(Error::config("federation.num_clients", "must be >= 1"));
        }
        if self.clients_per_round == 0 || self.clients_per_round > self.num_clients {
            return Err(Error::config(
                "federation.clients_per_round",
                format!("must be in 1..={}", self.num_clients),
            ));
        }
        if self.hidden == 0 {
            return Err(Error::config("model.hidden", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.centroid_weight_floor) {
            return Err(Error::config(
                "federation.centroid_weight_floor",
                "must be in [0, 1]",
            ));
        }
        self.hp.validate()
    }
}

/// Server state between rounds.
#[derive(Debug, Clone)]
pub struct RoundState {
    /// Rounds completed so far.
    pub t: usize,
    pub global: ModelParams,
    /// `None` until the first centroid aggregation.
    pub centroids: Option<CentroidSet>,
    /// Keep ratio for the next round.
    pub r_t: f64,
}

/// Uniform sample of `m` distinct client ids, returned in ascending order.
pub fn select_clients<R: Rng + ?Sized>(
    num_clients: usize,
    m: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if m > num_clients {
        return Err(Error::config(
            "federation.clients_per_round",
            format!("{m} > {num_clients} clients"),
        ));
    }
    let mut picked = rand::seq::index::sample(rng, num_clients, m).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Size-weighted average `Σ (n_k / n)·θ_k` with `n = Σ n_k` over the given clients.
pub fn fedavg(local: &[&Weights], sizes: &[usize]) -> Result<Weights> {
    if local.is_empty() || local.len() != sizes.len() {
        return Err(Error::contract(
            "fedavg needs one size per (non-empty) client list",
        ));
    }
    if local.iter().any(|w| !w.same_shape(local[0])) {
        return Err(Error::contract("fedavg on mismatched parameter shapes"));
    }
    let n: usize = sizes.iter().sum();
    if n == 0 {
        return Err(Error::contract("fedavg with zero total samples"));
    }
    let mut out = local[0].zeros_like();
    for (w, &nk) in local.iter().zip(sizes) {
        let share = nk as f64 / n as f64;
        for (o, &v) in out.iter_mut().zip(w.iter()) {
            *o += share * v;
        }
    }
    Ok(out)
}

/// Similarity-weighted average of uploaded centroids, per class.
///
/// Each upload that has class `c` contributes with weight
/// `max(cos(prev_c, upload_c), floor)`; without a stored `prev_c` all
/// contributors weigh 1. Classes nobody uploaded keep `prev`.
pub fn aggregate_global_centroids(
    prev: Option<&CentroidSet>,
    uploads: &[&CentroidSet],
    floor: f64,
) -> Result<CentroidSet> {
    let first = uploads
        .first()
        .ok_or_else(|| Error::contract("centroid aggregation with no uploads"))?;
    let (classes, dim) = first.vectors.shape();
    if uploads.iter().any(|u| u.vectors.shape() != (classes, dim))
        || prev.is_some_and(|p| p.vectors.shape() != (classes, dim))
    {
        return Err(Error::contract("centroid sets differ in shape"));
    }
    let mut out = prev
        .cloned()
        .unwrap_or_else(|| CentroidSet::empty(classes, dim));
    for c in 0..classes {
        let contrib: Vec<&[f64]> = uploads
            .iter()
            .filter(|u| u.is_present(c))
            .map(|u| u.get(c))
            .collect();
        if contrib.is_empty() {
            continue;
        }
        let stored = prev.filter(|p| p.is_present(c)).map(|p| p.get(c));
        let mut weights = Vec::with_capacity(contrib.len());
        for f in &contrib {
            weights.push(match stored {
                Some(g) => cosine_similarity(g, f)?.max(floor),
                None => 1.0,
            });
        }
        let mut total: f64 = weights.iter().sum();
        if total <= 0.0 {
            log::warn!("class {c}: all centroid weights are zero, using the plain mean");
            weights.iter_mut().for_each(|w| *w = 1.0);
            total = weights.len() as f64;
        }
        let row = out.vectors.row_mut(c);
        row.iter_mut().for_each(|v| *v = 0.0);
        for (f, w) in contrib.iter().zip(&weights) {
            for (o, &x) in row.iter_mut().zip(*f) {
                *o += w * x;
            }
        }
        row.iter_mut().for_each(|v| *v /= total);
        out.presence[c] = true;
    }
    Ok(out)
}

/// Small-loss keep ratio after `t` rounds: `1 − min(τ·t/T, τ)`.
pub fn r_schedule(t: usize, horizon: usize, tau: f64) -> f64 {
    1.0 - (tau * t as f64 / horizon.max(1) as f64).min(tau)
}

/// Fraction of rows whose arg-max prediction equals the true label.
pub fn evaluate(params: &ModelParams, test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Ok(0.0);
    }
    const CHUNK: usize = 1024;
    let mut correct = 0usize;
    let idx: Vec<usize> = (0..test.len()).collect();
    for chunk in idx.chunks(CHUNK) {
        let rec = mlp_forward(params, &test.x.select_rows(chunk))?;
        for (row, &i) in rec.logits.row_iter().zip(chunk) {
            let pred = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (c, &v)| {
                    if v > best.1 {
                        (c, v)
                    } else {
                        best
                    }
                })
                .0;
            correct += usize::from(pred == test.true_labels[i]);
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

/// Everything `run_training` needs besides the client shards.
#[derive(Debug, Clone, Copy)]
pub struct TrainingSetup<'a> {
    pub config: &'a FederationConfig,
    pub method: Method,
    pub train: &'a Dataset,
    pub test: &'a Dataset,
    pub seed: u64,
    /// Worker threads for client updates; 0 uses the global pool.
    pub workers: usize,
    pub record_timing: bool,
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub records: Vec<MetricsRecord>,
    pub state: RoundState,
}

pub fn initial_state(setup: &TrainingSetup<'_>) -> RoundState {
    let cfg = setup.config;
    let global = ModelParams::init(
        setup.train.dim(),
        cfg.hidden,
        setup.train.classes,
        cfg.activation,
        &mut rng::stream(setup.seed, Purpose::Init, 0, 0),
    );
    RoundState {
        t: 0,
        global,
        centroids: None,
        r_t: r_schedule(0, cfg.hp.r_horizon, cfg.hp.tau),
    }
}

/// Execute one round on `state`, returning its metrics.
pub fn run_round(
    setup: &TrainingSetup<'_>,
    shards: &mut [ClientShard],
    state: &mut RoundState,
) -> Result<MetricsRecord> {
    let started = Instant::now();
    let cfg = setup.config;
    let round = state.t + 1;
    let mut sel_rng = rng::stream(setup.seed, Purpose::Selection, round as u64, 0);
    let selected = select_clients(shards.len(), cfg.clients_per_round, &mut sel_rng)?;

    let broadcast = Broadcast {
        params: &state.global,
        centroids: state.centroids.as_ref(),
        round,
        keep_ratio: state.r_t,
    };
    let mut chosen: Vec<&mut ClientShard> = shards
        .iter_mut()
        .enumerate()
        .filter(|(k, _)| selected.binary_search(k).is_ok())
        .map(|(_, s)| s)
        .collect();
    let work = |s: &mut &mut ClientShard| -> Result<LocalUpdateResult> {
        let client = s.client_id;
        local_update(s, setup.train, broadcast, &cfg.hp, setup.method, setup.seed).map_err(|e| {
            Error::Client {
                round,
                client,
                source: Box::new(e),
            }
        })
    };
    // results come back in client-id order regardless of the pool size
    let results: Vec<LocalUpdateResult> = if setup.workers == 1 {
        chosen.iter_mut().map(work).collect::<Result<_>>()?
    } else if setup.workers == 0 {
        chosen.par_iter_mut().map(work).collect::<Result<_>>()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(setup.workers)
            .build()
            .map_err(|e| Error::config("workers", e.to_string()))?
            .install(|| chosen.par_iter_mut().map(work).collect::<Result<_>>())?
    };
    let sizes: Vec<usize> = selected.iter().map(|&k| shards[k].len()).collect();

    let locals: Vec<&Weights> = results.iter().map(|r| &r.params.weights).collect();
    let divergence = if locals.len() >= 2 {
        weight_divergence(&locals)?
    } else {
        0.0
    };
    let weights = fedavg(&locals, &sizes)?;
    if !weights.is_finite() {
        return Err(Error::Diverged(format!(
            "global model non-finite after round {round}"
        )));
    }
    state.global.weights = weights;
    state.global.reset_velocity();

    if setup.method.uses_global_centroids() {
        let uploads: Vec<&CentroidSet> = results.iter().map(|r| &r.centroids).collect();
        state.centroids = Some(aggregate_global_centroids(
            state.centroids.as_ref(),
            &uploads,
            cfg.centroid_weight_floor,
        )?);
    }

    let used_r = state.r_t;
    state.t = round;
    state.r_t = r_schedule(round, cfg.hp.r_horizon, cfg.hp.tau);

    let mut counts = MaskCounts::default();
    for r in &results {
        counts.add(&r.stats.mask);
    }
    let mean_loss = results.iter().map(|r| r.stats.mean_loss).sum::<f64>() / results.len() as f64;
    let test_accuracy = evaluate(&state.global, setup.test)?;
    Ok(MetricsRecord {
        round,
        test_accuracy,
        mean_train_loss: mean_loss,
        confident_fraction: counts.confident_fraction(),
        mask_precision: counts.precision(),
        mask_recall: counts.recall(),
        weight_divergence: divergence,
        r_t: used_r,
        wall_ms: if setup.record_timing {
            started.elapsed().as_millis() as u64
        } else {
            0
        },
    })
}

/// Full round loop: initialize the global model, then for each round select
/// clients, run their local updates, average parameters, aggregate centroids,
/// advance the keep-ratio schedule and evaluate on the test set.
pub fn run_training(
    setup: &TrainingSetup<'_>,
    shards: &mut [ClientShard],
    mut on_round: impl FnMut(&MetricsRecord),
) -> Result<TrainingRun> {
    setup.config.validate()?;
    if shards.len() != setup.config.num_clients {
        return Err(Error::contract(format!(
            "{} shards for {} configured clients",
            shards.len(),
            setup.config.num_clients
        )));
    }
    let mut state = initial_state(setup);
    let mut records = Vec::with_capacity(setup.config.rounds);
    for _ in 0..setup.config.rounds {
        let rec = run_round(setup, shards, &mut state)?;
        on_round(&rec);
        records.push(rec);
    }
    Ok(TrainingRun { records, state })
}
