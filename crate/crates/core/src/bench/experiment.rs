use std::path::Path;

use rand::seq::SliceRandom;

use super::config::{DatasetSpec, ExperimentConfig};
use super::metrics::{tail_mean, tail_mean_accuracy, to_csv, MetricsRecord};
use crate::coordinator::{run_training, TrainingSetup};
use crate::datagen::{load_idx, partition_iid, BlobGenerator, ClientShard, Dataset};
use crate::rng::{self, Purpose};
use crate::{Error, Result};

/// Rounds averaged for the reported accuracy.
pub const SUMMARY_WINDOW: usize = 10;

/// Training data with given labels applied, the clean test set and the client shards.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Dataset,
    pub test: Dataset,
    pub shards: Vec<ClientShard>,
}

fn seeded_subset(d: Dataset, n: Option<usize>, seed: u64, stream: u64) -> Result<Dataset> {
    let Some(n) = n else { return Ok(d) };
    if n > d.len() {
        return Err(Error::config(
            "dataset.train_subset",
            format!("subset of {n} from {} rows", d.len()),
        ));
    }
    let mut idx: Vec<usize> = (0..d.len()).collect();
    idx.shuffle(&mut rng::stream(seed, Purpose::Subset, stream, 0));
    idx.truncate(n);
    idx.sort_unstable();
    Ok(d.subset(&idx))
}

pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let cfg = &cfg.resolved();
    let (mut train, test) = match &cfg.dataset {
        DatasetSpec::Blobs {
            classes,
            per_class,
            test_per_class,
            dim,
            spread,
        } => {
            let g = BlobGenerator::new(*classes, *dim, *spread, cfg.seed)?;
            (g.sample(*per_class, 0), g.sample(*test_per_class, 1))
        }
        DatasetSpec::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            train_subset,
            test_subset,
        } => {
            let train = seeded_subset(
                load_idx(train_images, train_labels)?,
                *train_subset,
                cfg.seed,
                0,
            )?;
            let mut test = seeded_subset(
                load_idx(test_images, test_labels)?,
                *test_subset,
                cfg.seed,
                1,
            )?;
            if test.dim() != train.dim() {
                return Err(Error::Data(format!(
                    "train rows have {} features, test rows {}",
                    train.dim(),
                    test.dim()
                )));
            }
            test.classes = test.classes.max(train.classes);
            let mut train = train;
            train.classes = test.classes;
            (train, test)
        }
    };
    let shards = partition_iid(&train, cfg.federation.num_clients, cfg.seed)?;
    let parts: Vec<Vec<usize>> = shards.iter().map(|s| s.indices.clone()).collect();
    let given = cfg
        .noise
        .inject(train.classes, &train.true_labels, &parts)?;
    train.set_given_labels(given)?;
    Ok(PreparedData {
        train,
        test,
        shards,
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub records: Vec<MetricsRecord>,
    /// Fraction of training labels that differ from the truth.
    pub realized_noise: f64,
}

impl ExperimentOutcome {
    pub fn csv(&self) -> String {
        to_csv(&self.records)
    }

    /// Test accuracy averaged over the last [`SUMMARY_WINDOW`] rounds.
    pub fn summary_accuracy(&self) -> f64 {
        tail_mean_accuracy(&self.records, SUMMARY_WINDOW)
    }

    pub fn summary_precision(&self) -> f64 {
        tail_mean(&self.records, SUMMARY_WINDOW, |r| r.mask_precision)
    }

    pub fn summary_recall(&self) -> f64 {
        tail_mean(&self.records, SUMMARY_WINDOW, |r| r.mask_recall)
    }

    pub fn final_divergence(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.weight_divergence)
    }

    pub fn summary_line(&self, cfg: &ExperimentConfig) -> String {
        format!(
            "method={} noise={} epsilon={} rounds={} accuracy_last{}={:.4} precision={:.4} recall={:.4} divergence={:.4} realized_noise={:.4}",
            cfg.method.name(),
            cfg.noise.kind.name(),
            cfg.noise.epsilon,
            self.records.len(),
            SUMMARY_WINDOW,
            self.summary_accuracy(),
            self.summary_precision(),
            self.summary_recall(),
            self.final_divergence(),
            self.realized_noise,
        )
    }
}

/// Build the data, run the federation and collect per-round metrics.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    workers: usize,
    on_round: impl FnMut(&MetricsRecord),
) -> Result<ExperimentOutcome> {
    let cfg = &cfg.resolved();
    cfg.validate()?;
    let PreparedData {
        train,
        test,
        mut shards,
    } = prepare_data(cfg)?;
    let setup = TrainingSetup {
        config: &cfg.federation,
        method: cfg.method,
        train: &train,
        test: &test,
        seed: cfg.seed,
        workers,
        record_timing: cfg.record_timing,
    };
    let run = run_training(&setup, &mut shards, on_round)?;
    let noisy = train
        .given_labels
        .iter()
        .zip(&train.true_labels)
        .filter(|(a, b)| a != b)
        .count();
    Ok(ExperimentOutcome {
        records: run.records,
        realized_noise: noisy as f64 / train.len().max(1) as f64,
    })
}

pub fn write_csv(path: &Path, outcome: &ExperimentOutcome) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, outcome.csv()).map_err(io)
}
