//! Label-noise transition matrices and corruption.

use rand::Rng;

use crate::numkit::Matrix;
use crate::rng::{self, Purpose};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    /// A label moves to any other class with probability `ε/(C−1)`.
    Symmetric,
    /// Class `i` moves only to `(i+1) mod C` with probability `ε`.
    Pair,
}

impl NoiseKind {
    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Symmetric => "symmetric",
            NoiseKind::Pair => "pair",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "symmetric" | "sym" => Some(NoiseKind::Symmetric),
            "pair" | "pairflip" => Some(NoiseKind::Pair),
            _ => None,
        }
    }
}

/// Row-stochastic matrix `Q` with `Q[i][j] = P(noisy = j | true = i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    q: Matrix,
}

impl TransitionMatrix {
    pub fn identity(classes: usize) -> Self {
        let mut q = Matrix::zeros(classes, classes);
        for i in 0..classes {
            q.set(i, i, 1.0);
        }
        TransitionMatrix { q }
    }

    pub fn classes(&self) -> usize {
        self.q.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.q
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.q.get(from, to)
    }

    pub fn for_kind(kind: NoiseKind, epsilon: f64, classes: usize) -> Result<Self> {
        match kind {
            NoiseKind::Symmetric => symmetric_transition(epsilon, classes),
            NoiseKind::Pair => pair_transition(epsilon, classes),
        }
    }

    fn sample_row<R: Rng + ?Sized>(&self, from: usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let row = self.q.row(from);
        let mut acc = 0.0;
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        // u landed in the rounding slack above the last cumulative sum
        row.iter().rposition(|&p| p > 0.0).unwrap_or(from)
    }
}

fn check_classes(classes: usize) -> Result<()> {
    if classes < 2 {
        return Err(Error::config("dataset.classes", "need at least 2 classes"));
    }
    Ok(())
}

pub fn symmetric_transition(epsilon: f64, classes: usize) -> Result<TransitionMatrix> {
    check_classes(classes)?;
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::config(
            "noise.epsilon",
            format!("{epsilon} not in [0,1)"),
        ));
    }
    let off = epsilon / (classes - 1) as f64;
    let mut q = Matrix::zeros(classes, classes);
    for i in 0..classes {
        for j in 0..classes {
            q.set(i, j, if i == j { 1.0 - epsilon } else { off });
        }
    }
    Ok(TransitionMatrix { q })
}

pub fn pair_transition(epsilon: f64, classes: usize) -> Result<TransitionMatrix> {
    check_classes(classes)?;
    if !(0.0..0.5).contains(&epsilon) {
        return Err(Error::config(
            "noise.epsilon",
            format!("{epsilon} not in [0,0.5) for pair flipping"),
        ));
    }
    let mut q = Matrix::zeros(classes, classes);
    for i in 0..classes {
        q.set(i, i, 1.0 - epsilon);
        q.set(i, (i + 1) % classes, epsilon);
    }
    Ok(TransitionMatrix { q })
}

/// Resample every label independently from its row of `q`.
pub fn corrupt<R: Rng + ?Sized>(
    labels: &[usize],
    q: &TransitionMatrix,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let c = q.classes();
    labels
        .iter()
        .map(|&y| {
            if y >= c {
                Err(Error::Data(format!(
                    "label {y} out of range for {c} classes"
                )))
            } else {
                Ok(q.sample_row(y, rng))
            }
        })
        .collect()
}

/// Evenly spaced noise ratios spanning `[ε−η, ε+η]`, one per client group.
pub fn client_noise_ratios(epsilon: f64, eta: f64, groups: usize) -> Result<Vec<f64>> {
    if groups == 0 {
        return Err(Error::config("noise.groups", "must be at least 1"));
    }
    if eta < 0.0 || epsilon - eta < 0.0 || epsilon + eta >= 1.0 {
        return Err(Error::config(
            "noise.client_variance",
            format!("[{}, {}] escapes [0,1)", epsilon - eta, epsilon + eta),
        ));
    }
    if groups == 1 {
        return Ok(vec![epsilon]);
    }
    let lo = epsilon - eta;
    let step = 2.0 * eta / (groups - 1) as f64;
    Ok((0..groups).map(|g| lo + step * g as f64).collect())
}

/// Replace every label of one uniformly chosen class with a uniformly chosen
/// wrong label, and corrupt the other classes symmetrically at `epsilon`.
/// Returns the corrupted labels and the chosen class.
pub fn single_class_corruption<R: Rng + ?Sized>(
    labels: &[usize],
    classes: usize,
    epsilon: f64,
    rng: &mut R,
) -> Result<(Vec<usize>, usize)> {
    let q = symmetric_transition(epsilon, classes)?;
    let chosen = rng.random_range(0..classes);
    let out = labels
        .iter()
        .map(|&y| {
            if y >= classes {
                return Err(Error::Data(format!(
                    "label {y} out of range for {classes} classes"
                )));
            }
            if y == chosen {
                let k = rng.random_range(0..classes - 1);
                Ok(if k >= chosen { k + 1 } else { k })
            } else {
                Ok(q.sample_row(y, rng))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((out, chosen))
}

/// Corruption settings of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub epsilon: f64,
    /// Half-width of the per-client noise range (`η` in the client-variance ablation).
    pub client_variance: f64,
    /// Number of client groups the noise range is split into.
    pub groups: usize,
    /// Each client gets one class entirely mislabelled.
    pub per_class_mode: bool,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            kind: NoiseKind::Symmetric,
            epsilon: 0.0,
            client_variance: 0.0,
            groups: 5,
            per_class_mode: false,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self, classes: usize) -> Result<()> {
        TransitionMatrix::for_kind(self.kind, self.epsilon, classes)?;
        let ratios = client_noise_ratios(self.epsilon, self.client_variance, self.groups)?;
        for r in ratios {
            TransitionMatrix::for_kind(self.kind, r, classes).map_err(|e| match e {
                Error::Config { message, .. } => Error::config(
                    "noise.client_variance",
                    format!("group ratio {r}: {message}"),
                ),
                other => other,
            })?;
        }
        if self.per_class_mode && self.kind != NoiseKind::Symmetric {
            return Err(Error::config(
                "noise.per_class_mode",
                "only defined together with symmetric noise",
            ));
        }
        Ok(())
    }

    /// Whether corruption must be applied per client shard.
    pub fn is_per_client(&self) -> bool {
        self.per_class_mode || self.client_variance > 0.0
    }

    /// Produce given labels for a dataset already split into `shards`.
    ///
    /// Plain noise corrupts the whole label vector from one stream. The
    /// client-variance and per-class ablations corrupt each shard separately
    /// with a stream derived from `(seed, client id)`.
    pub fn inject(
        &self,
        classes: usize,
        true_labels: &[usize],
        shards: &[Vec<usize>],
    ) -> Result<Vec<usize>> {
        self.validate(classes)?;
        if !self.is_per_client() {
            let q = TransitionMatrix::for_kind(self.kind, self.epsilon, classes)?;
            let mut rng = rng::stream(self.seed, Purpose::Corruption, 0, 0);
            return corrupt(true_labels, &q, &mut rng);
        }
        let ratios = client_noise_ratios(self.epsilon, self.client_variance, self.groups)?;
        let mut given = true_labels.to_vec();
        for (k, shard) in shards.iter().enumerate() {
            let ratio = ratios[k * ratios.len() / shards.len().max(1)];
            let mut rng = rng::stream(self.seed, Purpose::ClientNoise, k as u64, 0);
            let local: Vec<usize> = shard.iter().map(|&i| true_labels[i]).collect();
            let noisy = if self.per_class_mode {
                single_class_corruption(&local, classes, ratio, &mut rng)?.0
            } else {
                let q = TransitionMatrix::for_kind(self.kind, ratio, classes)?;
                corrupt(&local, &q, &mut rng)?
            };
            for (&i, y) in shard.iter().zip(noisy) {
                given[i] = y;
            }
        }
        Ok(given)
    }
}
