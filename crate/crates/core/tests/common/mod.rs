//! Brute-force reference implementations and random-case drivers shared by
//! the oracle tests and the acceptance harness.
//!
//! Every oracle here is written from the definition, without calling the
//! library routine it checks.

#![allow(dead_code)]

use std::collections::BTreeSet;

use fednoise::bench::detection_metrics;
use fednoise::coordinator::{aggregate_global_centroids, fedavg};
use fednoise::localnode::{confident_mask, similarity_labels, small_loss_filter, CentroidSet};
use fednoise::numkit::{Matrix, Weights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ARITH_TOL: f64 = 1e-10;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_weights(r: &mut ChaCha8Rng, d_in: usize, d_h: usize, c: usize) -> Weights {
    let mut w = Weights::zeros(d_in, d_h, c);
    for v in w.iter_mut() {
        *v = r.random_range(-3.0..3.0);
    }
    w
}

/// `Σ n_k θ_k / Σ n_k`, coordinate by coordinate.
pub fn oracle_fedavg(locals: &[Vec<f64>], sizes: &[usize]) -> Vec<f64> {
    let total: usize = sizes.iter().sum();
    (0..locals[0].len())
        .map(|j| {
            let num: f64 = locals
                .iter()
                .zip(sizes)
                .map(|(l, &n)| n as f64 * l[j])
                .sum();
            num / total as f64
        })
        .collect()
}

/// Precision and recall from explicit index sets.
pub fn oracle_detection(mask: &[bool], given: &[usize], truth: &[usize]) -> (f64, f64) {
    let detected: BTreeSet<usize> = (0..mask.len()).filter(|&i| !mask[i]).collect();
    let noisy: BTreeSet<usize> = (0..given.len()).filter(|&i| given[i] != truth[i]).collect();
    let both = detected.intersection(&noisy).count();
    let precision = if detected.is_empty() {
        1.0
    } else {
        both as f64 / detected.len() as f64
    };
    let recall = if noisy.is_empty() {
        1.0
    } else {
        both as f64 / noisy.len() as f64
    };
    (precision, recall)
}

/// Keep index `i` when fewer than `k` samples rank ahead of it, where a
/// sample ranks ahead if its loss is smaller or equal with a lower index.
pub fn oracle_small_loss(losses: &[f64], r: f64) -> BTreeSet<usize> {
    let n = losses.len();
    let mut k = 1;
    while (k as f64) < r * n as f64 - 1e-9 {
        k += 1;
    }
    let k = k.min(n);
    (0..n)
        .filter(|&i| {
            let ahead = (0..n)
                .filter(|&j| losses[j] < losses[i] || (losses[j] == losses[i] && j < i))
                .count();
            ahead < k
        })
        .collect()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na < 1e-12 || nb < 1e-12 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

/// Per-class similarity-weighted mean of the uploads that carry the class.
pub fn oracle_aggregate(
    prev: Option<&(Vec<Vec<f64>>, Vec<bool>)>,
    uploads: &[(Vec<Vec<f64>>, Vec<bool>)],
    floor: f64,
) -> (Vec<Vec<f64>>, Vec<bool>) {
    let classes = uploads[0].0.len();
    let dim = uploads[0].0[0].len();
    let mut out = match prev {
        Some(p) => p.clone(),
        None => (vec![vec![0.0; dim]; classes], vec![false; classes]),
    };
    for c in 0..classes {
        let contributors: Vec<&Vec<f64>> =
            uploads.iter().filter(|u| u.1[c]).map(|u| &u.0[c]).collect();
        if contributors.is_empty() {
            continue;
        }
        let mut w: Vec<f64> = contributors
            .iter()
            .map(|f| match prev {
                Some(p) if p.1[c] => cos(&p.0[c], f).max(floor),
                _ => 1.0,
            })
            .collect();
        if w.iter().sum::<f64>() <= 0.0 {
            w = vec![1.0; w.len()];
        }
        let total: f64 = w.iter().sum();
        out.0[c] = (0..dim)
            .map(|j| {
                contributors
                    .iter()
                    .zip(&w)
                    .map(|(f, wk)| wk * f[j])
                    .sum::<f64>()
                    / total
            })
            .collect();
        out.1[c] = true;
    }
    out
}

/// Index of the most cosine-similar present centroid, or `None` when the
/// top two are too close for rounding to decide.
pub fn oracle_similarity_label(f: &[f64], set: &(Vec<Vec<f64>>, Vec<bool>)) -> Option<usize> {
    let mut scored: Vec<(usize, f64)> = (0..set.0.len())
        .filter(|&c| set.1[c])
        .map(|c| (c, cos(&set.0[c], f)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    match scored.as_slice() {
        [(c, _)] => Some(*c),
        [(c, s0), (_, s1), ..] if s0 - s1 > 1e-9 => Some(*c),
        _ => None,
    }
}

fn to_set(rows: &(Vec<Vec<f64>>, Vec<bool>)) -> CentroidSet {
    let mut s = CentroidSet::from_rows(&rows.0).unwrap();
    s.presence = rows.1.clone();
    s
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= ARITH_TOL * (1.0 + a.abs().max(b.abs()))
}

fn random_centroids(r: &mut ChaCha8Rng, classes: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
    let rows = (0..classes)
        .map(|_| {
            if r.random_bool(0.05) {
                vec![0.0; dim]
            } else {
                (0..dim).map(|_| r.random_range(-2.0..2.0)).collect()
            }
        })
        .collect();
    let presence = (0..classes).map(|_| r.random_bool(0.75)).collect();
    (rows, presence)
}

pub fn check_fedavg(cases: usize, seed: u64) -> Result<usize, String> {
    let mut r = rng(seed);
    for case in 0..cases {
        let (d_in, d_h, c) = (
            r.random_range(1..4),
            r.random_range(1..5),
            r.random_range(2..4),
        );
        let k = r.random_range(1..7);
        let locals: Vec<Weights> = (0..k)
            .map(|_| random_weights(&mut r, d_in, d_h, c))
            .collect();
        let sizes: Vec<usize> = (0..k).map(|_| r.random_range(0..40)).collect();
        if sizes.iter().sum::<usize>() == 0 {
            continue;
        }
        let refs: Vec<&Weights> = locals.iter().collect();
        let got = fedavg(&refs, &sizes)
            .map_err(|e| format!("case {case}: {e}"))?
            .to_flat();
        let flat: Vec<Vec<f64>> = locals.iter().map(Weights::to_flat).collect();
        let want = oracle_fedavg(&flat, &sizes);
        if let Some(j) = (0..want.len()).find(|&j| !close(got[j], want[j])) {
            return Err(format!(
                "case {case}: coordinate {j}: {} vs {}",
                got[j], want[j]
            ));
        }
    }
    Ok(cases)
}

pub fn check_detection(cases: usize, seed: u64) -> Result<usize, String> {
    let mut r = rng(seed);
    for case in 0..cases {
        let n = r.random_range(0..60);
        let c = r.random_range(2..6);
        let truth: Vec<usize> = (0..n).map(|_| r.random_range(0..c)).collect();
        let flip = r.random_range(0.0..1.0);
        let given: Vec<usize> = truth
            .iter()
            .map(|&t| {
                if r.random_bool(flip) {
                    r.random_range(0..c)
                } else {
                    t
                }
            })
            .collect();
        let p_conf = r.random_range(0.0..=1.0);
        let mask: Vec<bool> = (0..n).map(|_| r.random_bool(p_conf)).collect();
        let got = detection_metrics(&mask, &given, &truth).map_err(|e| e.to_string())?;
        let want = oracle_detection(&mask, &given, &truth);
        if !close(got.0, want.0) || !close(got.1, want.1) {
            return Err(format!("case {case}: {got:?} vs {want:?}"));
        }
    }
    Ok(cases)
}

pub fn check_small_loss(cases: usize, seed: u64) -> Result<usize, String> {
    let mut r = rng(seed);
    for case in 0..cases {
        let n = r.random_range(1..40);
        // a coarse grid produces plenty of ties
        let grid = r.random_bool(0.5);
        let losses: Vec<f64> = (0..n)
            .map(|_| {
                if grid {
                    r.random_range(0..5) as f64 * 0.5
                } else {
                    r.random_range(0.0..10.0)
                }
            })
            .collect();
        let r_t = if r.random_bool(0.3) {
            // ratios that land on whole counts in exact arithmetic
            r.random_range(1..=n) as f64 / n as f64
        } else {
            r.random_range(0.01..=1.0)
        };
        let got: BTreeSet<usize> = small_loss_filter(&losses, r_t)
            .map_err(|e| e.to_string())?
            .into_iter()
            .collect();
        let want = oracle_small_loss(&losses, r_t);
        if got != want {
            return Err(format!(
                "case {case}: r={r_t} losses={losses:?}: {got:?} vs {want:?}"
            ));
        }
    }
    Ok(cases)
}

pub fn check_aggregation(cases: usize, seed: u64) -> Result<usize, String> {
    let mut r = rng(seed);
    for case in 0..cases {
        let (classes, dim) = (r.random_range(1..5), r.random_range(1..5));
        let uploads: Vec<_> = (0..r.random_range(1..6))
            .map(|_| random_centroids(&mut r, classes, dim))
            .collect();
        let prev = r
            .random_bool(0.8)
            .then(|| random_centroids(&mut r, classes, dim));
        let floor = if r.random_bool(0.5) {
            1e-6
        } else {
            r.random_range(0.0..0.3)
        };

        let up_sets: Vec<CentroidSet> = uploads.iter().map(to_set).collect();
        let up_refs: Vec<&CentroidSet> = up_sets.iter().collect();
        let prev_set = prev.as_ref().map(to_set);
        let got = aggregate_global_centroids(prev_set.as_ref(), &up_refs, floor)
            .map_err(|e| format!("case {case}: {e}"))?;
        let want = oracle_aggregate(prev.as_ref(), &uploads, floor);
        if got.presence != want.1 {
            return Err(format!(
                "case {case}: presence {:?} vs {:?}",
                got.presence, want.1
            ));
        }
        for c in 0..classes {
            for j in 0..dim {
                let (g, w) = (got.vectors.get(c, j), want.0[c][j]);
                if !close(g, w) {
                    return Err(format!("case {case}: class {c} coordinate {j}: {g} vs {w}"));
                }
            }
        }
    }
    Ok(cases)
}

/// Similarity labels and the confident mask against per-row brute force.
/// Returns the number of rows compared.
pub fn check_mask(cases: usize, seed: u64) -> Result<usize, String> {
    let mut r = rng(seed);
    let mut compared = 0;
    for case in 0..cases {
        let (classes, dim, b) = (
            r.random_range(2..6),
            r.random_range(1..6),
            r.random_range(1..20),
        );
        let mut cents = random_centroids(&mut r, classes, dim);
        if !cents.1.iter().any(|&p| p) {
            cents.1[r.random_range(0..classes)] = true;
        }
        let rows: Vec<Vec<f64>> = (0..b)
            .map(|_| (0..dim).map(|_| r.random_range(-2.0..2.0)).collect())
            .collect();
        let given: Vec<usize> = (0..b).map(|_| r.random_range(0..classes)).collect();
        let feats = Matrix::from_rows(&rows).unwrap();
        let sim = similarity_labels(&feats, &to_set(&cents)).map_err(|e| e.to_string())?;
        let mask = confident_mask(&sim, &given).map_err(|e| e.to_string())?;
        for i in 0..b {
            if !cents.1[sim[i]] {
                return Err(format!(
                    "case {case} row {i}: label {} is not a present class",
                    sim[i]
                ));
            }
            let Some(want) = oracle_similarity_label(&rows[i], &cents) else {
                continue;
            };
            if sim[i] != want || mask[i] != (want == given[i]) {
                return Err(format!("case {case} row {i}: label {} vs {want}", sim[i]));
            }
            compared += 1;
        }
    }
    Ok(compared)
}
