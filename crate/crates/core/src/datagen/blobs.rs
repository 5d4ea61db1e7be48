use rand::Rng;
use rand_distr::StandardNormal;

use super::Dataset;
use crate::numkit::{dot, norm, Matrix};
use crate::rng::{self, Purpose};
use crate::{Error, Result};

/// Minimum distance between two class centers, in units of `spread`.
pub const MIN_SEPARATION_IN_SPREADS: f64 = 4.0;

/// Isotropic Gaussian class clusters around fixed centers.
///
/// Centers are unit-norm random directions (orthonormal when `classes <= dim`)
/// and are rescaled if needed so that every pair sits at least
/// [`MIN_SEPARATION_IN_SPREADS`]`·spread` apart.
#[derive(Debug, Clone)]
pub struct BlobGenerator {
    centers: Matrix,
    spread: f64,
    seed: u64,
}

impl BlobGenerator {
    pub fn new(classes: usize, dim: usize, spread: f64, seed: u64) -> Result<Self> {
        if classes < 2 {
            return Err(Error::config("dataset.classes", "need at least 2 classes"));
        }
        if dim == 0 {
            return Err(Error::config("dataset.dim", "must be positive"));
        }
        if !spread.is_finite() || spread < 0.0 {
            return Err(Error::config("dataset.spread", "must be finite and >= 0"));
        }
        let mut rng = rng::stream(seed, Purpose::Centers, 0, 0);
        let mut centers: Vec<Vec<f64>> = Vec::with_capacity(classes);
        while centers.len() < classes {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            if centers.len() < dim {
                for c in &centers {
                    let proj = dot(&v, c);
                    for (x, &y) in v.iter_mut().zip(c) {
                        *x -= proj * y;
                    }
                }
            }
            let n = norm(&v);
            if n < 1e-6 {
                continue;
            }
            v.iter_mut().for_each(|x| *x /= n);
            centers.push(v);
        }

        let mut min_sep = f64::INFINITY;
        for i in 0..classes {
            for j in i + 1..classes {
                let d: f64 = centers[i]
                    .iter()
                    .zip(&centers[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                min_sep = min_sep.min(d);
            }
        }
        let needed = MIN_SEPARATION_IN_SPREADS * spread;
        if min_sep < needed {
            let scale = needed / min_sep;
            centers.iter_mut().flatten().for_each(|x| *x *= scale);
        }
        Ok(BlobGenerator {
            centers: Matrix::from_rows(&centers)?,
            spread,
            seed,
        })
    }

    pub fn centers(&self) -> &Matrix {
        &self.centers
    }

    pub fn classes(&self) -> usize {
        self.centers.rows()
    }

    /// Draw `per_class` points per class. Rows are interleaved by class
    /// (row `i` has class `i % classes`). Different `stream` values give
    /// independent samples from the same clusters.
    pub fn sample(&self, per_class: usize, stream: u64) -> Dataset {
        let c = self.classes();
        let dim = self.centers.cols();
        let mut rng = rng::stream(self.seed, Purpose::Samples, stream, 0);
        let n = per_class * c;
        let mut data = Vec::with_capacity(n * dim);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let y = i % c;
            for &mu in self.centers.row(y) {
                let z: f64 = rng.sample(StandardNormal);
                data.push(mu + self.spread * z);
            }
            labels.push(y);
        }
        let x = Matrix::from_vec(n, dim, data).expect("sized above");
        Dataset::new(x, labels, c).expect("labels < classes")
    }
}

pub fn make_blobs(
    classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    Ok(BlobGenerator::new(classes, dim, spread, seed)?.sample(per_class, 0))
}
