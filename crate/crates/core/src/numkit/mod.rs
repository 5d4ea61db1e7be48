//! Dense math and a hand-differentiated two-layer MLP.
//!
//! The first layer (`w1`, `b1`) followed by the activation is the feature
//! extractor; its output is the feature vector used for centroids. The second
//! layer (`w2`, `b2`) is the linear classifier.

mod matrix;
mod mlp;
mod optim;

pub use matrix::{dot, norm, Matrix};
pub use mlp::{
    mlp_backward, mlp_forward, softmax_rows, Activation, ForwardRecord, ModelParams, Weights,
    DEFAULT_ACTIVATION,
};
pub use optim::sgd_step;

use crate::{Error, Result};

/// Norms below this are treated as zero by [`cosine_similarity`].
pub const COSINE_EPS: f64 = 1e-12;

/// Cosine similarity; 0 when either vector is (numerically) zero.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::contract(format!(
            "cosine_similarity on lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    let nu = norm(u);
    let nv = norm(v);
    if nu < COSINE_EPS || nv < COSINE_EPS {
        return Ok(0.0);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests;
