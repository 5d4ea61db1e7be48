use super::mlp::{ModelParams, Weights};
use crate::{Error, Result};

/// Momentum SGD with decoupled-from-bias L2 decay:
/// `v ← μ·v + g + wd·θ` (weights only), `θ ← θ − lr·v`.
pub fn sgd_step(
    params: &mut ModelParams,
    grads: &Weights,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    if !lr.is_finite() || lr <= 0.0 || !(0.0..1.0).contains(&momentum) {
        return Err(Error::contract(format!(
            "sgd_step needs lr > 0 and momentum in [0,1), got {lr}, {momentum}"
        )));
    }
    if !params.weights.same_shape(grads) {
        return Err(Error::contract("gradient shape does not match parameters"));
    }
    if let Some(pos) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Diverged(format!(
            "non-finite gradient at flat index {pos}"
        )));
    }
    for (((theta, is_weight), v), &g) in params
        .weights
        .iter_mut_tagged()
        .zip(params.velocity.iter_mut())
        .zip(grads.iter())
    {
        let decay = if is_weight {
            weight_decay * *theta
        } else {
            0.0
        };
        *v = momentum * *v + g + decay;
        *theta -= lr * *v;
    }
    Ok(())
}
