use crate::{Error, Result};

/// Slack subtracted before rounding `r·n` up, so that products such as
/// `0.6 · 5 = 3.0000000000000004` keep `3` samples rather than `4`.
const KEEP_ROUNDING_SLACK: f64 = 1e-9;

/// Number of samples kept from a batch of `n` at ratio `r`: `⌈r·n⌉`, at least one.
pub fn keep_count(n: usize, r: f64) -> usize {
    ((r * n as f64 - KEEP_ROUNDING_SLACK).ceil().max(1.0) as usize).min(n)
}

/// Indices (ascending) of the `⌈r·n⌉` smallest losses; ties prefer lower indices.
pub fn small_loss_filter(losses: &[f64], r: f64) -> Result<Vec<usize>> {
    if losses.is_empty() {
        return Err(Error::contract("small-loss filter on an empty batch"));
    }
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::contract(format!("keep ratio {r} outside (0,1]")));
    }
    let k = keep_count(losses.len(), r);
    let mut order: Vec<usize> = (0..losses.len()).collect();
    order.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]).then(a.cmp(&b)));
    let mut kept = order[..k].to_vec();
    kept.sort_unstable();
    Ok(kept)
}
