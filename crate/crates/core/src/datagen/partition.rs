use rand::seq::SliceRandom;

use super::{ClientShard, Dataset};
use crate::rng::{self, Purpose};
use crate::{Error, Result};

/// Shuffle the row indices and deal them into `num_clients` contiguous
/// shards whose sizes differ by at most one.
pub fn partition_iid(dataset: &Dataset, num_clients: usize, seed: u64) -> Result<Vec<ClientShard>> {
    let n = dataset.len();
    if num_clients == 0 || num_clients > n {
        return Err(Error::config(
            "federation.num_clients",
            format!("{num_clients} clients for {n} examples"),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, Purpose::Partition, 0, 0));
    let base = n / num_clients;
    let extra = n % num_clients;
    let mut shards = Vec::with_capacity(num_clients);
    let mut start = 0;
    for k in 0..num_clients {
        let len = base + usize::from(k < extra);
        shards.push(ClientShard::new(k, order[start..start + len].to_vec()));
        start += len;
    }
    Ok(shards)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::make_blobs;
    use proptest::prelude::*;

    #[test]
    fn equal_shards_when_divisible() {
        let d = make_blobs(2, 50, 2, 0.1, 0).unwrap();
        let shards = partition_iid(&d, 10, 3).unwrap();
        assert!(shards.iter().all(|s| s.len() == 10));
        assert!(shards.iter().enumerate().all(|(k, s)| s.client_id == k));
    }

    #[test]
    fn too_many_clients() {
        let d = make_blobs(2, 2, 2, 0.1, 0).unwrap();
        assert!(partition_iid(&d, 5, 0).unwrap_err().is_config());
        assert!(partition_iid(&d, 0, 0).unwrap_err().is_config());
    }

    #[test]
    fn shard_class_histograms_match_global_proportions() {
        // 4 balanced classes, 20 shards of 1000: each class count ~ Bin(1000, 1/4)
        let d = make_blobs(4, 5000, 2, 0.1, 0).unwrap();
        let shards = partition_iid(&d, 20, 11).unwrap();
        let sigma = (1000.0f64 * 0.25 * 0.75).sqrt();
        for s in &shards {
            let mut h = [0usize; 4];
            for &i in &s.indices {
                h[d.true_labels[i]] += 1;
            }
            for &c in &h {
                assert!((c as f64 - 250.0).abs() < 3.5 * sigma, "{h:?}");
            }
        }
    }

    proptest! {
        #[test]
        fn partition_is_a_bijection(n in 1usize..300, k in 1usize..40, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let d = Dataset::new(crate::numkit::Matrix::zeros(n, 1), vec![0; n], 2).unwrap();
            let shards = partition_iid(&d, k, seed).unwrap();
            let mut all: Vec<usize> = shards.iter().flat_map(|s| s.indices.clone()).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let sizes: Vec<usize> = shards.iter().map(|s| s.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}
