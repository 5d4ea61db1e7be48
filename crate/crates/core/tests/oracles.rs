mod common;

use common::*;

#[test]
fn fedavg_matches_weighted_mean() {
    check_fedavg(2000, 11).unwrap();
}

#[test]
fn detection_metrics_match_set_arithmetic() {
    check_detection(2000, 12).unwrap();
}

#[test]
fn small_loss_filter_matches_rank_counting() {
    check_small_loss(2000, 13).unwrap();
}

#[test]
fn centroid_aggregation_matches_brute_force() {
    check_aggregation(2000, 14).unwrap();
}

#[test]
fn confident_mask_matches_brute_force() {
    let rows = check_mask(2000, 15).unwrap();
    assert!(rows > 10_000, "only {rows} rows were decisive");
}

#[test]
fn oracles_agree_on_hand_examples() {
    assert_eq!(oracle_small_loss(&[3.0, 1.0, 2.0], 0.5), [1, 2].into());
    assert_eq!(oracle_small_loss(&[3.0, 1.0, 2.0], 0.67), [0, 1, 2].into());
    assert_eq!(oracle_small_loss(&[1.0; 5], 0.6), [0, 1, 2].into());
    assert_eq!(
        oracle_detection(&[false, true, false], &[1, 0, 0], &[1, 1, 1]),
        (0.5, 0.5)
    );
    assert_eq!(oracle_fedavg(&[vec![1.0], vec![4.0]], &[2, 1]), vec![2.0]);
}
