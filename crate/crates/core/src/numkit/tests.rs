use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random_params(seed: u64, d_in: usize, d_h: usize, c: usize, act: Activation) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ModelParams::init(d_in, d_h, c, act, &mut rng);
    for b in p.weights.b1.iter_mut().chain(p.weights.b2.iter_mut()) {
        *b = rng.random_range(-0.5..0.5);
    }
    p
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_vec(
        r,
        c,
        (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// Scalar loss `Σ A∘logits + Σ B∘hidden`, whose partials are exactly A and B.
fn linear_probe(params: &ModelParams, x: &Matrix, a: &Matrix, b: &Matrix) -> f64 {
    let rec = mlp_forward(params, x).unwrap();
    dot(a.data(), rec.logits.data()) + dot(b.data(), rec.hidden.data())
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-7 {
        (analytic - numeric).abs()
    } else {
        (analytic - numeric).abs() / scale
    }
}

#[test]
fn zero_model_gives_uniform_probs() {
    let p = ModelParams::zeros(3, 4, 5, DEFAULT_ACTIVATION);
    let x = Matrix::from_vec(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.5, 9.0]).unwrap();
    let rec = mlp_forward(&p, &x).unwrap();
    for v in rec.probs.data() {
        assert_eq!(*v, 0.2);
    }
}

#[test]
fn symmetric_logits_split_evenly() {
    let logits = Matrix::from_vec(1, 2, vec![1.0, 1.0]).unwrap();
    let (p, _) = softmax_rows(&logits);
    assert_eq!(p.data(), &[0.5, 0.5]);
}

#[test]
fn softmax_is_stable_for_huge_logits() {
    let logits = Matrix::from_vec(1, 3, vec![1e4, -1e4, 0.0]).unwrap();
    let (p, lp) = softmax_rows(&logits);
    assert!(p.is_finite() && lp.is_finite());
    assert!((p.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn forward_rejects_wrong_width() {
    let p = ModelParams::zeros(3, 4, 2, DEFAULT_ACTIVATION);
    assert!(matches!(
        mlp_forward(&p, &Matrix::zeros(1, 4)),
        Err(crate::Error::Contract(_))
    ));
}

#[test]
fn random_forward_rows_sum_to_one() {
    let p = random_params(3, 5, 6, 4, DEFAULT_ACTIVATION);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = random_matrix(&mut rng, 3, 5);
    let rec = mlp_forward(&p, &x).unwrap();
    for row in rec.probs.row_iter() {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(row.iter().all(|&v| v > 0.0 && v < 1.0));
    }
}

#[test]
fn zero_upstream_gives_zero_gradient() {
    let p = random_params(1, 4, 3, 2, DEFAULT_ACTIVATION);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random_matrix(&mut rng, 2, 4);
    let rec = mlp_forward(&p, &x).unwrap();
    let g = mlp_backward(&p, &x, &rec, &Matrix::zeros(2, 2), &Matrix::zeros(2, 3)).unwrap();
    assert!(g.iter().all(|&v| v == 0.0));
}

#[test]
fn backward_rejects_bad_shapes() {
    let p = random_params(1, 4, 3, 2, DEFAULT_ACTIVATION);
    let x = Matrix::zeros(2, 4);
    let rec = mlp_forward(&p, &x).unwrap();
    assert!(mlp_backward(&p, &x, &rec, &Matrix::zeros(2, 3), &Matrix::zeros(2, 3)).is_err());
    assert!(mlp_backward(&p, &x, &rec, &Matrix::zeros(2, 2), &Matrix::zeros(1, 3)).is_err());
}

#[test]
fn single_example_gradients_match_central_differences() {
    for act in [Activation::Tanh, Activation::Sigmoid, Activation::Silu] {
        let mut p = random_params(11, 4, 5, 3, act);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = random_matrix(&mut rng, 1, 4);
        let a = random_matrix(&mut rng, 1, 3);
        let b = random_matrix(&mut rng, 1, 5);
        let rec = mlp_forward(&p, &x).unwrap();
        let analytic = mlp_backward(&p, &x, &rec, &a, &b).unwrap().to_flat();

        let h = 1e-6;
        let n = p.weights.len();
        #[allow(clippy::needless_range_loop)]
        for k in 0..n {
            let orig = *p.weights.iter_mut().nth(k).unwrap();
            *p.weights.iter_mut().nth(k).unwrap() = orig + h;
            let up = linear_probe(&p, &x, &a, &b);
            *p.weights.iter_mut().nth(k).unwrap() = orig - h;
            let down = linear_probe(&p, &x, &a, &b);
            *p.weights.iter_mut().nth(k).unwrap() = orig;
            let numeric = (up - down) / (2.0 * h);
            let e = rel_err(analytic[k], numeric);
            assert!(
                e < 1e-5,
                "{act:?} param {k}: {} vs {numeric} (err {e})",
                analytic[k]
            );
        }
    }
}

#[test]
fn batch_gradient_is_sum_of_example_gradients() {
    let p = random_params(21, 3, 4, 2, DEFAULT_ACTIVATION);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let x = random_matrix(&mut rng, 2, 3);
    let a = random_matrix(&mut rng, 2, 2);
    let b = random_matrix(&mut rng, 2, 4);
    let rec = mlp_forward(&p, &x).unwrap();
    let both = mlp_backward(&p, &x, &rec, &a, &b).unwrap().to_flat();
    let mut sum = vec![0.0; both.len()];
    for i in 0..2 {
        let xi = x.select_rows(&[i]);
        let reci = mlp_forward(&p, &xi).unwrap();
        let gi = mlp_backward(&p, &xi, &reci, &a.select_rows(&[i]), &b.select_rows(&[i])).unwrap();
        for (s, g) in sum.iter_mut().zip(gi.iter()) {
            *s += g;
        }
    }
    for (x, y) in both.iter().zip(&sum) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn plain_sgd_subtracts_scaled_gradient() {
    let mut p = random_params(5, 2, 2, 2, DEFAULT_ACTIVATION);
    let before = p.weights.clone();
    let mut g = p.weights.zeros_like();
    for (i, v) in g.iter_mut().enumerate() {
        *v = i as f64 * 0.1 - 0.3;
    }
    sgd_step(&mut p, &g, 0.5, 0.0, 0.0).unwrap();
    for ((a, b), gi) in p.weights.iter().zip(before.iter()).zip(g.iter()) {
        assert!((a - (b - 0.5 * gi)).abs() < 1e-15);
    }
}

#[test]
fn momentum_second_step_is_one_and_a_half_gradients() {
    let mut p = ModelParams::zeros(1, 1, 2, DEFAULT_ACTIVATION);
    let mut g = p.weights.zeros_like();
    for v in g.iter_mut() {
        *v = 2.0;
    }
    sgd_step(&mut p, &g, 0.1, 0.5, 0.0).unwrap();
    let after_one = p.weights.to_flat();
    sgd_step(&mut p, &g, 0.1, 0.5, 0.0).unwrap();
    for (a, b) in p.weights.iter().zip(&after_one) {
        assert!((b - a - 0.1 * 1.5 * 2.0).abs() < 1e-12);
    }
}

#[test]
fn weight_decay_skips_biases() {
    let mut p = ModelParams::zeros(1, 1, 1, DEFAULT_ACTIVATION);
    for v in p.weights.iter_mut() {
        *v = 1.0;
    }
    let g = p.weights.zeros_like();
    sgd_step(&mut p, &g, 1.0, 0.0, 0.1).unwrap();
    assert_eq!(p.weights.w1.data(), &[0.9]);
    assert_eq!(p.weights.b1, vec![1.0]);
    assert_eq!(p.weights.w2.data(), &[0.9]);
    assert_eq!(p.weights.b2, vec![1.0]);
}

#[test]
fn sgd_rejects_nonfinite_gradients_and_bad_hyperparameters() {
    let mut p = ModelParams::zeros(1, 1, 2, DEFAULT_ACTIVATION);
    let mut g = p.weights.zeros_like();
    assert!(sgd_step(&mut p, &g, 0.0, 0.0, 0.0).is_err());
    assert!(sgd_step(&mut p, &g, 0.1, 1.0, 0.0).is_err());
    g.b2[0] = f64::NAN;
    assert!(matches!(
        sgd_step(&mut p, &g, 0.1, 0.0, 0.0),
        Err(crate::Error::Diverged(_))
    ));
}

#[test]
fn cosine_examples() {
    assert!((cosine_similarity(&[3.0, -1.0], &[3.0, -1.0]).unwrap() - 1.0).abs() < 1e-15);
    assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
    let s = cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
    assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
    assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
    assert!(cosine_similarity(&[1.0], &[1.0, 2.0]).is_err());
}

proptest! {
    #[test]
    fn softmax_rows_always_normalized(z in prop::collection::vec(-50.0f64..50.0, 1..8)) {
        let n = z.len();
        let (p, _) = softmax_rows(&Matrix::from_vec(1, n, z).unwrap());
        prop_assert!((p.data().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cosine_symmetric_and_scale_invariant(
        u in prop::collection::vec(-10.0f64..10.0, 3),
        v in prop::collection::vec(-10.0f64..10.0, 3),
        a in 0.01f64..100.0,
        b in 0.01f64..100.0,
    ) {
        prop_assume!(norm(&u) > 1e-3 && norm(&v) > 1e-3);
        let s = cosine_similarity(&u, &v).unwrap();
        prop_assert!((s - cosine_similarity(&v, &u).unwrap()).abs() < 1e-12);
        let au: Vec<f64> = u.iter().map(|x| a * x).collect();
        let bv: Vec<f64> = v.iter().map(|x| b * x).collect();
        prop_assert!((s - cosine_similarity(&au, &bv).unwrap()).abs() < 1e-9);
        prop_assert!((-1.0..=1.0).contains(&s));
    }

    #[test]
    fn zero_step_is_identity(seed in 0u64..1000) {
        let mut p = random_params(seed, 3, 2, 2, DEFAULT_ACTIVATION);
        let before = p.clone();
        let g = p.weights.zeros_like();
        sgd_step(&mut p, &g, 0.3, 0.0, 0.0).unwrap();
        prop_assert_eq!(p, before);
    }
}
