use irl_dr_core::qnet::{Adam, Mlp, DEFAULT_SIZES};
use irl_dr_oracles::{diff, mlp};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn loss<'a>(sizes: &'a [usize], x: &[f64], action: usize, target: f64) -> impl Fn(&[f64]) -> f64 + 'a {
    let x = x.to_vec();
    move |p: &[f64]| 0.5 * (mlp::forward(sizes, p, &x)[action] - target).powi(2)
}

/// Relative error with a floor so that near-zero partials compare
/// absolutely.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

#[test]
fn forward_matches_the_reference_network() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let net = Mlp::new(&DEFAULT_SIZES, &mut rng);
        let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let a = net.forward(&x).unwrap();
        let b = mlp::forward(&DEFAULT_SIZES, net.params(), &x);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sizes = DEFAULT_SIZES;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let net = Mlp::new(&sizes, &mut rng);
        let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let action = rng.gen_range(0..11);
        let target = rng.gen_range(-1.0..1.0);
        let grad = net.td_gradient(&x, action, target).unwrap();
        let f = loss(&sizes, &x, action, target);
        for _ in 0..8 {
            let i = rng.gen_range(0..grad.len());
            let fd = diff::central(&f, net.params(), i, 1e-6);
            worst = worst.max(rel_err(grad[i], fd));
        }
    }
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn adam_step_matches_hand_computation() {
    let mut net = Mlp::zeros(&[1, 1]);
    let mut opt = Adam::new(2, 0.1);
    opt.apply(&mut net, &[0.5, -2.0]).unwrap();
    // first step: m_hat = g, v_hat = g^2, update = -lr * sign(g) (up to eps)
    assert!((net.params()[0] + 0.1).abs() < 1e-6);
    assert!((net.params()[1] - 0.1).abs() < 1e-6);
    opt.apply(&mut net, &[0.5, 0.0]).unwrap();
    let m = 0.9 * 0.05 + 0.1 * 0.5;
    let v = 0.999 * 0.00025 + 0.001 * 0.25;
    let step = 0.1 * (m / (1.0 - 0.81)) / ((v / (1.0 - 0.999f64.powi(2))).sqrt() + 1e-8);
    assert!((net.params()[0] - (-0.1 - step)).abs() < 1e-7, "{}", net.params()[0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_of_small_networks(seed in any::<u64>(), h1 in 1usize..6, h2 in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes = [3, h1, h2, 2];
        let net = Mlp::new(&sizes, &mut rng);
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let grad = net.td_gradient(&x, 1, 0.3).unwrap();
        let f = loss(&sizes, &x, 1, 0.3);
        for i in 0..grad.len() {
            let fd = diff::central(&f, net.params(), i, 1e-6);
            prop_assert!(rel_err(grad[i], fd) < 1e-4, "param {}: {} vs {}", i, grad[i], fd);
        }
    }

    #[test]
    fn soft_update_interpolates(seed in any::<u64>(), tau in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Mlp::new(&[2, 3, 2], &mut rng);
        let b = Mlp::new(&[2, 3, 2], &mut rng);
        let mut t = b.clone();
        t.soft_update(&a, tau);
        for ((x, y), z) in a.params().iter().zip(b.params()).zip(t.params()) {
            prop_assert!((tau * x + (1.0 - tau) * y - z).abs() < 1e-12);
        }
    }
}
