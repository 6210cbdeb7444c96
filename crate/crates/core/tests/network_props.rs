mod common;

use common::*;
use mlpbench::{
    activate, apply_update, backward, forward, init_params, loss_value, ActivationKind, LossKind, Matrix,
    NetworkConfig, SplitMix64,
};
use proptest::prelude::*;

fn cfg(widths: Vec<usize>, activation: ActivationKind, loss: LossKind, seed: u64) -> NetworkConfig {
    NetworkConfig {
        layer_widths: widths,
        activation,
        loss,
        learning_rate: 1e-3,
        seed,
    }
}

proptest! {
    #[test]
    fn forward_commutes_with_row_permutation(rows in 1usize..12, seed in any::<u64>(), shift in 0usize..12) {
        let c = cfg(vec![5, 7, 3], ActivationKind::Sigmoid, LossKind::Mse, seed);
        let p = init_params(&c).unwrap();
        let mut rng = SplitMix64::new(seed);
        let x = random_matrix(&mut rng, rows, 5, -1.0, 1.0);
        let order: Vec<usize> = (0..rows).map(|i| (i + shift) % rows).collect();
        let (y, _) = forward(&p, &x, &c).unwrap();
        let (y_perm, _) = forward(&p, &x.permute_rows(&order).unwrap(), &c).unwrap();
        prop_assert_eq!(y_perm, y.permute_rows(&order).unwrap());
    }

    #[test]
    fn activation_ranges(z in prop::collection::vec(-50.0f64..50.0, 1..40)) {
        let m = Matrix::new(1, z.len(), z.clone()).unwrap();
        let s = activate(ActivationKind::Sigmoid, &m);
        for (&zi, &v) in z.iter().zip(s.data()) {
            // f64 rounds sigmoid to exactly 1 beyond z ~ 37
            prop_assert!((0.0..=1.0).contains(&v));
            if zi.abs() <= 30.0 {
                prop_assert!(v > 0.0 && v < 1.0);
            }
        }
        prop_assert!(activate(ActivationKind::Relu, &m).data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn bce_output_stays_in_unit_interval(seed in any::<u64>()) {
        let c = cfg(vec![4, 6, 2], ActivationKind::Relu, LossKind::Bce, seed);
        let mut rng = SplitMix64::new(seed);
        let x = random_matrix(&mut rng, 8, 4, -3.0, 3.0);
        let (y, _) = forward(&init_params(&c).unwrap(), &x, &c).unwrap();
        prop_assert!(y.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn init_is_deterministic_and_bounded(seed in any::<u64>()) {
        let c = cfg(vec![3, 9, 2], ActivationKind::Relu, LossKind::Mse, seed);
        let a = init_params(&c).unwrap();
        prop_assert!(a.bit_eq(&init_params(&c).unwrap()));
        for layer in &a.layers {
            prop_assert!(layer.weights.data().iter().all(|w| (-0.5..0.5).contains(w)));
            prop_assert!(layer.biases.data().iter().all(|&b| b == 0.0));
        }
    }
}

/// A small enough step along the negative gradient must not increase the loss.
#[test]
fn small_step_descends() {
    let mut checked = 0;
    for seed in 0..100u64 {
        let activation = if seed % 2 == 0 {
            ActivationKind::Relu
        } else {
            ActivationKind::Sigmoid
        };
        let loss = if seed % 3 == 0 { LossKind::Bce } else { LossKind::Mse };
        let c = cfg(vec![4, 8, 2], activation, loss, seed);
        let mut rng = SplitMix64::new(seed.wrapping_mul(31));
        let p = random_params(&c, &mut rng);
        let x = random_matrix(&mut rng, 6, 4, -1.0, 1.0);
        let y = random_targets(&mut rng, 6, 2, &c);
        let (pred, cache) = forward(&p, &x, &c).unwrap();
        let before = loss_value(loss, &pred, &y).unwrap();
        let g = backward(&p, &cache, &y, &c).unwrap();
        let mut q = p.clone();
        apply_update(&mut q, &g, 1e-3).unwrap();
        let (pred_after, _) = forward(&q, &x, &c).unwrap();
        let after = loss_value(loss, &pred_after, &y).unwrap();
        assert!(after <= before, "seed {seed}: {before} -> {after}");
        checked += 1;
    }
    assert_eq!(checked, 100);
}
