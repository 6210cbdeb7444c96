#![allow(dead_code)]

use mlpbench::{backward, forward, init_params, loss_value, Matrix, NetworkConfig, Params, SplitMix64};

/// Finite-difference step used by every gradient check.
pub const FD_STEP: f64 = 1e-5;

/// Relative error with a floor on the magnitude, so that entries whose true
/// gradient is near zero are compared absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

pub fn random_matrix(rng: &mut SplitMix64, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.next_range(lo, hi)).collect()).unwrap()
}

/// Targets suited to the loss: 0/1 labels for BCE, values in [-1, 1) for MSE.
pub fn random_targets(rng: &mut SplitMix64, rows: usize, cols: usize, cfg: &NetworkConfig) -> Matrix {
    match cfg.loss {
        mlpbench::LossKind::Bce => Matrix::new(
            rows,
            cols,
            (0..rows * cols).map(|_| (rng.next_u64() & 1) as f64).collect(),
        )
        .unwrap(),
        mlpbench::LossKind::Mse => random_matrix(rng, rows, cols, -1.0, 1.0),
    }
}

/// Params with nonzero biases so that bias gradients are exercised through
/// non-trivial pre-activations.
pub fn random_params(cfg: &NetworkConfig, rng: &mut SplitMix64) -> Params {
    let mut p = init_params(cfg).unwrap();
    for layer in &mut p.layers {
        for v in layer.biases.data_mut() {
            *v = rng.next_range(-0.3, 0.3);
        }
    }
    p
}

fn loss_at(p: &Params, x: &Matrix, y: &Matrix, cfg: &NetworkConfig) -> f64 {
    let (pred, _) = forward(p, x, cfg).unwrap();
    loss_value(cfg.loss, &pred, y).unwrap()
}

/// Smallest |pre-activation| over hidden layers; ReLU is not differentiable
/// at 0, so finite differences are only meaningful away from it.
pub fn min_hidden_abs_preactivation(p: &Params, x: &Matrix, cfg: &NetworkConfig) -> f64 {
    let (_, cache) = forward(p, x, cfg).unwrap();
    let hidden = &cache.pre_activations[..cache.pre_activations.len() - 1];
    hidden
        .iter()
        .flat_map(|z| z.data().iter().map(|v| v.abs()))
        .fold(f64::INFINITY, f64::min)
}

fn entry(q: &mut Params, layer: usize, bias: bool, k: usize) -> &mut f64 {
    let layer = &mut q.layers[layer];
    if bias {
        &mut layer.biases.data_mut()[k]
    } else {
        &mut layer.weights.data_mut()[k]
    }
}

/// Largest relative error between backprop and central differences over
/// every weight and bias.
pub fn max_gradient_error(p: &Params, x: &Matrix, y: &Matrix, cfg: &NetworkConfig) -> f64 {
    let (_, cache) = forward(p, x, cfg).unwrap();
    let grads = backward(p, &cache, y, cfg).unwrap();
    let mut worst = 0.0f64;
    let mut probe = p.clone();
    for l in 0..p.layers.len() {
        for bias in [false, true] {
            let analytic = if bias {
                &grads.layers[l].biases
            } else {
                &grads.layers[l].weights
            };
            for (k, &a) in analytic.data().iter().enumerate() {
                let orig = *entry(&mut probe, l, bias, k);
                *entry(&mut probe, l, bias, k) = orig + FD_STEP;
                let up = loss_at(&probe, x, y, cfg);
                *entry(&mut probe, l, bias, k) = orig - FD_STEP;
                let down = loss_at(&probe, x, y, cfg);
                *entry(&mut probe, l, bias, k) = orig;
                worst = worst.max(rel_err(a, (up - down) / (2.0 * FD_STEP)));
            }
        }
    }
    worst
}
