//! Central finite-difference check of reverse-mode gradients, shared by the
//! unit-style test and the acceptance runner.

use duopoly::nn::{log_softmax, split_gaussian, Mlp, NetworkSpec, OutputHead};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;
pub const COORDS: usize = 200;
pub const TOL: f64 = 1e-4;

type LossFn = fn(&[f64], usize) -> (f64, Vec<f64>);

fn squared_error(out: &[f64], _batch: usize) -> (f64, Vec<f64>) {
    let target: Vec<f64> = (0..out.len()).map(|i| (i as f64 * 0.7).sin()).collect();
    let loss = out.iter().zip(&target).map(|(o, t)| (o - t).powi(2)).sum();
    let adj = out
        .iter()
        .zip(&target)
        .map(|(o, t)| 2.0 * (o - t))
        .collect();
    (loss, adj)
}

fn categorical_nll(out: &[f64], batch: usize) -> (f64, Vec<f64>) {
    let m = out.len() / batch;
    let mut loss = 0.0;
    let mut adj = vec![0.0; out.len()];
    for b in 0..batch {
        let lsm = log_softmax(&out[b * m..(b + 1) * m]);
        let a = (3 * b + 1) % m;
        loss -= lsm[a];
        for j in 0..m {
            adj[b * m + j] = lsm[j].exp() - if j == a { 1.0 } else { 0.0 };
        }
    }
    (loss, adj)
}

fn gaussian_nll(out: &[f64], batch: usize) -> (f64, Vec<f64>) {
    let mut loss = 0.0;
    let mut adj = vec![0.0; out.len()];
    for b in 0..batch {
        let g = split_gaussian(out[2 * b], out[2 * b + 1]);
        assert!(!g.clamped);
        let x = 0.3 - 0.2 * b as f64;
        let sd = g.std();
        let z = (x - g.mean) / sd;
        loss += 0.5 * z * z + g.log_std;
        adj[2 * b] = -z / sd;
        adj[2 * b + 1] = 1.0 - z * z;
    }
    (loss, adj)
}

/// Worst relative error over `COORDS` random parameters of a 2x256 network.
fn worst_error(spec: NetworkSpec, loss: LossFn, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Mlp::<f64>::new(spec.clone(), &mut rng).unwrap();
    let batch = 3;
    let input: Vec<f64> = (0..batch * spec.input_dim)
        .map(|_| rng.random_range(0.0..1.0))
        .collect();
    let eval = |net: &Mlp<f64>| loss(&net.predict(&input, batch).unwrap(), batch).0;

    let cache = net.forward_batch(&input, batch).unwrap();
    let (_, adjoint) = loss(cache.output(), batch);
    let (grads, _) = net.backward(&cache, &adjoint, false).unwrap();

    let n = net.params().len();
    let mut worst = 0.0f64;
    for _ in 0..COORDS {
        let i = rng.random_range(0..n);
        let orig = net.params().get(i).unwrap();
        net.params_mut().set(i, orig + H);
        let up = eval(&net);
        net.params_mut().set(i, orig - H);
        let down = eval(&net);
        net.params_mut().set(i, orig);
        let fd = (up - down) / (2.0 * H);
        let g = grads.get(i).unwrap();
        // Coordinates whose gradient is below the finite-difference noise floor
        // are compared on an absolute 1e-7 scale.
        let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-7);
        worst = worst.max(rel);
    }
    worst
}

/// Worst relative error for each output head: linear, categorical, Gaussian.
pub fn all_heads() -> [(OutputHead, f64); 3] {
    [
        (
            OutputHead::Linear,
            worst_error(
                NetworkSpec::new(3, 15, OutputHead::Linear),
                squared_error,
                1,
            ),
        ),
        (
            OutputHead::Categorical,
            worst_error(
                NetworkSpec::new(2, 15, OutputHead::Categorical),
                categorical_nll,
                2,
            ),
        ),
        (
            OutputHead::GaussianParams,
            worst_error(
                NetworkSpec::new(2, 2, OutputHead::GaussianParams),
                gaussian_nll,
                3,
            ),
        ),
    ]
}
