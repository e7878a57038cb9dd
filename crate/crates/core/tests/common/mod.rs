//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use glime::feature_space::{lift_binary, Reference, Segmentation};
use glime::models::{DenseLayer, ModelSpec};
use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random tanh network `dim -> hidden -> 1` with weights of size ~`scale`.
pub fn random_mlp(dim: usize, hidden: usize, scale: f64, seed: u64) -> ModelSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |rows: usize, cols: usize| -> Vec<Vec<f64>> {
        (0..rows)
            .map(|_| (0..cols).map(|_| rng.random_range(-scale..scale)).collect())
            .collect()
    };
    let w1 = draw(hidden, dim);
    let b1 = draw(1, hidden).remove(0);
    let w2 = draw(1, hidden);
    let b2 = draw(1, 1).remove(0);
    ModelSpec::mlp(vec![
        DenseLayer {
            weights: w1,
            biases: b1,
        },
        DenseLayer {
            weights: w2,
            biases: b2,
        },
    ])
    .unwrap()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Shapley values of the masking game `v(S) = f(x_S, r_rest)` by full
/// enumeration and the subset formula.
pub fn brute_force_shapley(model: &ModelSpec, x: &[f64], r: &Reference, seg: &Segmentation) -> Vec<f64> {
    let d = seg.num_features();
    let count = 1usize << d;
    let masks = Array2::from_shape_fn((count, d), |(s, j)| ((s >> j) & 1) as f64);
    let points = lift_binary(x, r, seg, masks.view()).unwrap();
    let v = model.evaluate(points.view()).unwrap();
    let mut phi = vec![0.0; d];
    for (i, phi_i) in phi.iter_mut().enumerate() {
        for s in 0..count {
            if s >> i & 1 == 1 {
                continue;
            }
            let k = s.count_ones() as usize;
            let coef = factorial(k) * factorial(d - k - 1) / factorial(d);
            *phi_i += coef * (v[s | 1 << i] - v[s]);
        }
    }
    phi
}

/// Weighted ridge through the augmented normal equations, penalizing every
/// coefficient except the intercept column.
pub fn dense_ridge(design: &Array2<f64>, y: &[f64], weights: &[f64], lambda: f64, intercept: bool) -> (Vec<f64>, f64) {
    let (n, d) = design.dim();
    let cols = d + usize::from(intercept);
    let z = DMatrix::from_fn(n, cols, |i, j| if j < d { design[(i, j)] } else { 1.0 });
    let w = DMatrix::from_diagonal(&DVector::from_column_slice(weights));
    let mut gram = z.transpose() * &w * &z;
    for j in 0..d {
        gram[(j, j)] += lambda;
    }
    let rhs = z.transpose() * &w * DVector::from_column_slice(y);
    let beta = gram.lu().solve(&rhs).expect("oracle system is regular");
    let b = if intercept { beta[d] } else { 0.0 };
    (beta.rows(0, d).iter().copied().collect(), b)
}

pub fn dense_inverse(m: &Array2<f64>) -> Array2<f64> {
    let (r, c) = m.dim();
    let dm = DMatrix::from_fn(r, c, |i, j| m[(i, j)]);
    let inv = dm.try_inverse().expect("oracle matrix is invertible");
    Array2::from_shape_fn((r, c), |(i, j)| inv[(i, j)])
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
