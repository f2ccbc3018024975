#![allow(dead_code)]

use rand::Rng;
use ssqp_core::linalg::Matrix;
use ssqp_core::problems::quadratic::{QuadraticComponent, QuadraticProblem};
use ssqp_core::rng;
use ssqp_core::Regularizer;

/// `n` random strongly convex quadratic components in `d` dimensions, a
/// disk constraint `||x||^2 <= radius^2` and `m - 1` random halfspaces that
/// contain the origin strictly.
pub fn constrained_toy(seed: u64, d: usize, n: usize, m: usize, regularizer: Regularizer) -> QuadraticProblem {
    let mut r = rng::stream(seed, 9);
    let mut b = QuadraticProblem::builder(d).regularizer(regularizer);
    for _ in 0..n {
        let mut h = Matrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let v: f64 = r.random::<f64>() - 0.5;
                h[(i, j)] += 0.5 * v;
                h[(j, i)] += 0.5 * v;
            }
            h[(i, i)] += 1.5;
        }
        let c: Vec<f64> = (0..d).map(|_| 6.0 * (r.random::<f64>() - 0.5) - 2.0).collect();
        b = b.component(QuadraticComponent::new(h, c, 0.0));
    }
    if m > 0 {
        b = b.constraint(QuadraticComponent::diagonal(&vec![2.0; d], &vec![0.0; d], -1.0));
    }
    for _ in 1..m {
        let a: Vec<f64> = (0..d).map(|_| r.random::<f64>() - 0.5).collect();
        b = b.constraint(QuadraticComponent::affine(&a, -0.3));
    }
    b.build().unwrap()
}
