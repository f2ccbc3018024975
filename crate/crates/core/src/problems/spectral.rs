//! Least squares with a prescribed spectrum:
//!
//! ```text
//! f_i(x) = (a_i^T x - b_i)^2 / 2,   a_i = U diag(sqrt(lambda)) s_i
//! ```
//!
//! where the `s_i` are `d` columns of a `64`-style Sylvester-Hadamard sign
//! design, so `(1/n) sum a_i a_i^T = U diag(lambda) U^T` exactly and every
//! component is `(sum lambda)`-smooth. Constraints are halfspaces that hold
//! strictly at the origin and cut off the generating parameter.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::invalid;
use crate::linalg::Matrix;
use crate::math;
use crate::problem::{ProblemConstants, Regularizer};
use crate::problems::quadratic::{QuadraticComponent, QuadraticProblem};
use crate::rng::{self, RunRng};
use crate::Result;

/// Uniformly random orthogonal matrix by Gram-Schmidt on Gaussian rows.
pub fn random_orthogonal(rng: &mut RunRng, d: usize) -> Matrix {
    let mut q = Matrix::zeros(d, d);
    let mut l = 0;
    while l < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for prev in 0..l {
            let c = math::dot(&v, q.row(prev));
            for (vj, qj) in v.iter_mut().zip(q.row(prev)) {
                *vj -= c * qj;
            }
        }
        let norm = math::norm(&v);
        if norm < 1e-8 {
            continue;
        }
        q.row_mut(l).iter_mut().zip(&v).for_each(|(a, b)| *a = b / norm);
        l += 1;
    }
    q
}

/// Entry `(i, j)` of the Sylvester-Hadamard matrix of any power-of-two order.
fn hadamard(i: usize, j: usize) -> f64 {
    if (i & j).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone)]
pub struct SpectralInstance {
    pub problem: QuadraticProblem,
    pub truth: Vec<f64>,
    /// Strictly feasible point (the origin) and its margin.
    pub slater_point: Vec<f64>,
    pub nu: f64,
    /// `f(origin) - min f`, an upper bound on the optimality gap of the
    /// Slater point.
    pub beta: f64,
}

/// `n` must be a power of two with `n >= spectrum.len()`.
pub fn spectral_least_squares(
    seed: u64,
    n: usize,
    spectrum: &[f64],
    halfspaces: usize,
    noise: f64,
) -> Result<SpectralInstance> {
    let d = spectrum.len();
    if d == 0 || !n.is_power_of_two() || n < d {
        return Err(invalid("need a power-of-two component count n >= d >= 1"));
    }
    if spectrum.iter().any(|l| !(*l >= 0.0)) || !(noise >= 0.0) {
        return Err(invalid("spectrum and noise must be nonnegative"));
    }
    let mut r = rng::stream(seed, rng::DATA_STREAM);
    let u = random_orthogonal(&mut r, d);
    let mut columns: Vec<usize> = (0..n).collect();
    columns.shuffle(&mut r);
    let truth: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();

    let mut b = QuadraticProblem::builder(d).regularizer(Regularizer::Zero);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        // a_i = U^T diag(sqrt(lambda)) s_i, with U's rows as eigenvectors
        let s: Vec<f64> = (0..d).map(|l| math::sqrt(spectrum[l]) * hadamard(i, columns[l])).collect();
        let mut a = vec![0.0; d];
        u.mul_t_vec(&s, &mut a);
        let y = math::dot(&a, &truth) + noise * r.sample::<f64, _>(StandardNormal);
        labels.push(y);
        let mut h = Matrix::zeros(d, d);
        for p in 0..d {
            for q in 0..d {
                h[(p, q)] = a[p] * a[q];
            }
        }
        let linear: Vec<f64> = a.iter().map(|v| -y * v).collect();
        b = b.component(QuadraticComponent::new(h, linear, 0.5 * y * y));
    }
    let mut nu = f64::INFINITY;
    for _ in 0..halfspaces {
        let mut a: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
        let mut at = math::dot(&a, &truth);
        if at < 0.0 {
            math::scale(-1.0, &mut a);
            at = -at;
        }
        let e = -0.5 * at;
        nu = nu.min(-e);
        b = b.constraint(QuadraticComponent::affine(&a, e));
    }
    let top = spectrum.iter().sum::<f64>();
    let low = spectrum.iter().fold(f64::INFINITY, |a, v| a.min(*v));
    let problem = b
        .constants(ProblemConstants {
            smoothness: top,
            constraint_smoothness: 0.0,
            strong_convexity: low.min(top),
            gradient_noise: 0.0,
        })
        .build()?;
    // f >= 0, so f(0) bounds the gap of the origin
    let beta = labels.iter().map(|y| 0.5 * y * y).sum::<f64>() / n as f64;
    if halfspaces == 0 {
        nu = 1.0;
    }
    Ok(SpectralInstance { problem, truth, slater_point: vec![0.0; d], nu, beta })
}
