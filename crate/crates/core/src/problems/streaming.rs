//! A streaming oracle: `f(x) = E[ sum_j a_j (x_j - xi_j)^2 / 2 ]` with
//! `xi ~ N(c, s^2 I)` and affine constraints. Sample `id` maps to a fixed
//! draw, so runs are reproducible.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::invalid;
use crate::linalg::Matrix;
use crate::math;
use crate::problem::{ConstrainedProblem, ProblemConstants, Regularizer};
use crate::problems::quadratic::{QuadraticComponent, QuadraticProblem};
use crate::Result;

#[derive(Debug, Clone)]
pub struct StreamingQuadratic {
    seed: u64,
    curvature: Vec<f64>,
    center: Vec<f64>,
    spread: f64,
    slopes: Matrix,
    offsets: Vec<f64>,
    regularizer: Regularizer,
    optimum: Option<Vec<f64>>,
}

impl StreamingQuadratic {
    /// Constraints are `slopes[k] . x + offsets[k] <= 0`.
    pub fn new(
        seed: u64,
        curvature: Vec<f64>,
        center: Vec<f64>,
        spread: f64,
        slopes: Matrix,
        offsets: Vec<f64>,
    ) -> Result<Self> {
        let d = curvature.len();
        if d == 0 || center.len() != d {
            return Err(invalid("curvature and center must have the same positive length"));
        }
        if curvature.iter().any(|a| !(*a > 0.0)) || !(spread >= 0.0) {
            return Err(invalid("curvatures must be positive and the spread nonnegative"));
        }
        if slopes.rows() != offsets.len() || (slopes.rows() > 0 && slopes.cols() != d) {
            return Err(invalid("constraint shape mismatch"));
        }
        let mut p = StreamingQuadratic {
            seed,
            curvature,
            center,
            spread,
            slopes,
            offsets,
            regularizer: Regularizer::Zero,
            optimum: None,
        };
        p.optimum = super::reference::kkt_enumeration(&p.mean_problem()?).ok();
        Ok(p)
    }

    /// The deterministic finite-sum problem with the same expected objective
    /// (up to a constant).
    pub fn mean_problem(&self) -> Result<QuadraticProblem> {
        let d = self.curvature.len();
        let linear: Vec<f64> = self.curvature.iter().zip(&self.center).map(|(a, c)| -a * c).collect();
        let mut b = QuadraticProblem::builder(d)
            .component(QuadraticComponent::diagonal(&self.curvature, &linear, 0.0))
            .constants(self.constants());
        for k in 0..self.slopes.rows() {
            b = b.constraint(QuadraticComponent::affine(self.slopes.row(k), self.offsets[k]));
        }
        b.build()
    }

    /// The draw `xi` behind sample `id`.
    pub fn sample(&self, id: usize, out: &mut [f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(id as u64);
        for (o, c) in out.iter_mut().zip(&self.center) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *o = c + self.spread * z;
        }
    }
}

impl ConstrainedProblem for StreamingQuadratic {
    fn dim(&self) -> usize {
        self.curvature.len()
    }

    fn component_count(&self) -> usize {
        0
    }

    fn constraint_count(&self) -> usize {
        self.offsets.len()
    }

    fn component(&self, index: usize, x: &[f64], grad: &mut [f64]) -> f64 {
        let mut xi = alloc::vec![0.0; x.len()];
        self.sample(index, &mut xi);
        let mut value = 0.0;
        for j in 0..x.len() {
            let r = x[j] - xi[j];
            grad[j] = self.curvature[j] * r;
            value += 0.5 * self.curvature[j] * r * r;
        }
        value
    }

    fn constraint(&self, k: usize, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.copy_from_slice(self.slopes.row(k));
        math::dot(self.slopes.row(k), x) + self.offsets[k]
    }

    fn regularizer(&self) -> &Regularizer {
        &self.regularizer
    }

    fn constants(&self) -> ProblemConstants {
        let l = self.curvature.iter().fold(0.0f64, |a, v| a.max(*v));
        let mu = self.curvature.iter().fold(f64::INFINITY, |a, v| a.min(*v));
        let noise = math::sqrt(self.curvature.iter().map(|a| a * a).sum::<f64>()) * self.spread;
        ProblemConstants { smoothness: l, constraint_smoothness: 0.0, strong_convexity: mu, gradient_noise: noise }
    }

    fn known_optimum(&self) -> Option<&[f64]> {
        self.optimum.as_deref()
    }

    fn expected_objective(&self, x: &[f64]) -> Option<f64> {
        let d = x.len();
        let s2 = self.spread * self.spread;
        Some((0..d).map(|j| 0.5 * self.curvature[j] * ((x[j] - self.center[j]) * (x[j] - self.center[j]) + s2)).sum())
    }
}
