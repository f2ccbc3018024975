//! Finite sums of quadratics with convex quadratic (or affine) constraints.
//! Used for the small instances with computable optima.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{symmetric_eigenvalues, Matrix};
use crate::math;
use crate::problem::{ConstrainedProblem, ProblemConstants, Regularizer};
use crate::{error::invalid, Result};

/// `q(x) = x^T Q x / 2 + c^T x + e`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticComponent {
    pub hessian: Matrix,
    pub linear: Vec<f64>,
    pub constant: f64,
}

impl QuadraticComponent {
    pub fn new(hessian: Matrix, linear: Vec<f64>, constant: f64) -> Self {
        QuadraticComponent { hessian, linear, constant }
    }

    pub fn diagonal(diag: &[f64], linear: &[f64], constant: f64) -> Self {
        let d = diag.len();
        let mut h = Matrix::zeros(d, d);
        for (j, v) in diag.iter().enumerate() {
            h[(j, j)] = *v;
        }
        QuadraticComponent { hessian: h, linear: linear.to_vec(), constant }
    }

    /// The affine function `a^T x + e`.
    pub fn affine(slope: &[f64], constant: f64) -> Self {
        let d = slope.len();
        QuadraticComponent { hessian: Matrix::zeros(d, d), linear: slope.to_vec(), constant }
    }

    pub fn is_affine(&self) -> bool {
        self.hessian.as_slice().iter().all(|v| *v == 0.0)
    }

    pub fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.hessian.mul_vec(x, grad);
        let quad = 0.5 * math::dot(grad, x);
        math::axpy(1.0, &self.linear, grad);
        quad + math::dot(&self.linear, x) + self.constant
    }

    fn dim(&self) -> usize {
        self.linear.len()
    }
}

#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    dim: usize,
    components: Vec<QuadraticComponent>,
    constraints: Vec<QuadraticComponent>,
    regularizer: Regularizer,
    constants: ProblemConstants,
    optimum: Option<Vec<f64>>,
}

impl QuadraticProblem {
    pub fn builder(dim: usize) -> QuadraticProblemBuilder {
        QuadraticProblemBuilder {
            dim,
            components: Vec::new(),
            constraints: Vec::new(),
            regularizer: Regularizer::Zero,
            constants: None,
            optimum: None,
        }
    }

    pub fn components(&self) -> &[QuadraticComponent] {
        &self.components
    }

    pub fn constraints(&self) -> &[QuadraticComponent] {
        &self.constraints
    }

    /// Hessian of `f`, the mean of the component Hessians.
    pub fn mean_hessian(&self) -> Matrix {
        mean_hessian(self.dim, &self.components)
    }

    pub fn mean_linear(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        for comp in &self.components {
            math::axpy(1.0 / self.components.len() as f64, &comp.linear, &mut c);
        }
        c
    }

    pub fn constraints_affine(&self) -> bool {
        self.constraints.iter().all(QuadraticComponent::is_affine)
    }

    pub fn set_optimum(&mut self, x: Vec<f64>) {
        self.optimum = Some(x);
    }
}

fn mean_hessian(dim: usize, comps: &[QuadraticComponent]) -> Matrix {
    let mut h = Matrix::zeros(dim, dim);
    for c in comps {
        math::axpy(1.0 / comps.len() as f64, c.hessian.as_slice(), h.as_mut_slice());
    }
    h
}

pub struct QuadraticProblemBuilder {
    dim: usize,
    components: Vec<QuadraticComponent>,
    constraints: Vec<QuadraticComponent>,
    regularizer: Regularizer,
    constants: Option<ProblemConstants>,
    optimum: Option<Vec<f64>>,
}

impl QuadraticProblemBuilder {
    pub fn component(mut self, c: QuadraticComponent) -> Self {
        self.components.push(c);
        self
    }

    pub fn constraint(mut self, c: QuadraticComponent) -> Self {
        self.constraints.push(c);
        self
    }

    pub fn regularizer(mut self, r: Regularizer) -> Self {
        self.regularizer = r;
        self
    }

    /// Overrides the constants computed from the Hessian spectra.
    pub fn constants(mut self, c: ProblemConstants) -> Self {
        self.constants = Some(c);
        self
    }

    pub fn optimum(mut self, x: Vec<f64>) -> Self {
        self.optimum = Some(x);
        self
    }

    pub fn build(self) -> Result<QuadraticProblem> {
        let d = self.dim;
        if d == 0 || self.components.is_empty() {
            return Err(invalid("need d >= 1 and at least one component"));
        }
        for c in self.components.iter().chain(&self.constraints) {
            if c.dim() != d || c.hessian.rows() != d || c.hessian.cols() != d {
                return Err(invalid("component dimension mismatch"));
            }
        }
        self.regularizer.validate(d)?;
        let constants = match self.constants {
            Some(c) => c,
            None => {
                let top = |c: &QuadraticComponent| symmetric_eigenvalues(&c.hessian).last().copied().unwrap_or(0.0);
                let l_f = self.components.iter().map(top).fold(0.0, f64::max);
                let l_g = self.constraints.iter().map(top).fold(0.0, f64::max);
                let mu = symmetric_eigenvalues(&mean_hessian(d, &self.components))[0].max(0.0);
                ProblemConstants {
                    smoothness: l_f.max(f64::MIN_POSITIVE),
                    constraint_smoothness: l_g,
                    strong_convexity: mu.min(l_f),
                    gradient_noise: 0.0,
                }
            }
        };
        constants.validate()?;
        Ok(QuadraticProblem {
            dim: d,
            components: self.components,
            constraints: self.constraints,
            regularizer: self.regularizer,
            constants,
            optimum: self.optimum,
        })
    }
}

impl ConstrainedProblem for QuadraticProblem {
    fn dim(&self) -> usize {
        self.dim
    }

    fn component_count(&self) -> usize {
        self.components.len()
    }

    fn constraint_count(&self) -> usize {
        self.constraints.len()
    }

    fn component(&self, index: usize, x: &[f64], grad: &mut [f64]) -> f64 {
        self.components[index].eval(x, grad)
    }

    fn constraint(&self, k: usize, x: &[f64], grad: &mut [f64]) -> f64 {
        self.constraints[k].eval(x, grad)
    }

    fn regularizer(&self) -> &Regularizer {
        &self.regularizer
    }

    fn constants(&self) -> ProblemConstants {
        self.constants
    }

    fn known_optimum(&self) -> Option<&[f64]> {
        self.optimum.as_deref()
    }
}
