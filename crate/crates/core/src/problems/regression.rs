//! Least squares with residual constraints on a critical set:
//!
//! ```text
//! minimize    (1/n) sum_{i in objective set} (y_i - x_i^T theta)^2 / 2
//! subject to  (y_k - x_k^T theta)^2 <= r,   k in critical set
//! ```

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::linalg::{solve, symmetric_eigenvalues, Matrix};
use crate::math;
use crate::problem::{ConstrainedProblem, ProblemConstants, Regularizer};
use crate::qp::{solve_canonical_qp, CanonicalQp, QpOptions};
use crate::rng;
use crate::{Error, Result};

fn default_total() -> usize {
    506
}

fn default_raw_features() -> usize {
    13
}

fn default_critical() -> usize {
    56
}

fn default_tolerance() -> f64 {
    1.3
}

fn default_noise() -> f64 {
    1.0
}

/// Generator settings; the defaults give `d = 14`, `n = 450`, `K = 56`,
/// `r = 1.3`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct RegressionConfig {
    pub seed: u64,
    /// Samples drawn (synthetic features only).
    #[cfg_attr(feature = "serde", serde(default = "default_total"))]
    pub total: usize,
    /// Raw feature count before the bias column (synthetic features only).
    #[cfg_attr(feature = "serde", serde(default = "default_raw_features"))]
    pub raw_features: usize,
    /// Size `K` of the critical set.
    #[cfg_attr(feature = "serde", serde(default = "default_critical"))]
    pub critical: usize,
    /// Size `n` of the objective set; `None` uses every non-critical sample.
    #[cfg_attr(feature = "serde", serde(default))]
    pub objective: Option<usize>,
    /// Residual tolerance `r`.
    #[cfg_attr(feature = "serde", serde(default = "default_tolerance"))]
    pub tolerance: f64,
    /// Standard deviation of the label noise.
    #[cfg_attr(feature = "serde", serde(default = "default_noise"))]
    pub noise: f64,
    /// When set, synthetic raw features are mixed so that the `l`-th
    /// principal direction has scale `decay^l` (an ill-conditioned design).
    #[cfg_attr(feature = "serde", serde(default))]
    pub spectrum_decay: Option<f64>,
}

impl RegressionConfig {
    pub fn new(seed: u64) -> Self {
        RegressionConfig {
            seed,
            total: default_total(),
            raw_features: default_raw_features(),
            critical: default_critical(),
            objective: None,
            tolerance: default_tolerance(),
            noise: default_noise(),
            spectrum_decay: None,
        }
    }
}

/// Where the features (and possibly labels) come from.
#[derive(Debug, Clone, PartialEq)]
pub enum RegressionSource {
    Synthetic,
    /// Raw features, one sample per row. Without labels, labels are drawn
    /// from the generative model.
    Data {
        features: Matrix,
        labels: Option<Vec<f64>>,
    },
}

/// A strictly feasible point with its margin and optimality-gap bound.
#[derive(Debug, Clone, PartialEq)]
pub struct SlaterCertificate {
    pub point: Vec<f64>,
    /// `nu = r - max_k (y_k - x_k^T theta)^2`
    pub nu: f64,
    /// `beta = f(point) - f(theta_ls) >= f(point) - f(x*)`
    pub beta: f64,
}

impl SlaterCertificate {
    /// `beta / nu`
    pub fn gamma(&self) -> f64 {
        self.beta / self.nu
    }
}

#[derive(Debug, Clone)]
pub struct ResidualRegressionProblem {
    objective_x: Matrix,
    objective_y: Vec<f64>,
    critical_x: Matrix,
    critical_y: Vec<f64>,
    tolerance: f64,
    constants: ProblemConstants,
    component_smoothness: f64,
    slater: SlaterCertificate,
    truth: Option<Vec<f64>>,
    regularizer: Regularizer,
}

/// Per-column z-score (constant columns are centered only), then a column
/// of ones.
pub fn normalize_features(raw: &Matrix) -> Matrix {
    let (n, p) = (raw.rows(), raw.cols());
    let mut out = Matrix::zeros(n, p + 1);
    for j in 0..p {
        let mean = (0..n).map(|i| raw[(i, j)]).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (raw[(i, j)] - mean) * (raw[(i, j)] - mean)).sum::<f64>() / n as f64;
        let sd = math::sqrt(var);
        for i in 0..n {
            let c = raw[(i, j)] - mean;
            out[(i, j)] = if sd > 0.0 { c / sd } else { c };
        }
    }
    for i in 0..n {
        out[(i, p)] = 1.0;
    }
    out
}

fn synthetic_raw(cfg: &RegressionConfig, rng: &mut rng::RunRng) -> Matrix {
    let (n, p) = (cfg.total, cfg.raw_features);
    let mut g = Matrix::zeros(n, p);
    for v in g.as_mut_slice() {
        *v = rng.sample(StandardNormal);
    }
    let Some(decay) = cfg.spectrum_decay else {
        return g;
    };
    // random orthogonal mixing by Gram-Schmidt
    let mut q = Matrix::zeros(p, p);
    for l in 0..p {
        let mut v: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        for prev in 0..l {
            let c = math::dot(&v, q.row(prev));
            math::axpy(-c, q.row(prev), &mut v);
        }
        let norm = math::norm(&v);
        q.row_mut(l).iter_mut().zip(&v).for_each(|(a, b)| *a = b / norm);
    }
    let mut out = Matrix::zeros(n, p);
    let scales: Vec<f64> = (0..p).map(|l| math::powf(decay, l as f64)).collect();
    for i in 0..n {
        for j in 0..p {
            out[(i, j)] = (0..p).map(|l| g[(i, l)] * scales[l] * q[(l, j)]).sum();
        }
    }
    out
}

fn rows_of(m: &Matrix, idx: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(idx.len(), m.cols());
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).copy_from_slice(m.row(i));
    }
    out
}

/// `(1/n) X^T X`
fn second_moment(x: &Matrix) -> Matrix {
    let (n, d) = (x.rows(), x.cols());
    let mut m = Matrix::zeros(d, d);
    for i in 0..n {
        let row = x.row(i);
        for a in 0..d {
            for b in 0..d {
                m[(a, b)] += row[a] * row[b] / n as f64;
            }
        }
    }
    m
}

/// Unconstrained least squares on `(x, y)` through the normal equations.
pub fn least_squares(x: &Matrix, y: &[f64]) -> Result<Vec<f64>> {
    let d = x.cols();
    let mut gram = second_moment(x);
    let mut rhs = vec![0.0; d];
    x.mul_t_vec(y, &mut rhs);
    math::scale(1.0 / x.rows() as f64, &mut rhs);
    let ridge = 1e-14 * (0..d).map(|j| gram[(j, j)]).fold(0.0, f64::max);
    for j in 0..d {
        gram[(j, j)] += ridge;
    }
    solve(gram, rhs, 1e-300).ok_or_else(|| invalid("singular design"))
}

/// Minimizes `max_k (y_k - x_k^T theta)^2` by prox-linear steps; returns the
/// minimizer and the attained value.
pub fn minimax_residual(x: &Matrix, y: &[f64], start: &[f64]) -> Result<(Vec<f64>, f64)> {
    let (k, d) = (x.rows(), x.cols());
    let lg = 2.0 * (0..k).map(|i| math::norm_sq(x.row(i))).fold(0.0, f64::max);
    let mut theta = start.to_vec();
    let residuals = |t: &[f64]| -> Vec<f64> { (0..k).map(|i| y[i] - math::dot(x.row(i), t)).collect() };
    let worst = |t: &[f64]| residuals(t).iter().map(|r| r * r).fold(0.0, f64::max);
    let mut shift = 1.0 + worst(&theta);
    let mut opts = QpOptions::default();
    for _ in 0..20_000 {
        let res = residuals(&theta);
        let mut slopes = Matrix::zeros(k, d);
        let mut offsets = vec![0.0; k];
        for i in 0..k {
            // g_i(u) ~ r_i^2 - 2 r_i x_i^T (u - theta)
            for j in 0..d {
                slopes[(i, j)] = -2.0 * res[i] * x[(i, j)];
            }
            offsets[i] = res[i] * res[i] - math::dot(slopes.row(i), &theta) + shift;
        }
        let qp = CanonicalQp {
            rho: lg,
            anchor: theta.clone(),
            linear: vec![0.0; d],
            regularizer: Regularizer::Zero,
            hinge_weight: 1.0,
            offsets,
            slopes,
        };
        let sol = solve_canonical_qp(&qp, &opts)?;
        if sol.v <= 0.0 {
            shift *= 4.0;
            continue;
        }
        opts.initial_duals = Some(sol.duals.clone());
        let step = math::dist_sq(&sol.u, &theta);
        theta = sol.u;
        if math::sqrt(step) <= 1e-13 * (1.0 + math::norm(&theta)) {
            break;
        }
    }
    let value = worst(&theta);
    Ok((theta, value))
}

impl ResidualRegressionProblem {
    /// Builds the problem from normalized features (bias column included).
    pub fn from_parts(
        objective_x: Matrix,
        objective_y: Vec<f64>,
        critical_x: Matrix,
        critical_y: Vec<f64>,
        tolerance: f64,
        truth: Option<Vec<f64>>,
    ) -> Result<Self> {
        let d = objective_x.cols();
        if objective_x.rows() == 0 || objective_x.rows() != objective_y.len() {
            return Err(invalid("objective set must be non-empty with one label per row"));
        }
        if critical_x.rows() != critical_y.len() || (critical_x.rows() > 0 && critical_x.cols() != d) {
            return Err(invalid("critical set shape mismatch"));
        }
        if !(tolerance > 0.0) {
            return Err(invalid("tolerance r must be positive"));
        }
        let moment = second_moment(&objective_x);
        let eig = symmetric_eigenvalues(&moment);
        let smoothness = *eig.last().unwrap_or(&1.0);
        let strong_convexity = eig[0].max(0.0).min(smoothness);
        let component_smoothness =
            (0..objective_x.rows()).map(|i| math::norm_sq(objective_x.row(i))).fold(0.0, f64::max);
        let constraint_smoothness =
            2.0 * (0..critical_x.rows()).map(|i| math::norm_sq(critical_x.row(i))).fold(0.0, f64::max);

        let theta_ls = least_squares(&objective_x, &objective_y)?;
        let (point, nu) = if critical_x.rows() == 0 {
            (theta_ls.clone(), tolerance)
        } else {
            let (theta, worst) = minimax_residual(&critical_x, &critical_y, &theta_ls)?;
            if worst >= tolerance {
                return Err(Error::Infeasible { r: tolerance, minimal_r: worst });
            }
            (theta, tolerance - worst)
        };
        let mut problem = ResidualRegressionProblem {
            objective_x,
            objective_y,
            critical_x,
            critical_y,
            tolerance,
            constants: ProblemConstants { smoothness, constraint_smoothness, strong_convexity, gradient_noise: 0.0 },
            component_smoothness,
            slater: SlaterCertificate { point: point.clone(), nu, beta: 0.0 },
            truth,
            regularizer: Regularizer::Zero,
        };
        let beta = (problem.mean_loss(&point) - problem.mean_loss(&theta_ls)).max(0.0);
        problem.slater.beta = beta;
        problem.constants.validate()?;
        Ok(problem)
    }

    pub fn generate(cfg: &RegressionConfig, source: RegressionSource) -> Result<Self> {
        let mut rng = rng::stream(cfg.seed, rng::DATA_STREAM);
        let (features, labels) = match source {
            RegressionSource::Synthetic => {
                if cfg.raw_features == 0 {
                    return Err(invalid("need at least one feature"));
                }
                (normalize_features(&synthetic_raw(cfg, &mut rng)), None)
            }
            RegressionSource::Data { features, labels } => {
                if let Some(l) = &labels {
                    if l.len() != features.rows() {
                        return Err(invalid("one label per sample required"));
                    }
                }
                (normalize_features(&features), labels)
            }
        };
        let total = features.rows();
        let d = features.cols();
        if total < cfg.critical + 1 {
            return Err(invalid("need more samples than the critical set"));
        }
        let n = cfg.objective.unwrap_or(total - cfg.critical);
        if n == 0 || n + cfg.critical > total {
            return Err(invalid("objective and critical sets exceed the sample count"));
        }
        let (labels, truth) = match labels {
            Some(l) => (l, None),
            None => {
                let sd = 1.0 / math::sqrt(d as f64);
                let theta0: Vec<f64> = (0..d).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
                let mut y = vec![0.0; total];
                features.mul_vec(&theta0, &mut y);
                for v in y.iter_mut() {
                    *v += cfg.noise * rng.sample::<f64, _>(StandardNormal);
                }
                (y, Some(theta0))
            }
        };
        let mut order: Vec<usize> = (0..total).collect();
        order.shuffle(&mut rng);
        let critical_idx = &order[..cfg.critical];
        let objective_idx = &order[cfg.critical..cfg.critical + n];
        let pick = |idx: &[usize]| idx.iter().map(|&i| labels[i]).collect::<Vec<f64>>();
        ResidualRegressionProblem::from_parts(
            rows_of(&features, objective_idx),
            pick(objective_idx),
            rows_of(&features, critical_idx),
            pick(critical_idx),
            cfg.tolerance,
            truth,
        )
    }

    /// `(1/n) sum (y_i - x_i^T theta)^2 / 2`
    pub fn mean_loss(&self, theta: &[f64]) -> f64 {
        let n = self.objective_x.rows();
        (0..n)
            .map(|i| {
                let r = self.objective_y[i] - math::dot(self.objective_x.row(i), theta);
                0.5 * r * r
            })
            .sum::<f64>()
            / n as f64
    }

    pub fn slater(&self) -> &SlaterCertificate {
        &self.slater
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// `max_i ||x_i||^2`, the smoothness of each component.
    pub fn component_smoothness(&self) -> f64 {
        self.component_smoothness
    }

    /// The generating parameter, for synthetic labels.
    pub fn truth(&self) -> Option<&[f64]> {
        self.truth.as_deref()
    }

    pub fn objective_features(&self) -> &Matrix {
        &self.objective_x
    }

    pub fn critical_features(&self) -> &Matrix {
        &self.critical_x
    }

    pub fn critical_labels(&self) -> &[f64] {
        &self.critical_y
    }

    /// Overrides the reported constants (e.g. a tuned `L_f`).
    pub fn set_constants(&mut self, constants: ProblemConstants) -> Result<()> {
        constants.validate()?;
        self.constants = constants;
        Ok(())
    }
}

impl ConstrainedProblem for ResidualRegressionProblem {
    fn dim(&self) -> usize {
        self.objective_x.cols()
    }

    fn component_count(&self) -> usize {
        self.objective_x.rows()
    }

    fn constraint_count(&self) -> usize {
        self.critical_x.rows()
    }

    fn component(&self, index: usize, x: &[f64], grad: &mut [f64]) -> f64 {
        let row = self.objective_x.row(index);
        let r = self.objective_y[index] - math::dot(row, x);
        for (g, a) in grad.iter_mut().zip(row) {
            *g = -r * a;
        }
        0.5 * r * r
    }

    fn constraint(&self, k: usize, x: &[f64], grad: &mut [f64]) -> f64 {
        let row = self.critical_x.row(k);
        let r = self.critical_y[k] - math::dot(row, x);
        for (g, a) in grad.iter_mut().zip(row) {
            *g = -2.0 * r * a;
        }
        r * r - self.tolerance
    }

    fn regularizer(&self) -> &Regularizer {
        &self.regularizer
    }

    fn constants(&self) -> ProblemConstants {
        self.constants
    }
}
