//! Energy-optimal trajectory of a surface vehicle in an uncertain linear
//! current field.
//!
//! The path has `T` waypoints `p(1), .., p(T)` with fixed endpoints; the
//! decision vector stacks the interior waypoints `p(2), .., p(T-1)`. Member
//! `i` of the current ensemble is the affine field `v_i(y) = W_i y + z_i` and
//!
//! ```text
//! f_i(x) = sum_{t=2..T} ||p(t-1) - p(t) - W_i p(t-1) - z_i||^3
//! g_t(x) = ||p(t-1) - p(t)||^2 - v_max^2,   t = 2..T
//! ```
//!
//! Waypoints are confined to the square operating region by a box
//! regularizer.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::linalg::solve;
use crate::linalg::Matrix;
use crate::math;
use crate::problem::{ConstrainedProblem, ProblemConstants, Regularizer};
use crate::rng;
use crate::Result;

/// One ensemble member: `W` row-major and `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct CurrentField {
    pub w: [f64; 4],
    pub z: [f64; 2],
}

impl CurrentField {
    pub fn velocity(&self, y: [f64; 2]) -> [f64; 2] {
        [self.w[0] * y[0] + self.w[1] * y[1] + self.z[0], self.w[2] * y[0] + self.w[3] * y[1] + self.z[1]]
    }
}

fn default_components() -> usize {
    100
}

fn default_horizon() -> usize {
    40
}

fn default_v_max() -> f64 {
    10.0
}

fn default_start() -> [f64; 2] {
    [20.0, 20.0]
}

fn default_dest() -> [f64; 2] {
    [180.0, 180.0]
}

fn default_center() -> [f64; 2] {
    [100.0, 100.0]
}

fn default_half_width() -> f64 {
    100.0
}

fn default_gain_scale() -> f64 {
    0.4
}

fn default_offset_scale() -> f64 {
    20.0
}

/// Generator settings. The defaults are the 100-member, 40-waypoint
/// instance on a 200 x 200 region.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct UsvConfig {
    pub seed: u64,
    #[cfg_attr(feature = "serde", serde(default = "default_components"))]
    pub components: usize,
    #[cfg_attr(feature = "serde", serde(default = "default_horizon"))]
    pub horizon: usize,
    #[cfg_attr(feature = "serde", serde(default = "default_v_max"))]
    pub v_max: f64,
    #[cfg_attr(feature = "serde", serde(default = "default_start"))]
    pub start: [f64; 2],
    #[cfg_attr(feature = "serde", serde(default = "default_dest"))]
    pub dest: [f64; 2],
    #[cfg_attr(feature = "serde", serde(default = "default_center"))]
    pub center: [f64; 2],
    #[cfg_attr(feature = "serde", serde(default = "default_half_width"))]
    pub half_width: f64,
    /// Standard deviation of the entries of the ground-truth `W`.
    #[cfg_attr(feature = "serde", serde(default = "default_gain_scale"))]
    pub gain_scale: f64,
    /// Standard deviation of the ground-truth current at the region center.
    #[cfg_attr(feature = "serde", serde(default = "default_offset_scale"))]
    pub offset_scale: f64,
    /// `L_f` to report; the cubic energy is not globally smooth, so this is a
    /// tuning constant. `None` estimates it along the straight path.
    #[cfg_attr(feature = "serde", serde(default))]
    pub smoothness: Option<f64>,
}

impl UsvConfig {
    pub fn new(seed: u64) -> Self {
        UsvConfig {
            seed,
            components: default_components(),
            horizon: default_horizon(),
            v_max: default_v_max(),
            start: default_start(),
            dest: default_dest(),
            center: default_center(),
            half_width: default_half_width(),
            gain_scale: default_gain_scale(),
            offset_scale: default_offset_scale(),
            smoothness: None,
        }
    }
}

/// Sample positions used to identify each ensemble member: two corners of
/// the region and its center.
pub fn sample_positions(center: [f64; 2], half_width: f64) -> [[f64; 2]; 3] {
    [[center[0] - half_width, center[1] - half_width], [center[0] + half_width, center[1] - half_width], center]
}

/// Solves `v_j = W y_j + z`, `j = 1, 2, 3`, for `(W, z)`.
pub fn fit_field(positions: &[[f64; 2]; 3], velocities: &[[f64; 2]; 3]) -> Result<CurrentField> {
    // unknowns (w00, w01, w10, w11, z0, z1)
    let mut a = Matrix::zeros(6, 6);
    let mut b = vec![0.0; 6];
    for j in 0..3 {
        let [y0, y1] = positions[j];
        a[(2 * j, 0)] = y0;
        a[(2 * j, 1)] = y1;
        a[(2 * j, 4)] = 1.0;
        a[(2 * j + 1, 2)] = y0;
        a[(2 * j + 1, 3)] = y1;
        a[(2 * j + 1, 5)] = 1.0;
        b[2 * j] = velocities[j][0];
        b[2 * j + 1] = velocities[j][1];
    }
    let sol = solve(a, b, 1e-12).ok_or_else(|| invalid("sample positions are collinear"))?;
    Ok(CurrentField { w: [sol[0], sol[1], sol[2], sol[3]], z: [sol[4], sol[5]] })
}

/// Draws the ground-truth field and the ensemble. Member `i` multiplies the
/// true velocities at the sample positions by `1 + xi_i` componentwise,
/// `xi_i ~ N(0, I)`, and is fitted back from those three velocities.
pub fn generate_current_ensemble(cfg: &UsvConfig) -> Result<(CurrentField, Vec<CurrentField>)> {
    if cfg.components == 0 {
        return Err(invalid("the ensemble needs at least one member"));
    }
    let mut rng = rng::stream(cfg.seed, rng::DATA_STREAM);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    let w: [f64; 4] = core::array::from_fn(|_| cfg.gain_scale * normal());
    let at_center: [f64; 2] = core::array::from_fn(|_| cfg.offset_scale * normal());
    let c = cfg.center;
    let truth =
        CurrentField { w, z: [at_center[0] - w[0] * c[0] - w[1] * c[1], at_center[1] - w[2] * c[0] - w[3] * c[1]] };
    let positions = sample_positions(cfg.center, cfg.half_width);
    let clean: [[f64; 2]; 3] = core::array::from_fn(|j| truth.velocity(positions[j]));
    let mut ensemble = Vec::with_capacity(cfg.components);
    for _ in 0..cfg.components {
        let xi = [normal(), normal()];
        let noisy: [[f64; 2]; 3] = core::array::from_fn(|j| [(1.0 + xi[0]) * clean[j][0], (1.0 + xi[1]) * clean[j][1]]);
        ensemble.push(fit_field(&positions, &noisy)?);
    }
    Ok((truth, ensemble))
}

#[derive(Debug, Clone)]
pub struct UsvProblem {
    horizon: usize,
    ensemble: Vec<CurrentField>,
    v_max: f64,
    start: [f64; 2],
    dest: [f64; 2],
    regularizer: Regularizer,
    constants: ProblemConstants,
}

impl UsvProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        horizon: usize,
        ensemble: Vec<CurrentField>,
        v_max: f64,
        start: [f64; 2],
        dest: [f64; 2],
        center: [f64; 2],
        half_width: f64,
        smoothness: Option<f64>,
    ) -> Result<Self> {
        if horizon < 3 {
            return Err(invalid("need at least one interior waypoint (T >= 3)"));
        }
        if ensemble.is_empty() || !(v_max > 0.0) || !(half_width > 0.0) {
            return Err(invalid("empty ensemble or non-positive speed limit / region"));
        }
        let d = 2 * (horizon - 2);
        let lower = (0..d).map(|j| center[j % 2] - half_width).collect();
        let upper = (0..d).map(|j| center[j % 2] + half_width).collect();
        let mut problem = UsvProblem {
            horizon,
            ensemble,
            v_max,
            start,
            dest,
            regularizer: Regularizer::Box { lower, upper },
            constants: ProblemConstants {
                smoothness: 1.0,
                constraint_smoothness: 4.0,
                strong_convexity: 0.0,
                gradient_noise: 0.0,
            },
        };
        problem.constants.smoothness = match smoothness {
            Some(l) => l,
            None => problem.curvature_bound(&problem.straight_line()),
        };
        problem.constants.validate()?;
        Ok(problem)
    }

    pub fn generate(cfg: &UsvConfig) -> Result<Self> {
        let (_, ensemble) = generate_current_ensemble(cfg)?;
        UsvProblem::new(
            cfg.horizon,
            ensemble,
            cfg.v_max,
            cfg.start,
            cfg.dest,
            cfg.center,
            cfg.half_width,
            cfg.smoothness,
        )
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn ensemble(&self) -> &[CurrentField] {
        &self.ensemble
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    /// Waypoint `t` (1-based) of the path encoded by `x`.
    pub fn waypoint(&self, x: &[f64], t: usize) -> [f64; 2] {
        if t == 1 {
            self.start
        } else if t == self.horizon {
            self.dest
        } else {
            [x[2 * (t - 2)], x[2 * (t - 2) + 1]]
        }
    }

    /// All `T` waypoints, endpoints included.
    pub fn path(&self, x: &[f64]) -> Vec<[f64; 2]> {
        (1..=self.horizon).map(|t| self.waypoint(x, t)).collect()
    }

    /// Interior waypoints equally spaced on the segment from start to dest.
    pub fn straight_line(&self) -> Vec<f64> {
        let steps = (self.horizon - 1) as f64;
        let mut x = Vec::with_capacity(2 * (self.horizon - 2));
        for t in 2..self.horizon {
            let a = (t - 1) as f64 / steps;
            x.push(self.start[0] + a * (self.dest[0] - self.start[0]));
            x.push(self.start[1] + a * (self.dest[1] - self.start[1]));
        }
        x
    }

    /// Ensemble-mean energy `f(x)`.
    pub fn energy(&self, x: &[f64]) -> f64 {
        let mut grad = vec![0.0; x.len()];
        self.ensemble.iter().enumerate().map(|(i, _)| self.component(i, x, &mut grad)).sum::<f64>()
            / self.ensemble.len() as f64
    }

    /// Bound on the Hessian norm of the components near `x`:
    /// `6 max ||r|| (1 + ||I - W_i||)^2`.
    pub fn curvature_bound(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for field in &self.ensemble {
            let m = [1.0 - field.w[0], -field.w[1], -field.w[2], 1.0 - field.w[3]];
            let frob = math::sqrt(m.iter().map(|v| v * v).sum());
            for t in 2..=self.horizon {
                let r = self.residual(field, x, t);
                let norm = math::sqrt(r[0] * r[0] + r[1] * r[1]);
                worst = worst.max(6.0 * norm * (1.0 + frob) * (1.0 + frob));
            }
        }
        worst.max(1.0)
    }

    fn residual(&self, field: &CurrentField, x: &[f64], t: usize) -> [f64; 2] {
        let prev = self.waypoint(x, t - 1);
        let cur = self.waypoint(x, t);
        let v = field.velocity(prev);
        [prev[0] - cur[0] - v[0], prev[1] - cur[1] - v[1]]
    }

    /// Offset of waypoint `t` in the decision vector, if it is interior.
    fn slot(&self, t: usize) -> Option<usize> {
        (t > 1 && t < self.horizon).then(|| 2 * (t - 2))
    }
}

impl ConstrainedProblem for UsvProblem {
    fn dim(&self) -> usize {
        2 * (self.horizon - 2)
    }

    fn component_count(&self) -> usize {
        self.ensemble.len()
    }

    fn constraint_count(&self) -> usize {
        self.horizon - 1
    }

    fn component(&self, index: usize, x: &[f64], grad: &mut [f64]) -> f64 {
        let field = &self.ensemble[index];
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut total = 0.0;
        for t in 2..=self.horizon {
            let r = self.residual(field, x, t);
            let norm = math::sqrt(r[0] * r[0] + r[1] * r[1]);
            total += norm * norm * norm;
            // d||r||^3 / dr = 3 ||r|| r
            let g = [3.0 * norm * r[0], 3.0 * norm * r[1]];
            if let Some(j) = self.slot(t - 1) {
                // r = (I - W) p(t-1) - p(t) - z
                grad[j] += (1.0 - field.w[0]) * g[0] - field.w[2] * g[1];
                grad[j + 1] += -field.w[1] * g[0] + (1.0 - field.w[3]) * g[1];
            }
            if let Some(j) = self.slot(t) {
                grad[j] -= g[0];
                grad[j + 1] -= g[1];
            }
        }
        total
    }

    fn constraint(&self, k: usize, x: &[f64], grad: &mut [f64]) -> f64 {
        let t = k + 2;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let prev = self.waypoint(x, t - 1);
        let cur = self.waypoint(x, t);
        let diff = [prev[0] - cur[0], prev[1] - cur[1]];
        if let Some(j) = self.slot(t - 1) {
            grad[j] = 2.0 * diff[0];
            grad[j + 1] = 2.0 * diff[1];
        }
        if let Some(j) = self.slot(t) {
            grad[j] = -2.0 * diff[0];
            grad[j + 1] = -2.0 * diff[1];
        }
        diff[0] * diff[0] + diff[1] * diff[1] - self.v_max * self.v_max
    }

    fn regularizer(&self) -> &Regularizer {
        &self.regularizer
    }

    fn constants(&self) -> ProblemConstants {
        self.constants
    }
}

/// Length of the longest segment of a path.
pub fn max_segment_length(path: &[[f64; 2]]) -> f64 {
    path.windows(2).map(|w| math::sqrt(math::dist_sq(&w[0], &w[1]))).fold(0.0, f64::max)
}
