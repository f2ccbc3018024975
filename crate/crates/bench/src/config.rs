//! Benchmark configuration: a JSON document describing one problem, one
//! algorithm, the penalty, the reference solution and the seeds to run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ssqp_core::algorithms::skip::ControlGain;
use ssqp_core::algorithms::{ReportPoint, StoppingRule};
use ssqp_core::baselines::StepRule;
use ssqp_core::problems::regression::RegressionConfig;
use ssqp_core::problems::usv::UsvConfig;
use ssqp_core::schedules::VarasRegime;
use ssqp_core::ProblemConstants;

use crate::BenchError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub problem: ProblemSpec,
    pub algorithm: AlgorithmSpec,
    pub gamma: GammaSpec,
    #[serde(default)]
    pub reference: ReferenceSpec,
    /// Run seeds. The problem instance has its own seed in `problem`.
    pub seeds: Vec<u64>,
    pub stop: StoppingRule,
    /// Rows every this many iterations; default `ceil(T / 500)` (every epoch
    /// for VARAS).
    #[serde(default)]
    pub checkpoint_stride: Option<u64>,
    #[serde(default)]
    pub initial_point: InitialPoint,
    #[serde(default)]
    pub run: RunOptions,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// QMO cost in SFO units for the wall-clock model.
    #[serde(default = "default_cost")]
    pub cost_model_m: f64,
    /// Fill the `wall` column with measured seconds. Off by default so traces
    /// are byte-reproducible.
    #[serde(default)]
    pub wall_clock: bool,
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

fn default_cost() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// Least squares with per-sample residual constraints on a critical set.
    Regression {
        generator: RegressionConfig,
        /// Comma-separated matrix with a header row; the last column is the
        /// label unless `labels_in_file` is false.
        #[serde(default)]
        data_file: Option<PathBuf>,
        #[serde(default = "yes")]
        labels_in_file: bool,
    },
    /// Waypoint energy minimization under an ensemble of currents.
    Usv { generator: UsvConfig },
    /// Finite-sum least squares with a prescribed Hessian spectrum and
    /// halfspace constraints.
    Spectral {
        seed: u64,
        /// Component count, a power of two.
        components: usize,
        spectrum: Vec<f64>,
        halfspaces: usize,
        #[serde(default)]
        noise: f64,
    },
}

fn yes() -> bool {
    true
}

/// A problem constant given as a number or derived from the problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConstantSpec {
    Value(f64),
    Derived(Derived),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Derived {
    /// `L_f` (or `mu` where a strong-convexity constant is asked for).
    Problem,
    /// `L_gamma = max{L_f, gamma L_g}`
    Penalized,
}

impl ConstantSpec {
    pub fn smoothness(&self, c: &ProblemConstants, gamma: f64) -> f64 {
        match *self {
            ConstantSpec::Value(v) => v,
            ConstantSpec::Derived(Derived::Problem) => c.smoothness,
            ConstantSpec::Derived(Derived::Penalized) => c.penalized_smoothness(gamma),
        }
    }

    pub fn strong_convexity(&self, c: &ProblemConstants) -> f64 {
        match *self {
            ConstantSpec::Value(v) => v,
            ConstantSpec::Derived(_) => c.strong_convexity,
        }
    }
}

fn penalized() -> ConstantSpec {
    ConstantSpec::Derived(Derived::Penalized)
}

fn from_problem() -> ConstantSpec {
    ConstantSpec::Derived(Derived::Problem)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AlgorithmSpec {
    Ssqp {
        schedule: SsqpScheduleSpec,
    },
    SsqpSkip {
        #[serde(default = "from_problem")]
        strong_convexity: ConstantSpec,
        #[serde(default = "penalized")]
        smoothness: ConstantSpec,
        #[serde(default)]
        kickstart: u64,
        #[serde(default)]
        gain: ControlGain,
    },
    Varas {
        regime: VarasRegime,
        #[serde(default = "penalized")]
        smoothness: ConstantSpec,
        #[serde(default = "from_problem")]
        strong_convexity: ConstantSpec,
    },
    PrimalDual {
        rule: StepRule,
        #[serde(default)]
        clip: Option<f64>,
    },
}

impl AlgorithmSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmSpec::Ssqp { .. } => "ssqp",
            AlgorithmSpec::SsqpSkip { .. } => "ssqp-skip",
            AlgorithmSpec::Varas { .. } => "varas",
            AlgorithmSpec::PrimalDual { .. } => "primal-dual",
        }
    }
}

/// SSQP stepsize rule. The fixed-horizon rule takes `T` from the stopping
/// rule; `delta0` defaults to `||x0 - x*||^2` and `sigma` to the problem's
/// noise constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum SsqpScheduleSpec {
    ConvexFixedHorizon {
        #[serde(default)]
        delta0: Option<f64>,
        #[serde(default)]
        sigma: Option<f64>,
        #[serde(default = "penalized")]
        smoothness: ConstantSpec,
    },
    ConvexAnytime {
        #[serde(default)]
        delta0: Option<f64>,
        #[serde(default)]
        sigma: Option<f64>,
        #[serde(default = "penalized")]
        smoothness: ConstantSpec,
    },
    StronglyConvex {
        #[serde(default = "from_problem")]
        strong_convexity: ConstantSpec,
        #[serde(default = "penalized")]
        smoothness: ConstantSpec,
    },
    Constant {
        step: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum GammaSpec {
    /// `factor * beta / nu` from the problem's Slater certificate.
    Certified {
        #[serde(default = "default_factor")]
        factor: f64,
    },
    Tuned {
        value: f64,
    },
}

fn default_factor() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSpec {
    /// No reference: gap and distance columns stay empty.
    None,
    /// Long deterministic full-gradient run on the penalty.
    #[default]
    Solve,
    /// Exact KKT enumeration (quadratic problems with affine constraints).
    Enumerate,
    Given {
        #[serde(default)]
        x_star: Option<Vec<f64>>,
        #[serde(default)]
        f_star: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialPoint {
    /// Straight line for the waypoint problem, the origin otherwise.
    #[default]
    Default,
    Zeros,
    /// The Slater point of the problem.
    Slater,
    Point(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOptions {
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default = "default_qp_tol")]
    pub qp_tol: f64,
    #[serde(default = "default_qp_sweeps")]
    pub qp_max_sweeps: usize,
    #[serde(default = "yes")]
    pub warm_start: bool,
    #[serde(default)]
    pub report_point: ReportPoint,
    #[serde(default)]
    pub count_checkpoints: bool,
}

fn default_batch() -> usize {
    1
}

fn default_qp_tol() -> f64 {
    1e-9
}

fn default_qp_sweeps() -> usize {
    10_000
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            batch: default_batch(),
            qp_tol: default_qp_tol(),
            qp_max_sweeps: default_qp_sweeps(),
            warm_start: true,
            report_point: ReportPoint::Auto,
            count_checkpoints: false,
        }
    }
}

impl BenchConfig {
    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        let cfg: BenchConfig = serde_json::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file, or the `config` field of a metadata file.
    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        let value = match value {
            serde_json::Value::Object(mut map) if map.contains_key("config") && map.contains_key("runs") => {
                map.remove("config").unwrap_or_default()
            }
            other => other,
        };
        let cfg: BenchConfig =
            serde_json::from_value(value).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let fail = |msg: &str| Err(BenchError::Config(msg.to_string()));
        if self.seeds.is_empty() {
            return fail("seed list is empty");
        }
        if self.checkpoint_stride == Some(0) {
            return fail("checkpoint stride must be positive");
        }
        if !(self.cost_model_m >= 1.0) || !self.cost_model_m.is_finite() {
            return fail("cost model M must be at least 1");
        }
        match self.gamma {
            GammaSpec::Certified { factor } if !(factor >= 1.0) || !factor.is_finite() => {
                return fail("certified gamma factor must be at least 1");
            }
            GammaSpec::Tuned { value } if !(value >= 0.0) || !value.is_finite() => {
                return fail("tuned gamma must be nonnegative and finite");
            }
            _ => {}
        }
        match (&self.algorithm, self.stop) {
            (AlgorithmSpec::Varas { .. }, StoppingRule::Epochs(_)) => {}
            (AlgorithmSpec::Varas { .. }, _) => return fail("varas stops after a number of epochs"),
            (_, StoppingRule::Epochs(_)) => return fail("epoch stopping applies to varas only"),
            _ => {}
        }
        if let AlgorithmSpec::Ssqp { schedule: SsqpScheduleSpec::ConvexFixedHorizon { .. } } = self.algorithm {
            if !matches!(self.stop, StoppingRule::Iterations(_)) {
                return fail("the fixed-horizon schedule needs an iteration stopping rule");
            }
        }
        if self.run.batch == 0 {
            return fail("batch size must be at least 1");
        }
        if let ProblemSpec::Spectral { components, spectrum, .. } = &self.problem {
            if !components.is_power_of_two() || *components < spectrum.len() || spectrum.is_empty() {
                return fail("spectral problem needs a power-of-two component count at least the dimension");
            }
        }
        Ok(())
    }

    /// Iterations (or epochs) the stopping rule allows; `None` for an SFO
    /// budget.
    pub fn horizon(&self) -> Option<u64> {
        match self.stop {
            StoppingRule::Iterations(t) | StoppingRule::Epochs(t) => Some(t),
            StoppingRule::SfoBudget(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "problem": {"kind": "spectral", "seed": 1, "components": 8, "spectrum": [1, 2], "halfspaces": 1},
        "algorithm": {"name": "ssqp", "schedule": {"mode": "constant", "step": 0.1}},
        "gamma": {"mode": "tuned", "value": 10},
        "seeds": [1, 2],
        "stop": {"iterations": 100}
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = BenchConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.reference, ReferenceSpec::Solve);
        assert_eq!(cfg.initial_point, InitialPoint::Default);
        assert_eq!(cfg.run, RunOptions::default());
        assert_eq!(cfg.cost_model_m, 1.0);
        assert!(!cfg.wall_clock);
        let back = serde_json::to_string(&cfg).unwrap();
        assert_eq!(BenchConfig::from_json(&back).unwrap(), cfg);
    }

    #[test]
    fn constants_parse_as_numbers_or_names() {
        let skip: AlgorithmSpec =
            serde_json::from_str(r#"{"name": "ssqp-skip", "smoothness": 3.5, "strong_convexity": "problem"}"#).unwrap();
        match skip {
            AlgorithmSpec::SsqpSkip { smoothness, strong_convexity, kickstart, .. } => {
                assert_eq!(smoothness, ConstantSpec::Value(3.5));
                assert_eq!(strong_convexity, ConstantSpec::Derived(Derived::Problem));
                assert_eq!(kickstart, 0);
            }
            other => panic!("{other:?}"),
        }
        let c = ProblemConstants {
            smoothness: 2.0,
            constraint_smoothness: 4.0,
            strong_convexity: 0.5,
            gradient_noise: 0.0,
        };
        assert_eq!(penalized().smoothness(&c, 3.0), 12.0);
        assert_eq!(penalized().smoothness(&c, 0.1), 2.0);
        assert_eq!(from_problem().strong_convexity(&c), 0.5);
    }

    #[test]
    fn schema_violations_are_config_errors() {
        let bad = [
            MINIMAL.replace("\"seeds\": [1, 2]", "\"seeds\": []"),
            MINIMAL.replace("\"iterations\": 100", "\"epochs\": 100"),
            MINIMAL.replace("\"kind\": \"spectral\"", "\"kind\": \"mystery\""),
            MINIMAL.replace("\"seeds\"", "\"unknown_field\": 1, \"seeds\""),
            MINIMAL.replace("\"components\": 8", "\"components\": 6"),
            MINIMAL.replace("\"value\": 10", "\"value\": -1"),
        ];
        for text in bad {
            assert!(matches!(BenchConfig::from_json(&text), Err(BenchError::Config(_))), "{text}");
        }
    }
}
