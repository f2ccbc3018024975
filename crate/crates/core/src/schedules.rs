//! Stepsize, skip-probability and epoch-parameter sequences.

use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::math;
use crate::Result;

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(alloc::format!("{name} must be positive and finite, got {v}")))
    }
}

/// Stepsize rules for SSQP.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(tag = "mode", rename_all = "snake_case"))]
pub enum SsqpSchedule {
    /// `eta_t = eta0 / sqrt(T)` for a horizon `T` fixed in advance, with
    /// `eta0 = min{sqrt(delta0) / (2 sigma), 1 / (4 L)}`.
    ConvexFixedHorizon { horizon: u64, delta0: f64, sigma: f64, smoothness: f64 },
    /// `eta_t = eta0 / sqrt(t + 1)` with the same `eta0`.
    ConvexAnytime { delta0: f64, sigma: f64, smoothness: f64 },
    /// `eta_t = 2 / (mu (t + floor(16 kappa) + 1))`, `kappa = L / mu`.
    StronglyConvex { strong_convexity: f64, smoothness: f64 },
    /// A tuned constant stepsize.
    Constant { step: f64 },
}

fn convex_eta0(delta0: f64, sigma: f64, smoothness: f64) -> f64 {
    let smooth = 1.0 / (4.0 * smoothness);
    if sigma == 0.0 {
        smooth
    } else {
        (math::sqrt(delta0) / (2.0 * sigma)).min(smooth)
    }
}

impl SsqpSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SsqpSchedule::ConvexFixedHorizon { horizon, delta0, sigma, smoothness } => {
                if horizon == 0 {
                    return Err(invalid("fixed-horizon schedule needs T >= 1"));
                }
                positive("delta0", delta0)?;
                if !(sigma >= 0.0) {
                    return Err(invalid("sigma must be nonnegative"));
                }
                positive("L", smoothness)
            }
            SsqpSchedule::ConvexAnytime { delta0, sigma, smoothness } => {
                positive("delta0", delta0)?;
                if !(sigma >= 0.0) {
                    return Err(invalid("sigma must be nonnegative"));
                }
                positive("L", smoothness)
            }
            SsqpSchedule::StronglyConvex { strong_convexity, smoothness } => {
                positive("mu", strong_convexity)
                    .map_err(|_| invalid("strongly convex schedule requested with mu = 0"))?;
                positive("L", smoothness)?;
                if smoothness < strong_convexity {
                    return Err(invalid("strongly convex schedule needs L >= mu"));
                }
                Ok(())
            }
            SsqpSchedule::Constant { step } => positive("step", step),
        }
    }

    /// `eta0` of the convex rules; the first stepsize otherwise.
    pub fn eta0(&self) -> f64 {
        match *self {
            SsqpSchedule::ConvexFixedHorizon { delta0, sigma, smoothness, .. }
            | SsqpSchedule::ConvexAnytime { delta0, sigma, smoothness } => convex_eta0(delta0, sigma, smoothness),
            _ => self.stepsize(0),
        }
    }

    /// Offset `floor(16 kappa)` of the strongly convex rule.
    pub fn offset(&self) -> u64 {
        match *self {
            SsqpSchedule::StronglyConvex { strong_convexity, smoothness } => {
                math::floor(16.0 * smoothness / strong_convexity) as u64
            }
            _ => 0,
        }
    }

    pub fn stepsize(&self, t: u64) -> f64 {
        match *self {
            SsqpSchedule::ConvexFixedHorizon { horizon, .. } => self.eta0() / math::sqrt(horizon as f64),
            SsqpSchedule::ConvexAnytime { .. } => self.eta0() / math::sqrt((t + 1) as f64),
            SsqpSchedule::StronglyConvex { strong_convexity, .. } => {
                2.0 / (strong_convexity * (t + self.offset() + 1) as f64)
            }
            SsqpSchedule::Constant { step } => step,
        }
    }
}

/// Stepsize and skip probability for SSQP-Skip.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SkipSchedule {
    pub strong_convexity: f64,
    pub smoothness: f64,
    /// Iterations `t < kickstart` always solve the QP.
    #[cfg_attr(feature = "serde", serde(default))]
    pub kickstart: u64,
}

impl SkipSchedule {
    pub fn new(strong_convexity: f64, smoothness: f64, kickstart: u64) -> Result<Self> {
        let s = SkipSchedule { strong_convexity, smoothness, kickstart };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        positive("mu", self.strong_convexity)?;
        positive("L", self.smoothness)?;
        if self.smoothness < self.strong_convexity {
            return Err(invalid("skip schedule needs L >= mu"));
        }
        Ok(())
    }

    pub fn kappa(&self) -> f64 {
        self.smoothness / self.strong_convexity
    }

    /// `omega = floor(4 kappa^2)`.
    pub fn omega(&self) -> u64 {
        let k = self.kappa();
        math::floor(4.0 * k * k) as u64
    }

    /// Formula probability, ignoring the kickstart.
    pub fn probability(&self, t: u64) -> f64 {
        math::sqrt(2.0 * self.strong_convexity * self.stepsize(t)).min(1.0)
    }

    pub fn stepsize(&self, t: u64) -> f64 {
        2.0 / (self.strong_convexity * (t + 1 + self.omega()) as f64)
    }

    /// `(eta_t, p_t)`, with `p_t = 1` during the kickstart.
    pub fn parameters(&self, t: u64) -> (f64, f64) {
        let p = if t < self.kickstart { 1.0 } else { self.probability(t) };
        (self.stepsize(t), p)
    }

    /// `sum_{t < horizon} p_t` by the formula, the expected QMO count without
    /// kickstart.
    pub fn expected_qmo(&self, horizon: u64) -> f64 {
        (0..horizon).map(|t| self.parameters(t).1).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum VarasRegime {
    Convex,
    StronglyConvex,
}

/// Which weight sequence averages the inner iterates of an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThetaForm {
    /// `(beta/alpha)(alpha + omega)` for `t < T_s`, `beta/alpha` at `t = T_s`.
    Uniform,
    /// `Gamma_{t-1} - (1 - alpha - omega) Gamma_t` for `t < T_s`,
    /// `Gamma_{t-1}` at `t = T_s`, where `Gamma_t = (1 + mu beta)^t`.
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochParams {
    pub alpha: f64,
    pub beta: f64,
    pub omega: f64,
    pub inner_steps: u64,
}

/// Epoch parameters of VARAS.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct VarasSchedule {
    pub components: usize,
    pub regime: VarasRegime,
    /// `L_gamma = L_f + gamma L_g` (or a tuned value).
    pub smoothness: f64,
    /// `mu`, ignored in the convex regime.
    #[cfg_attr(feature = "serde", serde(default))]
    pub strong_convexity: f64,
}

impl VarasSchedule {
    pub fn new(components: usize, regime: VarasRegime, smoothness: f64, strong_convexity: f64) -> Result<Self> {
        let s = VarasSchedule { components, regime, smoothness, strong_convexity };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.components == 0 {
            return Err(invalid("VARAS needs a finite sum (n >= 1)"));
        }
        positive("L_gamma", self.smoothness)?;
        if self.regime == VarasRegime::StronglyConvex {
            positive("mu", self.strong_convexity)
                .map_err(|_| invalid("strongly convex VARAS requested with mu = 0"))?;
        }
        Ok(())
    }

    /// `s0 = floor(log2 n) + 1`.
    pub fn s0(&self) -> u64 {
        u64::from(usize::BITS - self.components.leading_zeros())
    }

    pub fn kappa(&self) -> f64 {
        self.smoothness / self.strong_convexity
    }

    fn mu(&self) -> f64 {
        match self.regime {
            VarasRegime::Convex => 0.0,
            VarasRegime::StronglyConvex => self.strong_convexity,
        }
    }

    pub fn epoch_params(&self, s: u64) -> EpochParams {
        let s0 = self.s0();
        let s = s.max(1);
        let inner_steps = 1u64 << (s.min(s0) - 1);
        let alpha = if s <= s0 {
            0.5
        } else {
            let decay = 2.0 / ((s - s0) as f64 + 4.0);
            match self.regime {
                VarasRegime::Convex => decay.min(0.5),
                VarasRegime::StronglyConvex => {
                    let floor = math::sqrt(self.components as f64 / (3.0 * self.kappa())).min(0.5);
                    decay.max(floor).min(0.5)
                }
            }
        };
        let beta = 1.0 / (3.0 * alpha * self.smoothness);
        let params = EpochParams { alpha, beta, omega: 0.5, inner_steps };
        debug_assert!(params.alpha > 0.0 && params.alpha + params.omega <= 1.0);
        params
    }

    /// Weight form used in epoch `s`.
    pub fn theta_form(&self, s: u64) -> ThetaForm {
        if self.regime == VarasRegime::Convex {
            return ThetaForm::Uniform;
        }
        let s0 = self.s0();
        let n = self.components as f64;
        let kappa = self.kappa();
        let early = s <= s0;
        let transient = (s as f64) <= s0 as f64 + math::sqrt(12.0 * kappa / n) - 4.0 && n < 0.75 * kappa;
        if early || transient {
            ThetaForm::Uniform
        } else {
            ThetaForm::Geometric
        }
    }

    /// `theta_t` for `1 <= t <= T_s`. The geometric form can overflow for
    /// long epochs; [`VarasSchedule::epoch_weights`] is the safe variant.
    pub fn theta(&self, s: u64, t: u64) -> Result<f64> {
        let p = self.epoch_params(s);
        if t == 0 || t > p.inner_steps {
            return Err(invalid(alloc::format!("inner index {t} outside 1..={}", p.inner_steps)));
        }
        Ok(self.theta_scaled(s, t, 0.0))
    }

    /// `theta_t` divided by `exp(log_scale)` (geometric form only).
    fn theta_scaled(&self, s: u64, t: u64, log_scale: f64) -> f64 {
        let p = self.epoch_params(s);
        let last = t == p.inner_steps;
        match self.theta_form(s) {
            ThetaForm::Uniform => {
                if last {
                    p.beta / p.alpha
                } else {
                    p.beta / p.alpha * (p.alpha + p.omega)
                }
            }
            ThetaForm::Geometric => {
                let log_growth = math::ln_1p(self.mu() * p.beta);
                let prev = math::exp((t - 1) as f64 * log_growth - log_scale);
                if last {
                    prev
                } else {
                    prev * (1.0 - (1.0 - p.alpha - p.omega) * math::exp(log_growth))
                }
            }
        }
    }

    /// All weights of epoch `s`, rescaled by a common factor so the largest
    /// is of order one.
    pub fn epoch_weights(&self, s: u64) -> Vec<f64> {
        let p = self.epoch_params(s);
        let log_scale = match self.theta_form(s) {
            ThetaForm::Uniform => 0.0,
            ThetaForm::Geometric => (p.inner_steps - 1) as f64 * math::ln_1p(self.mu() * p.beta),
        };
        (1..=p.inner_steps).map(|t| self.theta_scaled(s, t, log_scale)).collect()
    }
}
