//! Trace analysis: calls to reach a threshold, rate slopes and the
//! wall-clock cost model.

use std::str::FromStr;

use serde::Serialize;
use ssqp_core::algorithms::RunTraceRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Gap,
    RelGap,
    DistSq,
    MaxViol,
    SumViol,
}

impl Metric {
    pub fn get(self, row: &RunTraceRow) -> Option<f64> {
        match self {
            Metric::Gap => row.gap,
            Metric::RelGap => row.rel_gap,
            Metric::DistSq => row.dist_sq,
            Metric::MaxViol => Some(row.max_viol),
            Metric::SumViol => Some(row.sum_viol),
        }
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gap" | "objective_gap" => Ok(Metric::Gap),
            "rel_gap" => Ok(Metric::RelGap),
            "dist_sq" => Ok(Metric::DistSq),
            "max_viol" => Ok(Metric::MaxViol),
            "sum_viol" | "sum_violation" => Ok(Metric::SumViol),
            other => Err(format!("unknown metric {other:?} (gap, rel_gap, dist_sq, max_viol, sum_viol)")),
        }
    }
}

/// First row of a trace with `metric <= eps`.
pub fn first_crossing(rows: &[RunTraceRow], metric: Metric, eps: f64) -> Option<&RunTraceRow> {
    rows.iter().find(|r| metric.get(r).is_some_and(|v| v <= eps))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdReport {
    pub metric: Metric,
    pub epsilon: f64,
    /// Means over the traces that crossed; `None` when none did.
    pub mean_sfo: Option<f64>,
    pub mean_qmo: Option<f64>,
    pub mean_wall: Option<f64>,
    pub crossed: usize,
    /// Traces that never reached the threshold.
    pub censored: usize,
}

pub fn calls_to_threshold(traces: &[Vec<RunTraceRow>], metric: Metric, eps: f64) -> ThresholdReport {
    let hits: Vec<&RunTraceRow> = traces.iter().filter_map(|t| first_crossing(t, metric, eps)).collect();
    let mean = |f: &dyn Fn(&RunTraceRow) -> f64| {
        (!hits.is_empty()).then(|| hits.iter().map(|r| f(r)).sum::<f64>() / hits.len() as f64)
    };
    ThresholdReport {
        metric,
        epsilon: eps,
        mean_sfo: mean(&|r| r.sfo as f64),
        mean_qmo: mean(&|r| r.qmo as f64),
        mean_wall: mean(&|r| r.wall),
        crossed: hits.len(),
        censored: traces.len() - hits.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// `log(metric)` against `log(iter)`.
    LogLog,
    /// `log(metric)` against `iter` (epochs).
    LogLinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// Rows with `iter >= iter_max / 10`.
    FinalDecade,
    All,
    From(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("need at least {needed} rows in the window, found {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("metric is missing or non-positive at iteration {iter} (divergence or exact convergence)")]
    NonPositive { iter: u64 },
}

pub const MIN_FIT_ROWS: usize = 10;

/// Least-squares line through `(x, log metric)` over the window.
pub fn slope_fit(rows: &[RunTraceRow], metric: Metric, mode: FitMode, window: Window) -> Result<SlopeFit, FitError> {
    let last = rows.iter().map(|r| r.iter).max().unwrap_or(0);
    let start = match window {
        Window::FinalDecade => last / 10,
        Window::All => 0,
        Window::From(s) => s,
    };
    let selected: Vec<&RunTraceRow> =
        rows.iter().filter(|r| r.iter >= start && (mode == FitMode::LogLinear || r.iter > 0)).collect();
    if selected.len() < MIN_FIT_ROWS {
        return Err(FitError::TooFewRows { needed: MIN_FIT_ROWS, found: selected.len() });
    }
    let mut points = Vec::with_capacity(selected.len());
    for r in selected {
        match metric.get(r) {
            Some(v) if v > 0.0 && v.is_finite() => {
                let x = match mode {
                    FitMode::LogLog => (r.iter as f64).ln(),
                    FitMode::LogLinear => r.iter as f64,
                };
                points.push((x, v.ln()));
            }
            _ => return Err(FitError::NonPositive { iter: r.iter }),
        }
    }
    Ok(least_squares_line(&points))
}

/// Ordinary least squares `y = slope * x + intercept` with its R^2.
pub fn least_squares_line(points: &[(f64, f64)]) -> SlopeFit {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    SlopeFit { slope, intercept, r_squared, points: points.len() }
}

/// Row-wise mean of a metric over traces checkpointed at the same
/// iterations. Rows missing the metric in any trace are dropped.
pub fn mean_trace(traces: &[Vec<RunTraceRow>], metric: Metric) -> Vec<RunTraceRow> {
    let Some(first) = traces.first() else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for (i, row) in first.iter().enumerate() {
        let values: Option<Vec<f64>> =
            traces.iter().map(|t| t.get(i).filter(|r| r.iter == row.iter).and_then(|r| metric.get(r))).collect();
        let Some(values) = values else { continue };
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let mut r = row.clone();
        match metric {
            Metric::Gap => r.gap = Some(mean),
            Metric::RelGap => r.rel_gap = Some(mean),
            Metric::DistSq => r.dist_sq = Some(mean),
            Metric::MaxViol => r.max_viol = mean,
            Metric::SumViol => r.sum_viol = mean,
        }
        out.push(r);
    }
    out
}

/// Model time `sfo + M * qmo`.
pub fn wall_clock_model(sfo: f64, qmo: f64, m: f64) -> f64 {
    sfo + m * qmo
}

/// The `M` at which two methods cost the same, solving
/// `sfo_a + M qmo_a = sfo_b + M qmo_b`. `None` when the QMO counts agree.
pub fn crossover_m(a: (f64, f64), b: (f64, f64)) -> Option<f64> {
    let dq = a.1 - b.1;
    (dq != 0.0).then(|| (b.0 - a.0) / dq)
}
