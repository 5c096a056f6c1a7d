use serde::{Deserialize, Serialize};

use super::{level, QuantileForecast, LEVEL_DENOM, N_LEVELS};
use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalSummary {
    /// Nominal coverage of the interval actually used on the level grid.
    pub nominal: f64,
    pub picp: f64,
    pub piaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalPoint {
    pub nominal: f64,
    pub picp: f64,
    pub piaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityPoint {
    pub level: f64,
    pub frequency: f64,
}

fn coverage(forecasts: &[QuantileForecast], obs: &[f64], lo: usize, hi: usize) -> (f64, f64) {
    let n = obs.len() as f64;
    let mut inside = 0usize;
    let mut width = 0.0;
    for (f, &y) in forecasts.iter().zip(obs) {
        let (a, b) = (f.at(lo), f.at(hi));
        if y >= a && y <= b {
            inside += 1;
        }
        width += b - a;
    }
    (inside as f64 / n, width / n)
}

/// Coverage and mean width of the central `(1 − alpha)` interval, using the
/// nearest grid levels to `alpha/2` and `1 − alpha/2`.
pub fn interval_diagnostics(
    forecasts: &[QuantileForecast],
    obs: &[f64],
    alpha: f64,
) -> Result<IntervalSummary> {
    if obs.is_empty() || forecasts.len() != obs.len() {
        return domain("interval diagnostics need equal, non-empty inputs");
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return domain(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    let k = (alpha / 2.0 * LEVEL_DENOM as f64).round() as usize;
    if k < 1 || k >= LEVEL_DENOM - k {
        return domain(format!("alpha {alpha} has no central interval on the level grid"));
    }
    let (lo, hi) = (k - 1, LEVEL_DENOM - k - 1);
    let (picp, piaw) = coverage(forecasts, obs, lo, hi);
    Ok(IntervalSummary {
        nominal: level(hi + 1) - level(lo + 1),
        picp,
        piaw,
    })
}

/// Coverage and width of every symmetric central interval on the grid,
/// ordered by increasing nominal coverage.
pub fn piaw_vs_picp_curve(forecasts: &[QuantileForecast], obs: &[f64]) -> Vec<IntervalPoint> {
    if obs.is_empty() || forecasts.len() != obs.len() {
        return Vec::new();
    }
    (1..=N_LEVELS / 2)
        .rev()
        .map(|k| {
            let (lo, hi) = (k - 1, LEVEL_DENOM - k - 1);
            let (picp, piaw) = coverage(forecasts, obs, lo, hi);
            IntervalPoint {
                nominal: level(hi + 1) - level(lo + 1),
                picp,
                piaw,
            }
        })
        .collect()
}

/// Fraction of observations at or below each forecast quantile.
pub fn reliability_diagram(forecasts: &[QuantileForecast], obs: &[f64]) -> Vec<ReliabilityPoint> {
    if obs.is_empty() || forecasts.len() != obs.len() {
        return Vec::new();
    }
    let n = obs.len() as f64;
    (0..N_LEVELS)
        .map(|k| {
            let hits = forecasts.iter().zip(obs).filter(|(f, &y)| y <= f.at(k)).count();
            ReliabilityPoint {
                level: level(k + 1),
                frequency: hits as f64 / n,
            }
        })
        .collect()
}
