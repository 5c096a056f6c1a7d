//! Verification functionals for quantile and ensemble forecasts.

pub(crate) mod crps;
mod intervals;
pub(crate) mod losses;
mod rank;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

pub use crps::{
    crps_decomposition, crps_ensemble, point_metrics, qs_by_level, quantile_score, skill_score,
    CrpsDecomposition, PointMetrics,
};
pub use intervals::{
    interval_diagnostics, piaw_vs_picp_curve, reliability_diagram, IntervalPoint,
    IntervalSummary, ReliabilityPoint,
};
pub use losses::{huber_pinball, huber_pinball_with_derivative, pinball};
pub use rank::{rank_histogram, RankHistogram};

/// Number of quantile levels in every forecast.
pub const N_LEVELS: usize = 51;

/// Denominator of the level grid: τ_k = k / 52.
pub const LEVEL_DENOM: usize = N_LEVELS + 1;

/// The level τ_k = k/52 for k = 1…51.
pub fn level(k: usize) -> f64 {
    k as f64 / LEVEL_DENOM as f64
}

/// All 51 levels in ascending order.
pub fn level_grid() -> Vec<f64> {
    (1..=N_LEVELS).map(level).collect()
}

/// Grid index (0-based) of `tau`, if it lies on the grid.
pub fn level_index(tau: f64) -> Option<usize> {
    let k = (tau * LEVEL_DENOM as f64).round();
    if (1.0..=N_LEVELS as f64).contains(&k) && (tau - k / LEVEL_DENOM as f64).abs() < 1e-9 {
        Some(k as usize - 1)
    } else {
        None
    }
}

/// 51 non-decreasing values at the fixed level grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileForecast {
    values: Vec<f64>,
}

impl QuantileForecast {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != N_LEVELS {
            return domain(format!("quantile forecast needs {N_LEVELS} values, got {}", values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return domain("quantile forecast contains non-finite values");
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return domain("quantile forecast values cross");
        }
        Ok(Self { values })
    }

    /// Sorts `values` first (rearrangement repair).
    pub fn from_unsorted(mut values: Vec<f64>) -> Result<Self> {
        values.sort_by(f64::total_cmp);
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn levels(&self) -> Vec<f64> {
        level_grid()
    }

    /// Value at grid index `k` (0-based).
    pub fn at(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn median(&self) -> f64 {
        self.values[N_LEVELS / 2]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / N_LEVELS as f64
    }

    /// Every value multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_layout() {
        let g = level_grid();
        assert_eq!(g.len(), 51);
        assert!((g[0] - 1.0 / 52.0).abs() < 1e-15);
        assert!((g[25] - 0.5).abs() < 1e-15);
        assert!((g[50] - g[0] - 50.0 / 52.0).abs() < 1e-15);
        assert_eq!(level_index(0.5), Some(25));
        assert_eq!(level_index(0.51), None);
    }

    #[test]
    fn forecast_invariants() {
        assert!(QuantileForecast::new(vec![0.0; 50]).is_err());
        let mut v: Vec<f64> = (0..51).map(|i| i as f64 / 50.0).collect();
        assert!(QuantileForecast::new(v.clone()).is_ok());
        v.swap(3, 4);
        assert!(QuantileForecast::new(v.clone()).is_err());
        let q = QuantileForecast::from_unsorted(v).unwrap();
        assert!((q.median() - 0.5).abs() < 1e-15);
    }
}
