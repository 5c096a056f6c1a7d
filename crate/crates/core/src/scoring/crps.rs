use serde::{Deserialize, Serialize};

use super::losses::pinball_unchecked;
use super::{level, level_index, QuantileForecast, N_LEVELS};
use crate::error::{domain, Result};

/// CRPS of the empirical distribution of `values` against `y`:
/// mean |f − y| minus half the mean pairwise distance.
pub fn crps_ensemble(values: &[f64], y: f64) -> Result<f64> {
    if values.is_empty() {
        return domain("CRPS of an empty ensemble is undefined");
    }
    if values.windows(2).all(|w| w[0] <= w[1]) {
        Ok(crps_sorted(values, y))
    } else {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Ok(crps_sorted(&v, y))
    }
}

pub(crate) fn crps_sorted(sorted: &[f64], y: f64) -> f64 {
    let k = sorted.len() as f64;
    let mut abs_err = 0.0;
    let mut spread = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        abs_err += (x - y).abs();
        spread += (2.0 * (i as f64 + 1.0) - k - 1.0) * x;
    }
    abs_err / k - spread / (k * k)
}

/// Reliability, resolution and uncertainty such that
/// `rel − res + unc` equals the mean empirical CRPS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrpsDecomposition {
    pub rel: f64,
    pub res: f64,
    pub unc: f64,
    /// Mean empirical CRPS over the cases.
    pub crps: f64,
}

/// Hersbach-style decomposition over forecasts with a common number of
/// sorted values.
pub fn crps_decomposition(forecasts: &[QuantileForecast], obs: &[f64]) -> Result<CrpsDecomposition> {
    let views: Vec<&[f64]> = forecasts.iter().map(|f| f.values()).collect();
    decompose(&views, obs)
}

pub(crate) fn decompose(forecasts: &[&[f64]], obs: &[f64]) -> Result<CrpsDecomposition> {
    if forecasts.len() != obs.len() {
        return domain(format!(
            "{} forecasts but {} observations",
            forecasts.len(),
            obs.len()
        ));
    }
    if obs.len() < 2 {
        return domain("decomposition needs at least two cases");
    }
    let k = forecasts[0].len();
    if k == 0 || forecasts.iter().any(|f| f.len() != k) {
        return domain("all forecasts must have the same non-zero size");
    }
    let n = obs.len() as f64;
    // alpha[i], beta[i] for bins i = 0..=k; bin i lies between x_i and x_{i+1}
    // (1-based members), bins 0 and k are the outlier bins.
    let mut alpha = vec![0.0; k + 1];
    let mut beta = vec![0.0; k + 1];
    let mut below = 0.0;
    let mut above = 0.0;
    let mut crps_sum = 0.0;
    for (f, &y) in forecasts.iter().zip(obs) {
        if f.windows(2).any(|w| w[1] < w[0]) {
            return domain("decomposition needs sorted forecast values");
        }
        crps_sum += crps_sorted(f, y);
        if y < f[0] {
            beta[0] += f[0] - y;
            below += 1.0;
        }
        if y > f[k - 1] {
            alpha[k] += y - f[k - 1];
            above += 1.0;
        }
        for i in 1..k {
            let (lo, hi) = (f[i - 1], f[i]);
            if y > hi {
                alpha[i] += hi - lo;
            } else if y < lo {
                beta[i] += hi - lo;
            } else {
                alpha[i] += y - lo;
                beta[i] += hi - y;
            }
        }
    }
    let mut rel = 0.0;
    let mut pot = 0.0;
    for i in 0..=k {
        let a = alpha[i] / n;
        let b = beta[i] / n;
        let p = i as f64 / k as f64;
        let (g, o) = if i == 0 {
            let o = below / n;
            (if o > 0.0 { b / o } else { 0.0 }, o)
        } else if i == k {
            let o = 1.0 - above / n;
            (if o < 1.0 { a / (1.0 - o) } else { 0.0 }, o)
        } else {
            let g = a + b;
            (g, if g > 0.0 { b / g } else { 0.0 })
        };
        rel += g * (o - p) * (o - p);
        pot += g * o * (1.0 - o);
    }
    let unc = uncertainty(obs);
    Ok(CrpsDecomposition {
        rel,
        res: unc - pot,
        unc,
        crps: crps_sum / n,
    })
}

// CRPS of the sample climatology, ½·E|Y − Y′| over the observations.
fn uncertainty(obs: &[f64]) -> f64 {
    let mut sorted = obs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let s: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, &y)| (2.0 * (i as f64 + 1.0) - n - 1.0) * y)
        .sum();
    s / (n * n)
}

/// Quantile score ρ_τ(y − q_τ) at a grid level.
pub fn quantile_score(q: &QuantileForecast, y: f64, tau: f64) -> Result<f64> {
    let k = match level_index(tau) {
        Some(k) => k,
        None => return domain(format!("level {tau} is not on the quantile grid")),
    };
    Ok(pinball_unchecked(tau, y - q.at(k)))
}

/// Mean quantile score at every grid level: `(level, mean QS)`.
pub fn qs_by_level(forecasts: &[QuantileForecast], obs: &[f64]) -> Result<Vec<(f64, f64)>> {
    if forecasts.len() != obs.len() || obs.is_empty() {
        return domain("quantile scores need equal, non-empty forecast and observation lists");
    }
    let n = obs.len() as f64;
    Ok((0..N_LEVELS)
        .map(|k| {
            let tau = level(k + 1);
            let s: f64 = forecasts
                .iter()
                .zip(obs)
                .map(|(f, &y)| pinball_unchecked(tau, y - f.at(k)))
                .sum();
            (tau, s / n)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMetrics {
    pub mae: f64,
    pub rmse: f64,
    pub mbe: f64,
}

/// MAE of the medians; RMSE and MBE of the means.
pub fn point_metrics(median: &[f64], mean: &[f64], obs: &[f64]) -> Result<PointMetrics> {
    if median.len() != obs.len() || mean.len() != obs.len() {
        return domain("point metrics need equal-length inputs");
    }
    if obs.is_empty() {
        return domain("point metrics need at least one case");
    }
    let n = obs.len() as f64;
    let mae = median.iter().zip(obs).map(|(m, y)| (m - y).abs()).sum::<f64>() / n;
    let mse = mean.iter().zip(obs).map(|(m, y)| (m - y).powi(2)).sum::<f64>() / n;
    let mbe = mean.iter().zip(obs).map(|(m, y)| m - y).sum::<f64>() / n;
    Ok(PointMetrics { mae, rmse: mse.sqrt(), mbe })
}

/// `1 − score / reference`.
pub fn skill_score(score: f64, reference: f64) -> Result<f64> {
    if !(reference > 0.0) {
        return domain(format!("reference score must be positive, got {reference}"));
    }
    Ok(1.0 - score / reference)
}
