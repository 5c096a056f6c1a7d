//! Significance machinery: stationary block bootstrap intervals,
//! Diebold–Mariano tests and Benjamini–Hochberg correction.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::normal;

/// Time-ordered score samples of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub values: Vec<f64>,
    pub label: String,
}

impl ScoreSeries {
    pub fn new(values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return domain("score series is empty");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return domain("score series contains non-finite values");
        }
        Ok(Self { values, label: label.into() })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub lo: f64,
    pub hi: f64,
    pub mean: f64,
    /// Standard deviation of the bootstrap means.
    pub sd: f64,
    /// Average of the bootstrap means.
    pub bootstrap_mean: f64,
    /// Set for a constant series (zero-width interval).
    pub degenerate: bool,
}

/// Default mean block length ⌈n^{1/3}⌉.
pub fn default_block_length(n: usize) -> f64 {
    (n as f64).cbrt().ceil()
}

/// Gaussian interval `mean ± z·sd` from the standard deviation of
/// `n_samples` stationary-bootstrap means with geometric block lengths.
pub fn block_bootstrap_ci(
    s: &ScoreSeries,
    n_samples: usize,
    level: f64,
    mean_block_len: Option<f64>,
    seed: u64,
) -> Result<BootstrapCi> {
    let n = s.len();
    if n < 10 {
        return Err(Error::InsufficientData(format!("bootstrap needs at least 10 values, got {n}")));
    }
    if !(level > 0.0 && level < 1.0) || n_samples < 2 {
        return domain("bootstrap needs level in (0, 1) and at least two samples");
    }
    let block = mean_block_len.unwrap_or_else(|| default_block_length(n));
    if !(block >= 1.0) {
        return domain(format!("mean block length must be at least 1, got {block}"));
    }
    let mean = s.mean();
    if s.values.iter().all(|&v| v == s.values[0]) {
        return Ok(BootstrapCi { lo: mean, hi: mean, mean, sd: 0.0, bootstrap_mean: mean, degenerate: true });
    }
    // Prefix sums over the series laid out twice, for circular block sums.
    let mut prefix = Vec::with_capacity(2 * n + 1);
    prefix.push(0.0);
    for i in 0..2 * n {
        prefix.push(prefix[i] + s.values[i % n]);
    }
    let geom = Geometric::new(1.0 / block).map_err(|e| Error::Domain(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let mut filled = 0;
        let mut total = 0.0;
        while filled < n {
            let start = rng.gen_range(0..n);
            let len = ((geom.sample(&mut rng) + 1) as usize).min(n - filled).min(n);
            total += prefix[start + len] - prefix[start];
            filled += len;
        }
        means.push(total / n as f64);
    }
    let bmean = means.iter().sum::<f64>() / n_samples as f64;
    let sd = (means.iter().map(|m| (m - bmean).powi(2)).sum::<f64>() / (n_samples - 1) as f64).sqrt();
    let z = normal::inv_cdf(0.5 + level / 2.0);
    Ok(BootstrapCi { lo: mean - z * sd, hi: mean + z * sd, mean, sd, bootstrap_mean: bmean, degenerate: false })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    /// One-sided p-value; absent for a degenerate differential.
    pub p_value: Option<f64>,
    /// Set after multiple-testing correction.
    pub rejected: bool,
    pub degenerate: bool,
    pub label_a: String,
    pub label_b: String,
}

/// One-sided Diebold–Mariano test of H1 "`a` has lower mean score than `b`".
/// The long-run variance uses uniform autocovariance weights up to lag
/// ⌊n^{1/3}⌋, falling back to the plain variance if that estimate is not
/// positive.
pub fn dm_test(a: &ScoreSeries, b: &ScoreSeries) -> Result<TestResult> {
    if a.len() != b.len() {
        return domain(format!("DM test needs equal lengths, got {} and {}", a.len(), b.len()));
    }
    let n = a.len();
    let d: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let autocov = |k: usize| -> f64 { (k..n).map(|t| (d[t] - mean) * (d[t - k] - mean)).sum::<f64>() / n as f64 };
    let gamma0 = autocov(0);
    let mut result = TestResult {
        statistic: 0.0,
        p_value: None,
        rejected: false,
        degenerate: true,
        label_a: a.label.clone(),
        label_b: b.label.clone(),
    };
    // A differential that is constant up to rounding carries no information.
    let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(gamma0 > (64.0 * f64::EPSILON * scale).powi(2)) || n < 2 {
        return Ok(result);
    }
    let lag = ((n as f64).cbrt().floor() as usize).min(n - 1);
    let mut lrv = gamma0 + 2.0 * (1..=lag).map(autocov).sum::<f64>();
    if !(lrv > 0.0) {
        lrv = gamma0;
    }
    let stat = mean / (lrv / n as f64).sqrt();
    result.statistic = stat;
    result.p_value = Some(normal::cdf(stat));
    result.degenerate = false;
    Ok(result)
}

/// Step-up rule: reject every p ≤ p_(k*) with k* = max{k : p_(k) ≤ kα/m}.
pub fn benjamini_hochberg(p_values: &[f64], alpha: f64) -> Result<Vec<bool>> {
    if p_values.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return domain("p-values must lie in [0, 1]");
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p_values[i].total_cmp(&p_values[j]));
    let cutoff = (1..=m)
        .rev()
        .find(|&k| p_values[order[k - 1]] <= k as f64 * alpha / m as f64)
        .map(|k| p_values[order[k - 1]]);
    Ok(match cutoff {
        Some(c) => p_values.iter().map(|&p| p <= c).collect(),
        None => vec![false; m],
    })
}

/// Score series of every method for one (location, time) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmCell {
    pub key: String,
    pub series: BTreeMap<String, ScoreSeries>,
}

/// Rows are winners, columns losers: `proportions[i][j]` is the fraction of
/// cells where method `i` significantly beats method `j` after BH correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmMatrix {
    pub methods: Vec<String>,
    pub proportions: Vec<Vec<f64>>,
    /// Non-degenerate tests entering each proportion.
    pub tests: Vec<Vec<usize>>,
    pub degenerate: Vec<Vec<usize>>,
    /// Cells lacking a method or with mismatched lengths, per pair.
    pub skipped: Vec<Vec<usize>>,
}

pub fn dm_matrix(methods: &[String], cells: &[DmCell], alpha: f64) -> Result<DmMatrix> {
    let k = methods.len();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j))).collect();
    let outcomes: Vec<Result<(usize, usize, f64, usize, usize, usize)>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let mut ps = Vec::new();
            let (mut degenerate, mut skipped) = (0, 0);
            for cell in cells {
                match (cell.series.get(&methods[i]), cell.series.get(&methods[j])) {
                    (Some(a), Some(b)) if a.len() == b.len() => {
                        let t = dm_test(a, b)?;
                        match t.p_value {
                            Some(p) => ps.push(p),
                            None => degenerate += 1,
                        }
                    }
                    _ => skipped += 1,
                }
            }
            let rejected = benjamini_hochberg(&ps, alpha)?.iter().filter(|&&r| r).count();
            let prop = if ps.is_empty() { 0.0 } else { rejected as f64 / ps.len() as f64 };
            Ok((i, j, prop, ps.len(), degenerate, skipped))
        })
        .collect();
    let mut m = DmMatrix {
        methods: methods.to_vec(),
        proportions: vec![vec![0.0; k]; k],
        tests: vec![vec![0; k]; k],
        degenerate: vec![vec![0; k]; k],
        skipped: vec![vec![0; k]; k],
    };
    for o in outcomes {
        let (i, j, prop, tests, degenerate, skipped) = o?;
        m.proportions[i][j] = prop;
        m.tests[i][j] = tests;
        m.degenerate[i][j] = degenerate;
        m.skipped[i][j] = skipped;
    }
    Ok(m)
}
