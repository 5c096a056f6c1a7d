use serde::{Deserialize, Serialize};

use crate::censored_normal::CensoredNormalParams;
use crate::dataset::EnsembleStats;
use crate::error::{Error, Result};
use crate::normal;

/// Covariates of the boosted model, in column order.
pub const BOOSTED_COVARIATES: [&str; 3] = ["ctrl", "mean", "sd"];

/// Control, exchangeable mean and exchangeable standard deviation.
pub fn boosted_covariates(s: &EnsembleStats) -> Vec<f64> {
    vec![s.ctrl, s.mean, s.var.max(0.0).sqrt()]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    /// Step length applied to each selected update.
    pub nu: f64,
    pub max_iter: usize,
    /// Iterations without validation improvement before stopping.
    pub patience: usize,
    /// Boosting stops once no coefficient's score-test statistic `g²/I`
    /// reaches this value (χ²₁ critical value; 10.83 is the 0.999 quantile).
    pub score_threshold: f64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self { nu: 0.05, max_iter: 1000, patience: 20, score_threshold: 10.83 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoostStatus {
    /// No coefficient had a significant score statistic.
    Converged,
    /// Stopped at the validation minimum.
    EarlyStopped,
    MaxIterations,
    /// No update improved the validation loss; intercepts only.
    NoImprovement,
}

/// Linear predictors for μ and ln σ on standardized covariates. Index 0 of
/// each coefficient vector is the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedEmosModel {
    pub mu_coeffs: Vec<f64>,
    pub sigma_coeffs: Vec<f64>,
    pub covariate_names: Vec<String>,
    pub standardization: Vec<Standardization>,
    /// Iteration whose coefficients were kept.
    pub iterations_used: usize,
    /// Covariate names in order of first selection, prefixed `mu:` or `sigma:`.
    pub selection_order: Vec<String>,
    pub status: BoostStatus,
}

impl BoostedEmosModel {
    fn standardized(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.standardization)
            .map(|(v, s)| (v - s.mean) / s.sd)
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> Result<CensoredNormalParams> {
        if x.len() != self.standardization.len() {
            return Err(Error::Domain(format!(
                "expected {} covariates, got {}",
                self.standardization.len(),
                x.len()
            )));
        }
        let z = self.standardized(x);
        let (mu, log_sigma) = linear_predictors(&self.mu_coeffs, &self.sigma_coeffs, &z);
        CensoredNormalParams::new(mu, log_sigma.exp())
    }
}

fn linear_predictors(beta: &[f64], gamma: &[f64], z: &[f64]) -> (f64, f64) {
    let mut mu = beta[0];
    let mut ls = gamma[0];
    for (j, v) in z.iter().enumerate() {
        mu += beta[j + 1] * v;
        ls += gamma[j + 1] * v;
    }
    (mu, ls)
}

// Negative log-likelihood of one observation and the log-likelihood scores
// with respect to μ and ln σ.
fn nll_and_scores(mu: f64, log_sigma: f64, y: f64) -> (f64, f64, f64) {
    let sigma = log_sigma.exp();
    if y <= 0.0 {
        let a = -mu / sigma;
        let m = normal::mills_ratio(a);
        (-normal::log_cdf(a), -m / sigma, -m * a)
    } else if y >= 1.0 {
        let b = (mu - 1.0) / sigma;
        let m = normal::mills_ratio(b);
        (-normal::log_cdf(b), m / sigma, -m * b)
    } else {
        let z = (y - mu) / sigma;
        (0.5 * z * z + log_sigma + 0.918_938_533_204_672_7, z / sigma, z * z - 1.0)
    }
}

fn mean_nll(beta: &[f64], gamma: &[f64], xs: &[Vec<f64>], ys: &[f64]) -> f64 {
    let total: f64 = xs
        .iter()
        .zip(ys)
        .map(|(z, &y)| {
            let (mu, ls) = linear_predictors(beta, gamma, z);
            nll_and_scores(mu, ls, y).0
        })
        .sum();
    total / ys.len() as f64
}

// Per-coefficient mean score and Fisher information (1/σ² for μ, 2 for ln σ).
fn scores(beta: &[f64], gamma: &[f64], xs: &[Vec<f64>], ys: &[f64]) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
    let p = beta.len();
    let mut mu_side = vec![[0.0; 2]; p];
    let mut sigma_side = vec![[0.0; 2]; p];
    for (z, &y) in xs.iter().zip(ys) {
        let (mu, ls) = linear_predictors(beta, gamma, z);
        let (_, s_mu, s_ls) = nll_and_scores(mu, ls, y);
        let info_mu = (-2.0 * ls).exp();
        for j in 0..p {
            let x = if j == 0 { 1.0 } else { z[j - 1] };
            mu_side[j][0] += s_mu * x;
            mu_side[j][1] += info_mu * x * x;
            sigma_side[j][0] += s_ls * x;
            sigma_side[j][1] += 2.0 * x * x;
        }
    }
    (mu_side, sigma_side)
}

// Newton steps on the two intercepts with every other coefficient held fixed.
fn refit_intercepts(beta: &mut [f64], gamma: &mut [f64], xs: &[Vec<f64>], ys: &[f64], max_steps: usize) {
    for _ in 0..max_steps {
        let (m, s) = scores(beta, gamma, xs, ys);
        let step_mu = m[0][0] / m[0][1];
        let step_ls = (s[0][0] / s[0][1]).clamp(-0.5, 0.5);
        beta[0] += step_mu;
        gamma[0] += step_ls;
        if step_mu.abs() < 1e-10 && step_ls.abs() < 1e-10 {
            break;
        }
    }
}

fn standardize(rows: &[Vec<f64>]) -> Vec<Standardization> {
    let p = rows[0].len();
    let n = rows.len() as f64;
    (0..p)
        .map(|j| {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            Standardization { mean, sd: if sd > 1e-12 { sd } else { 1.0 } }
        })
        .collect()
}

/// Component-wise likelihood boosting for the censored normal.
///
/// Each iteration moves the single coefficient, on either the location or
/// the log-scale side, whose Fisher-scaled score statistic `g²/I` is largest,
/// by `nu · g / I`. Both intercepts are re-fitted by Newton steps after every
/// update, starting from the intercept-only maximum-likelihood fit. The kept
/// iteration minimizes the validation negative log-likelihood; boosting ends
/// early once every score statistic is below `score_threshold`.
pub fn fit_cn_emos_boosted(
    train: &[(Vec<f64>, f64)],
    val: &[(Vec<f64>, f64)],
    covariate_names: &[String],
    cfg: &BoostConfig,
) -> Result<BoostedEmosModel> {
    if train.len() < 2 || val.is_empty() {
        return Err(Error::InsufficientData("boosting needs training and validation cases".into()));
    }
    if !(cfg.nu >= 0.0 && cfg.nu <= 1.0) || cfg.patience == 0 || !(cfg.score_threshold >= 0.0) {
        return Err(Error::Config("boosting needs 0 ≤ nu ≤ 1, patience ≥ 1 and a non-negative score threshold".into()));
    }
    let p = covariate_names.len();
    if train.iter().chain(val).any(|(x, y)| x.len() != p || !y.is_finite() || x.iter().any(|v| !v.is_finite())) {
        return Err(Error::Domain(format!("every case needs {p} finite covariates and a finite observation")));
    }
    let raw: Vec<Vec<f64>> = train.iter().map(|(x, _)| x.clone()).collect();
    let std = standardize(&raw);
    let scale = |x: &[f64]| -> Vec<f64> { x.iter().zip(&std).map(|(v, s)| (v - s.mean) / s.sd).collect() };
    let xs: Vec<Vec<f64>> = raw.iter().map(|x| scale(x)).collect();
    let ys: Vec<f64> = train.iter().map(|(_, y)| *y).collect();
    let vxs: Vec<Vec<f64>> = val.iter().map(|(x, _)| scale(x)).collect();
    let vys: Vec<f64> = val.iter().map(|(_, y)| *y).collect();

    let mut beta = vec![0.0; p + 1];
    let mut gamma = vec![0.0; p + 1];
    let n = ys.len() as f64;
    beta[0] = ys.iter().sum::<f64>() / n;
    gamma[0] = (ys.iter().map(|y| (y - beta[0]).powi(2)).sum::<f64>() / (n - 1.0))
        .sqrt()
        .max(1e-3)
        .ln();
    refit_intercepts(&mut beta, &mut gamma, &xs, &ys, 100);

    let mut best = (beta.clone(), gamma.clone());
    let mut best_loss = mean_nll(&beta, &gamma, &vxs, &vys);
    let mut best_iter = 0;
    let mut since_best = 0;
    let mut order: Vec<String> = Vec::new();
    let mut best_order_len = 0;
    let mut status = BoostStatus::MaxIterations;

    for iter in 1..=cfg.max_iter {
        let (m, s) = scores(&beta, &gamma, &xs, &ys);
        let mut choice = (0usize, 0usize, -1.0f64);
        for (side, stats) in [&m, &s].into_iter().enumerate() {
            for (j, [g, info]) in stats.iter().enumerate() {
                if *info > 0.0 {
                    let stat = g * g / info;
                    if stat > choice.2 {
                        choice = (side, j, stat);
                    }
                }
            }
        }
        let (side, j, stat) = choice;
        if stat < cfg.score_threshold {
            status = BoostStatus::Converged;
            break;
        }
        let [g, info] = if side == 0 { m[j] } else { s[j] };
        let step = cfg.nu * g / info;
        if side == 0 {
            beta[j] += step;
        } else {
            gamma[j] += step;
        }
        refit_intercepts(&mut beta, &mut gamma, &xs, &ys, 3);
        if j > 0 {
            let tag = format!("{}:{}", if side == 0 { "mu" } else { "sigma" }, covariate_names[j - 1]);
            if !order.contains(&tag) {
                order.push(tag);
            }
        }
        let loss = mean_nll(&beta, &gamma, &vxs, &vys);
        if !loss.is_finite() {
            return Err(Error::Training(format!("non-finite validation likelihood at iteration {iter}")));
        }
        if loss < best_loss {
            best_loss = loss;
            best = (beta.clone(), gamma.clone());
            best_iter = iter;
            best_order_len = order.len();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                status = BoostStatus::EarlyStopped;
                break;
            }
        }
    }
    if best_iter == 0 {
        status = BoostStatus::NoImprovement;
    }
    order.truncate(best_order_len);
    let (mu_coeffs, sigma_coeffs) = best;
    Ok(BoostedEmosModel {
        mu_coeffs,
        sigma_coeffs,
        covariate_names: covariate_names.to_vec(),
        standardization: std,
        iterations_used: best_iter,
        selection_order: order,
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::censored_normal::quantile;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    // obs ~ CN(0.1 + 0.8·mean, 0.05) with three pure-noise covariates.
    fn mean_only(n: usize, seed: u64) -> Vec<(Vec<f64>, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let mean: f64 = rng.gen_range(0.0..1.0);
                let x = vec![
                    mean,
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                ];
                let p = CensoredNormalParams::new(0.1 + 0.8 * mean, 0.05).unwrap();
                (x, quantile(rng.gen_range(1e-9..1.0 - 1e-9), p).unwrap())
            })
            .collect()
    }

    #[test]
    fn scores_match_finite_differences() {
        for (mu, ls, y) in [(0.3, -2.0, 0.4), (0.1, -1.5, 0.0), (0.9, -1.0, 1.0), (-0.2, -2.5, 0.0)] {
            let (_, s_mu, s_ls) = nll_and_scores(mu, ls, y);
            let h = 1e-6;
            let d_mu = -(nll_and_scores(mu + h, ls, y).0 - nll_and_scores(mu - h, ls, y).0) / (2.0 * h);
            let d_ls = -(nll_and_scores(mu, ls + h, y).0 - nll_and_scores(mu, ls - h, y).0) / (2.0 * h);
            assert!((s_mu - d_mu).abs() < 1e-5 * d_mu.abs().max(1.0), "{s_mu} {d_mu}");
            assert!((s_ls - d_ls).abs() < 1e-5 * d_ls.abs().max(1.0), "{s_ls} {d_ls}");
        }
    }

    #[test]
    fn selects_mean_and_ignores_noise() {
        let train = mean_only(5000, 1);
        let val = mean_only(2000, 2);
        let m = fit_cn_emos_boosted(&train, &val, &names(&["mean", "n1", "n2", "n3"]), &BoostConfig::default())
            .unwrap();
        assert_eq!(m.selection_order.first().map(String::as_str), Some("mu:mean"));
        for j in 2..=4 {
            assert_eq!(m.mu_coeffs[j], 0.0, "{m:?}");
        }
        let p = m.predict(&[0.5, 0.0, 0.0, 0.0]).unwrap();
        assert!((p.mu - 0.5).abs() < 0.02, "{p:?}");
    }

    #[test]
    fn zero_step_keeps_intercepts_only() {
        let train = mean_only(300, 3);
        let val = mean_only(100, 4);
        let cfg = BoostConfig { nu: 0.0, ..Default::default() };
        let m = fit_cn_emos_boosted(&train, &val, &names(&["mean", "n1", "n2", "n3"]), &cfg).unwrap();
        assert!(m.mu_coeffs[1..].iter().chain(&m.sigma_coeffs[1..]).all(|&c| c == 0.0));
        assert_eq!(m.status, BoostStatus::NoImprovement);
    }

    #[test]
    fn unselected_columns_are_exactly_zero() {
        let train = mean_only(2000, 5);
        let val = mean_only(500, 6);
        let cfg = BoostConfig { max_iter: 3, ..Default::default() };
        let m = fit_cn_emos_boosted(&train, &val, &names(&["mean", "n1", "n2", "n3"]), &cfg).unwrap();
        let nonzero = m.mu_coeffs[1..].iter().chain(&m.sigma_coeffs[1..]).filter(|c| **c != 0.0).count();
        assert!(nonzero <= 3);
    }

    #[test]
    fn rejects_bad_inputs() {
        let train = mean_only(50, 7);
        let n = names(&["mean", "n1", "n2", "n3"]);
        assert!(fit_cn_emos_boosted(&train, &[], &n, &BoostConfig::default()).is_err());
        assert!(fit_cn_emos_boosted(&train, &train, &n[..2], &BoostConfig::default()).is_err());
        let bad = BoostConfig { nu: -1.0, ..Default::default() };
        assert!(fit_cn_emos_boosted(&train, &train, &n, &bad).is_err());
    }
}
