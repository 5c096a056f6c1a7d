//! Censored-normal EMOS: affine links from ensemble statistics to the
//! location and log-scale of a doubly censored normal, fitted by minimum mean
//! CRPS, plus a boosted variant with covariate selection.

mod boosted;
mod nelder_mead;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::censored_normal::{crps_value_and_gradient, CensoredNormalParams};
use crate::dataset::{ensemble_stats, Dataset, EnsembleStats};
use crate::error::{Error, Result};

pub use boosted::{
    boosted_covariates, fit_cn_emos_boosted, BoostConfig, BoostStatus, BoostedEmosModel,
    Standardization, BOOSTED_COVARIATES,
};
pub use nelder_mead::{Minimum, NelderMead};

/// Smallest ensemble variance used in the scale link.
pub const VARIANCE_FLOOR: f64 = 1e-10;

/// Fewest training pairs accepted by [`fit_cn_emos`].
pub const MIN_TRAINING_PAIRS: usize = 30;

/// μ = a0 + a1·ctrl + a2·mean, σ = exp(b0 + b1·ln S²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmosCoefficients {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub b0: f64,
    pub b1: f64,
}

impl EmosCoefficients {
    pub const DEFAULT_INIT: Self = Self { a0: 0.0, a1: 0.5, a2: 0.5, b0: -2.0, b1: 0.5 };

    pub fn to_array(self) -> [f64; 5] {
        [self.a0, self.a1, self.a2, self.b0, self.b1]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self { a0: v[0], a1: v[1], a2: v[2], b0: v[3], b1: v[4] }
    }

    fn link(self, s: &EnsembleStats) -> (f64, f64) {
        let mu = self.a0 + self.a1 * s.ctrl + self.a2 * s.mean;
        let sigma = (self.b0 + self.b1 * s.var.max(VARIANCE_FLOOR).ln()).exp();
        (mu, sigma)
    }
}

impl Default for EmosCoefficients {
    fn default() -> Self {
        Self::DEFAULT_INIT
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    /// Iteration cap reached; the best coefficients found are returned.
    MaxIterations,
    /// All observations equal; the scale is unidentified.
    Degenerate,
    /// Too few cases for its own fit; the pooled coefficients are used.
    PooledFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmosFit {
    pub coefficients: EmosCoefficients,
    pub status: FitStatus,
    pub iterations: usize,
    pub mean_crps: f64,
    pub n_cases: usize,
}

/// Predictive law for one case.
pub fn predict_cn_emos(c: EmosCoefficients, s: &EnsembleStats) -> Result<CensoredNormalParams> {
    let (mu, sigma) = c.link(s);
    CensoredNormalParams::new(mu, sigma)
}

/// Mean closed-form CRPS of the coefficients on `(stats, obs)` pairs;
/// infinite when a scale leaves the positive finite range.
pub fn mean_crps(c: EmosCoefficients, data: &[(EnsembleStats, f64)]) -> f64 {
    let mut total = 0.0;
    for (s, y) in data {
        let (mu, sigma) = c.link(s);
        if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) {
            return f64::INFINITY;
        }
        total += crps_value_and_gradient(mu, sigma, *y).0;
    }
    total / data.len() as f64
}

/// Fits the five link coefficients by Nelder–Mead on the mean CRPS. The
/// optimizer is restarted once from its first solution.
pub fn fit_cn_emos(data: &[(EnsembleStats, f64)], init: EmosCoefficients) -> Result<EmosFit> {
    fit_with(data, init, &NelderMead::default())
}

pub fn fit_with(data: &[(EnsembleStats, f64)], init: EmosCoefficients, nm: &NelderMead) -> Result<EmosFit> {
    if data.len() < MIN_TRAINING_PAIRS {
        return Err(Error::InsufficientData(format!(
            "EMOS needs at least {MIN_TRAINING_PAIRS} training pairs, got {}",
            data.len()
        )));
    }
    if data.iter().any(|(s, y)| !(s.ctrl.is_finite() && s.mean.is_finite() && s.var.is_finite() && y.is_finite())) {
        return Err(Error::Domain("non-finite EMOS training pair".into()));
    }
    let objective = |x: &[f64]| mean_crps(EmosCoefficients::from_slice(x), data);
    let first = nm.minimize(objective, &init.to_array());
    let second = nm.minimize(objective, &first.x);
    let best = if second.value <= first.value { &second } else { &first };
    let degenerate = data.iter().all(|(_, y)| *y == data[0].1);
    let status = if degenerate {
        FitStatus::Degenerate
    } else if second.converged {
        FitStatus::Converged
    } else {
        FitStatus::MaxIterations
    };
    Ok(EmosFit {
        coefficients: EmosCoefficients::from_slice(&best.x),
        status,
        iterations: first.iterations + second.iterations,
        mean_crps: best.value,
        n_cases: data.len(),
    })
}

/// One EMOS fit per lead time plus the pooled fit used for sparse slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmosPerLeadTime {
    pub pooled: EmosFit,
    pub slots: BTreeMap<u32, EmosFit>,
}

impl EmosPerLeadTime {
    /// Coefficients for a lead time, falling back to the pooled fit.
    pub fn coefficients(&self, lead_time: u32) -> EmosCoefficients {
        self.slots
            .get(&lead_time)
            .map_or(self.pooled.coefficients, |f| f.coefficients)
    }
}

pub fn stats_and_obs(d: &Dataset) -> Vec<(EnsembleStats, f64)> {
    d.cases.iter().map(|c| (ensemble_stats(c), c.observation)).collect()
}

/// Fits every lead-time group in parallel. Groups below
/// [`MIN_TRAINING_PAIRS`] reuse the pooled coefficients and are flagged.
pub fn fit_emos_per_lead_time(train: &Dataset) -> Result<EmosPerLeadTime> {
    let all = stats_and_obs(train);
    let pooled = fit_cn_emos(&all, EmosCoefficients::DEFAULT_INIT)?;
    let mut groups: BTreeMap<u32, Vec<(EnsembleStats, f64)>> = BTreeMap::new();
    for (c, pair) in train.cases.iter().zip(all) {
        groups.entry(c.lead_time).or_default().push(pair);
    }
    let fits: Vec<(u32, Result<EmosFit>)> = groups
        .into_par_iter()
        .map(|(lead, data)| {
            let fit = if data.len() < MIN_TRAINING_PAIRS {
                Ok(EmosFit {
                    coefficients: pooled.coefficients,
                    status: FitStatus::PooledFallback,
                    iterations: 0,
                    mean_crps: mean_crps(pooled.coefficients, &data),
                    n_cases: data.len(),
                })
            } else {
                fit_cn_emos(&data, pooled.coefficients)
            };
            (lead, fit)
        })
        .collect();
    let mut slots = BTreeMap::new();
    for (lead, fit) in fits {
        slots.insert(lead, fit?);
    }
    Ok(EmosPerLeadTime { pooled, slots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::censored_normal::{crps_closed_form, quantile};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stats(ctrl: f64, mean: f64, var: f64) -> EnsembleStats {
        EnsembleStats { ctrl, mean, var }
    }

    pub(crate) fn synthetic_pairs(c: EmosCoefficients, n: usize, seed: u64) -> Vec<(EnsembleStats, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let mean: f64 = rng.gen_range(0.05..0.95);
                let ctrl = (mean + rng.gen_range(-0.1..0.1)).clamp(0.0, 1.0);
                let var = rng.gen_range(0.0005..0.03);
                let s = stats(ctrl, mean, var);
                let p = predict_cn_emos(c, &s).unwrap();
                let y = quantile(rng.gen_range(1e-12..1.0 - 1e-12), p).unwrap();
                (s, y)
            })
            .collect()
    }

    #[test]
    fn link_examples() {
        let c = EmosCoefficients { a0: 0.0, a1: 1.0, a2: 0.0, b0: 0.0, b1: 0.0 };
        assert_eq!(predict_cn_emos(c, &stats(0.4, 0.9, 0.01)).unwrap().mu, 0.4);

        let c = EmosCoefficients { a0: 0.0, a1: 0.0, a2: 1.0, b0: 0.0, b1: 0.5 };
        let p = predict_cn_emos(c, &stats(0.1, 0.6, 0.04)).unwrap();
        assert_eq!(p.mu, 0.6);
        assert!((p.sigma - 0.2).abs() < 1e-12);

        let c = EmosCoefficients { b0: -1.5, b1: 0.0, ..c };
        for v in [1e-6, 0.01, 0.5] {
            assert!((predict_cn_emos(c, &stats(0.1, 0.6, v)).unwrap().sigma - (-1.5f64).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn location_link_is_affine() {
        let c = EmosCoefficients { a0: 0.0, a1: 0.3, a2: 0.6, b0: -2.0, b1: 0.5 };
        let s = stats(0.2, 0.3, 0.01);
        let scaled = stats(0.6, 0.9, 0.01);
        let mu = predict_cn_emos(c, &s).unwrap().mu;
        let mu3 = predict_cn_emos(c, &scaled).unwrap().mu;
        assert!((mu3 - 3.0 * mu).abs() < 1e-15);
    }

    #[test]
    fn zero_variance_is_floored() {
        let p = predict_cn_emos(EmosCoefficients::DEFAULT_INIT, &stats(0.5, 0.5, 0.0)).unwrap();
        assert!(p.sigma > 0.0);
    }

    #[test]
    fn mean_crps_matches_checked_path() {
        let data = synthetic_pairs(EmosCoefficients::DEFAULT_INIT, 50, 1);
        let c = EmosCoefficients::DEFAULT_INIT;
        let want: f64 = data
            .iter()
            .map(|(s, y)| crps_closed_form(predict_cn_emos(c, s).unwrap(), *y).unwrap())
            .sum::<f64>()
            / 50.0;
        assert!((mean_crps(c, &data) - want).abs() < 1e-15);
    }

    #[test]
    fn recovers_generating_coefficients() {
        let truth = EmosCoefficients { a0: 0.02, a1: 0.3, a2: 0.7, b0: -1.0, b1: 0.5 };
        let data = synthetic_pairs(truth, 5000, 7);
        let fit = fit_cn_emos(&data, EmosCoefficients::DEFAULT_INIT).unwrap();
        let c = fit.coefficients;
        assert!((c.a0 - truth.a0).abs() < 0.05, "{c:?}");
        assert!((c.a1 - truth.a1).abs() < 0.05, "{c:?}");
        assert!((c.a2 - truth.a2).abs() < 0.05, "{c:?}");
        assert!((c.b0 - truth.b0).abs() < 0.1, "{c:?}");
        assert!((c.b1 - truth.b1).abs() < 0.1, "{c:?}");
        assert_eq!(fit.status, FitStatus::Converged);
    }

    #[test]
    fn fit_is_never_worse_than_init() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<_> = (0..200)
            .map(|_| {
                let m: f64 = rng.gen_range(0.1..0.9);
                (stats(m, m, 0.001), (m + rng.gen_range(-1e-4..1e-4)).clamp(0.0, 1.0))
            })
            .collect();
        let init = EmosCoefficients { a0: 0.0, a1: 0.0, a2: 1.0, b0: -2.0, b1: 0.5 };
        let fit = fit_cn_emos(&data, init).unwrap();
        assert!(fit.mean_crps <= mean_crps(init, &data));

        let refit = fit_cn_emos(&data, fit.coefficients).unwrap();
        assert!(refit.mean_crps <= fit.mean_crps);
        assert!((refit.mean_crps - fit.mean_crps).abs() < 1e-8);
    }

    #[test]
    fn too_few_pairs_and_degenerate_data() {
        let data = synthetic_pairs(EmosCoefficients::DEFAULT_INIT, 29, 2);
        assert!(matches!(fit_cn_emos(&data, EmosCoefficients::DEFAULT_INIT), Err(Error::InsufficientData(_))));

        let flat: Vec<_> = (0..40).map(|i| (stats(0.5, 0.4 + i as f64 * 0.001, 0.01), 0.3)).collect();
        let fit = fit_cn_emos(&flat, EmosCoefficients::DEFAULT_INIT).unwrap();
        assert_eq!(fit.status, FitStatus::Degenerate);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let data = synthetic_pairs(EmosCoefficients::DEFAULT_INIT, 100, 3);
        let nm = NelderMead { max_iter: 5, ..Default::default() };
        let fit = fit_with(&data, EmosCoefficients::DEFAULT_INIT, &nm).unwrap();
        assert_eq!(fit.status, FitStatus::MaxIterations);
        assert!(fit.mean_crps <= mean_crps(EmosCoefficients::DEFAULT_INIT, &data));
    }
}
