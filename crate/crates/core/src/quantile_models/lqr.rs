use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{check_data, empirical_grid_quantiles, repair, QuantileLoss};
use crate::error::{Error, Result};
use crate::neural::{train_early_stopping, Activation, Mlp, MlpSpec, TrainConfig, TrainHistory};
use crate::scoring::{QuantileForecast, N_LEVELS};

/// Fewest training cases accepted by [`fit_lqr`].
pub const MIN_LQR_CASES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqrConfig {
    pub train: TrainConfig,
}

impl Default for LqrConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig { learning_rate: 0.002, batch_size: 256, patience: 20, max_epochs: 500, seed: 1 },
        }
    }
}

/// One linear predictor per level: intercept plus 51 input weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqrModel {
    pub net: Mlp,
    pub history: Option<TrainHistory>,
}

fn linear_spec() -> MlpSpec {
    MlpSpec::new(N_LEVELS, vec![], Activation::Relu, vec![Activation::Linear; N_LEVELS])
        .expect("fixed linear spec is valid")
}

impl LqrModel {
    /// Builds a model from per-level `[β0, β1, …, β51]` vectors.
    pub fn from_coefficients(coeffs: &[Vec<f64>]) -> Result<Self> {
        if coeffs.len() != N_LEVELS || coeffs.iter().any(|c| c.len() != N_LEVELS + 1) {
            return Err(Error::Domain(format!("expected {N_LEVELS} vectors of {} coefficients", N_LEVELS + 1)));
        }
        let mut params = Vec::with_capacity(N_LEVELS * (N_LEVELS + 1));
        for c in coeffs {
            params.extend_from_slice(&c[1..]);
        }
        params.extend(coeffs.iter().map(|c| c[0]));
        Ok(Self { net: Mlp::with_params(linear_spec(), params)?, history: None })
    }

    /// Per-level `[β0, β1, …, β51]`.
    pub fn coefficients(&self) -> Vec<Vec<f64>> {
        let w = &self.net.params[..N_LEVELS * N_LEVELS];
        let b = &self.net.params[N_LEVELS * N_LEVELS..];
        (0..N_LEVELS)
            .map(|k| std::iter::once(b[k]).chain(w[k * N_LEVELS..(k + 1) * N_LEVELS].iter().copied()).collect())
            .collect()
    }
}

/// Fits all 51 levels jointly by Adam on the quantile Huber loss, starting
/// from zero weights and intercepts at the empirical quantiles.
pub fn fit_lqr(
    train: (ArrayView2<f64>, ArrayView1<f64>),
    val: (ArrayView2<f64>, ArrayView1<f64>),
    cfg: &LqrConfig,
) -> Result<LqrModel> {
    check_data(train, val)?;
    if train.0.nrows() < MIN_LQR_CASES {
        return Err(Error::InsufficientData(format!(
            "LQR needs at least {MIN_LQR_CASES} training cases, got {}",
            train.0.nrows()
        )));
    }
    let mut params = vec![0.0; N_LEVELS * N_LEVELS];
    params.extend(empirical_grid_quantiles(train.1));
    let net = Mlp::with_params(linear_spec(), params)?;
    let (net, history) = train_early_stopping(net, train, val, &cfg.train, &QuantileLoss::default())?;
    Ok(LqrModel { net, history: Some(history) })
}

/// Linear predictions clipped to [0, 1] and re-sorted.
pub fn predict_lqr(m: &LqrModel, members: &[f64]) -> Result<QuantileForecast> {
    if members.len() != N_LEVELS {
        return Err(Error::Domain(format!("expected {N_LEVELS} inputs, got {}", members.len())));
    }
    repair(&m.net.predict_one(members))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_coefficients_reproduce_sorted_members() {
        let coeffs: Vec<Vec<f64>> = (0..N_LEVELS)
            .map(|k| {
                let mut c = vec![0.0; N_LEVELS + 1];
                c[k + 1] = 1.0;
                c
            })
            .collect();
        let m = LqrModel::from_coefficients(&coeffs).unwrap();
        assert_eq!(m.coefficients(), coeffs);
        let members: Vec<f64> = (0..N_LEVELS).map(|i| i as f64 / 60.0).collect();
        assert_eq!(predict_lqr(&m, &members).unwrap().values(), &members[..]);
    }

    #[test]
    fn zero_coefficients_predict_zero() {
        let m = LqrModel::from_coefficients(&vec![vec![0.0; N_LEVELS + 1]; N_LEVELS]).unwrap();
        let q = predict_lqr(&m, &[0.4; N_LEVELS]).unwrap();
        assert!(q.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn crossing_outputs_are_rearranged() {
        let mut coeffs = vec![vec![0.0; N_LEVELS + 1]; N_LEVELS];
        for (k, c) in coeffs.iter_mut().enumerate() {
            c[0] = 0.3 + 0.01 * k as f64;
        }
        coeffs[1][0] = 0.2;
        coeffs[0][0] = 0.3;
        let q = predict_lqr(&LqrModel::from_coefficients(&coeffs).unwrap(), &[0.0; N_LEVELS]).unwrap();
        assert!((q.at(0) - 0.2).abs() < 1e-15 && (q.at(1) - 0.3).abs() < 1e-15);
    }
}
