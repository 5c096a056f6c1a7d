use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{check_data, empirical_grid_quantiles, repair, Hyperparams, QuantileLoss};
use crate::error::{Error, Result};
use crate::neural::{train_early_stopping, Activation, Mlp, MlpSpec, TrainHistory};
use crate::scoring::{QuantileForecast, N_LEVELS};

/// Network with one linear output per grid level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrnnModel {
    pub net: Mlp,
    pub hyperparams: Hyperparams,
    pub history: Option<TrainHistory>,
}

/// Output biases start at the empirical quantiles of the training targets.
pub fn fit_qrnn(
    train: (ArrayView2<f64>, ArrayView1<f64>),
    val: (ArrayView2<f64>, ArrayView1<f64>),
    hp: &Hyperparams,
    seed: u64,
) -> Result<QrnnModel> {
    check_data(train, val)?;
    let spec = MlpSpec::new(N_LEVELS, hp.hidden_sizes.clone(), hp.activation, vec![Activation::Linear; N_LEVELS])?;
    let mut net = Mlp::new(spec, seed)?;
    let n = net.params.len();
    net.params[n - N_LEVELS..].copy_from_slice(&empirical_grid_quantiles(train.1));
    let (net, history) = train_early_stopping(net, train, val, &hp.train_config(seed), &QuantileLoss::default())?;
    Ok(QrnnModel { net, hyperparams: hp.clone(), history: Some(history) })
}

/// Outputs clipped to [0, 1] and re-sorted.
pub fn predict_qrnn(m: &QrnnModel, members: &[f64]) -> Result<QuantileForecast> {
    if members.len() != N_LEVELS {
        return Err(Error::Domain(format!("expected {N_LEVELS} inputs, got {}", members.len())));
    }
    repair(&m.net.predict_one(members))
}
