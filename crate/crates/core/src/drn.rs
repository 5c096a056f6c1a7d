//! Distributional regression network: an MLP from the ensemble to the
//! location and scale of a doubly censored normal, trained on mean CRPS.
//! Ten networks are trained from distinct seeds and their output parameters
//! averaged.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::censored_normal::{crps_value_and_gradient, quantile, CensoredNormalParams};
use crate::dataset::N_MEMBERS;
use crate::error::{Error, Result};
use crate::neural::{train_early_stopping, Activation, Loss, Mlp, MlpSpec, TrainConfig, TrainHistory};
use crate::scoring::{level, QuantileForecast, N_LEVELS};
use crate::sub_seed;

/// Added to the softplus scale output.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Mean censored-normal CRPS of two-column outputs `(μ, σ − floor)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CrpsLoss;

impl Loss for CrpsLoss {
    fn evaluate(&self, outputs: ArrayView2<f64>, targets: ArrayView1<f64>) -> (f64, Array2<f64>) {
        let n = targets.len() as f64;
        let mut grad = Array2::zeros(outputs.raw_dim());
        let mut total = 0.0;
        for (i, &y) in targets.iter().enumerate() {
            let (crps, d_mu, d_sigma) =
                crps_value_and_gradient(outputs[[i, 0]], outputs[[i, 1]] + SIGMA_FLOOR, y);
            total += crps;
            grad[[i, 0]] = d_mu / n;
            grad[[i, 1]] = d_sigma / n;
        }
        (total / n, grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrnConfig {
    pub hidden_sizes: Vec<usize>,
    pub activation: Activation,
    pub n_networks: usize,
    /// Shared training settings; each network derives its own seed from
    /// `train.seed`.
    pub train: TrainConfig,
}

impl Default for DrnConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![15, 10, 10],
            activation: Activation::Relu,
            n_networks: 10,
            train: TrainConfig { learning_rate: 0.001, batch_size: 256, patience: 6, max_epochs: 300, seed: 1 },
        }
    }
}

impl DrnConfig {
    pub fn spec(&self) -> Result<MlpSpec> {
        MlpSpec::new(N_MEMBERS, self.hidden_sizes.clone(), self.activation, vec![Activation::Linear, Activation::Softplus])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrnModel {
    pub networks: Vec<Mlp>,
    pub histories: Vec<TrainHistory>,
}

/// Trains `cfg.n_networks` networks in parallel with distinct seeds.
pub fn fit_drn(
    train: (ArrayView2<f64>, ArrayView1<f64>),
    val: (ArrayView2<f64>, ArrayView1<f64>),
    cfg: &DrnConfig,
) -> Result<DrnModel> {
    if cfg.n_networks == 0 {
        return Err(Error::Config("DRN needs at least one network".into()));
    }
    let spec = cfg.spec()?;
    let fitted: Vec<Result<(Mlp, TrainHistory)>> = (0..cfg.n_networks)
        .into_par_iter()
        .map(|i| {
            let seed = sub_seed(cfg.train.seed, i as u64);
            let net = Mlp::new(spec.clone(), seed)?;
            let tc = TrainConfig { seed, ..cfg.train.clone() };
            train_early_stopping(net, train, val, &tc, &CrpsLoss)
        })
        .collect();
    let mut networks = Vec::with_capacity(cfg.n_networks);
    let mut histories = Vec::with_capacity(cfg.n_networks);
    for f in fitted {
        let (net, h) = f?;
        networks.push(net);
        histories.push(h);
    }
    Ok(DrnModel { networks, histories })
}

impl DrnModel {
    /// Averaged `(μ, σ)` for every input row.
    pub fn predict_batch(&self, inputs: ArrayView2<f64>) -> Result<Vec<CensoredNormalParams>> {
        let k = self.networks.len() as f64;
        let mut sums = vec![(0.0, 0.0); inputs.nrows()];
        for net in &self.networks {
            let out = net.try_forward(inputs)?;
            for (s, row) in sums.iter_mut().zip(out.rows()) {
                s.0 += row[0];
                s.1 += row[1] + SIGMA_FLOOR;
            }
        }
        sums.into_iter()
            .map(|(m, s)| CensoredNormalParams::new(m / k, s / k))
            .collect()
    }
}

/// Averaged parameters for one input row (control then sorted members).
pub fn predict_drn(m: &DrnModel, members: &[f64]) -> Result<CensoredNormalParams> {
    let x = ArrayView2::from_shape((1, members.len()), members)
        .map_err(|e| Error::Domain(e.to_string()))?;
    Ok(m.predict_batch(x)?.remove(0))
}

/// The censored law's quantiles at the 51-level grid.
pub fn quantile_grid(p: CensoredNormalParams) -> Result<QuantileForecast> {
    let values = (1..=N_LEVELS).map(|k| quantile(level(k), p)).collect::<Result<Vec<_>>>()?;
    QuantileForecast::new(values)
}

pub fn drn_quantiles(m: &DrnModel, members: &[f64]) -> Result<QuantileForecast> {
    quantile_grid(predict_drn(m, members)?)
}
