//! Non-parametric quantile models on the 51-level grid: linear quantile
//! regression, QRNN, Bernstein quantile networks and non-crossing QRNN, all
//! trained on the quantile Huber loss, plus random hyperparameter search.

mod bqn;
mod lqr;
mod ncqrnn;
mod qrnn;
mod search;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{Activation, Loss, TrainConfig};
use crate::scoring::losses::huber_pinball_unchecked;
use crate::scoring::{level_grid, QuantileForecast, N_LEVELS};

pub use bqn::{bernstein_eval, bernstein_tail_basis, fit_bqn, predict_bqn, BqnModel};
pub use lqr::{fit_lqr, predict_lqr, LqrConfig, LqrModel};
pub use ncqrnn::{fit_ncqrnn, predict_ncqrnn, NcqrnnModel};
pub use qrnn::{fit_qrnn, predict_qrnn, QrnnModel};
pub use search::{
    fit_quantile_net, hyperparameter_search, write_trial_log, NetKind, QuantileNetModel, SearchResult,
    TrialRecord,
};

/// Threshold of the quantile Huber loss used for training.
pub const HUBER_EPS: f64 = 1e-8;

/// Mean quantile Huber loss over all cases and the 51 grid levels.
#[derive(Debug, Clone)]
pub struct QuantileLoss {
    levels: Vec<f64>,
    eps: f64,
}

impl QuantileLoss {
    pub fn new(eps: f64) -> Self {
        Self { levels: level_grid(), eps }
    }
}

impl Default for QuantileLoss {
    fn default() -> Self {
        Self::new(HUBER_EPS)
    }
}

impl Loss for QuantileLoss {
    fn evaluate(&self, outputs: ArrayView2<f64>, targets: ArrayView1<f64>) -> (f64, Array2<f64>) {
        let scale = 1.0 / (targets.len() * self.levels.len()) as f64;
        let mut grad = Array2::zeros(outputs.raw_dim());
        let mut total = 0.0;
        for (i, &y) in targets.iter().enumerate() {
            for (k, &tau) in self.levels.iter().enumerate() {
                let (v, d) = huber_pinball_unchecked(tau, y - outputs[[i, k]], self.eps);
                total += v;
                grad[[i, k]] = -d * scale;
            }
        }
        (total * scale, grad)
    }
}

/// Clips to [0, 1] and sorts (rearrangement repair).
pub fn repair(raw: &[f64]) -> Result<QuantileForecast> {
    QuantileForecast::from_unsorted(raw.iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

/// Empirical quantiles of `y` at the grid levels (type-7 interpolation).
pub(crate) fn empirical_grid_quantiles(y: ArrayView1<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = y.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    level_grid()
        .into_iter()
        .map(|tau| {
            let h = (n - 1) as f64 * tau;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            s[lo] + (h - lo as f64) * (s[hi] - s[lo])
        })
        .collect()
}

pub(crate) fn inverse_softplus(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

fn check_pair(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<()> {
    if x.ncols() != N_LEVELS {
        return Err(Error::Domain(format!("expected {N_LEVELS} input columns, got {}", x.ncols())));
    }
    if x.nrows() != y.len() {
        return Err(Error::Domain("inputs and targets differ in length".into()));
    }
    if x.nrows() == 0 {
        return Err(Error::InsufficientData("empty training or validation set".into()));
    }
    Ok(())
}

pub(crate) fn check_data(train: (ArrayView2<f64>, ArrayView1<f64>), val: (ArrayView2<f64>, ArrayView1<f64>)) -> Result<()> {
    check_pair(train.0, train.1)?;
    check_pair(val.0, val.1)
}

/// Network hyperparameters shared by QRNN, BQN and NCQRNN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub hidden_sizes: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    /// Bernstein degree (BQN only).
    pub degree: usize,
    /// Width of the layer feeding the non-crossing head (NCQRNN only).
    pub nc_width: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![64],
            activation: Activation::Relu,
            learning_rate: 0.005,
            batch_size: 256,
            patience: 10,
            max_epochs: 300,
            degree: 12,
            nc_width: 55,
        }
    }
}

impl Hyperparams {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            patience: self.patience.min(self.max_epochs),
            max_epochs: self.max_epochs,
            seed,
        }
    }
}

/// Bounds of the random search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparamSpace {
    pub layers: (usize, usize),
    pub neurons: (usize, usize),
    pub activations: Vec<Activation>,
    pub learning_rate: (f64, f64),
    pub patience: (usize, usize),
    pub batch_size: (usize, usize),
    pub degree: (usize, usize),
    pub nc_width: (usize, usize),
    /// Fixed epoch cap given to every trial.
    pub max_epochs: usize,
}

impl Default for HyperparamSpace {
    fn default() -> Self {
        Self {
            layers: (1, 2),
            neurons: (5, 200),
            activations: Activation::HIDDEN.to_vec(),
            learning_rate: (0.0005, 0.05),
            patience: (5, 50),
            batch_size: (200, 20000),
            degree: (6, 15),
            nc_width: (51, 60),
            max_epochs: 300,
        }
    }
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..=hi.ln())).exp().clamp(lo, hi)
}

impl HyperparamSpace {
    /// Learning rate and batch size are drawn log-uniformly, the rest
    /// uniformly.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Hyperparams {
        let layers = rng.gen_range(self.layers.0..=self.layers.1);
        let hidden_sizes = (0..layers).map(|_| rng.gen_range(self.neurons.0..=self.neurons.1)).collect();
        let activation = self.activations[rng.gen_range(0..self.activations.len())];
        let learning_rate = log_uniform(rng, self.learning_rate.0, self.learning_rate.1);
        let batch_size = (log_uniform(rng, self.batch_size.0 as f64, self.batch_size.1 as f64).round() as usize)
            .clamp(self.batch_size.0, self.batch_size.1);
        Hyperparams {
            hidden_sizes,
            activation,
            learning_rate,
            batch_size,
            patience: rng.gen_range(self.patience.0..=self.patience.1),
            max_epochs: self.max_epochs,
            degree: rng.gen_range(self.degree.0..=self.degree.1),
            nc_width: rng.gen_range(self.nc_width.0..=self.nc_width.1),
        }
    }

    pub fn contains(&self, hp: &Hyperparams) -> bool {
        let within = |v: usize, (lo, hi): (usize, usize)| lo <= v && v <= hi;
        within(hp.hidden_sizes.len(), self.layers)
            && hp.hidden_sizes.iter().all(|&n| within(n, self.neurons))
            && self.activations.contains(&hp.activation)
            && hp.learning_rate >= self.learning_rate.0
            && hp.learning_rate <= self.learning_rate.1
            && within(hp.batch_size, self.batch_size)
            && within(hp.patience, self.patience)
            && within(hp.degree, self.degree)
            && within(hp.nc_width, self.nc_width)
    }
}
