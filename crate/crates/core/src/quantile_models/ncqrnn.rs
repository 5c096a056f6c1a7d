use ndarray::{s, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_data, empirical_grid_quantiles, inverse_softplus, Hyperparams, QuantileLoss};
use crate::error::{Error, Result};
use crate::neural::{logistic, softplus, train_early_stopping, Activation, Loss, MlpSpec, Trainable, TrainHistory};
use crate::scoring::{QuantileForecast, N_LEVELS};

/// Base network `51 → hidden → m` with softplus outputs `a ≥ 0`, followed by
/// a non-crossing head:
///
/// `q_1 = u·a + c`, `q_k = q_{k−1} + softplus(e_k) + Σ_j softplus(V_kj)·a_j`.
///
/// Every increment is non-negative, so the 51 outputs never cross.
/// Parameters are stored flat: base network, then `u` (m), `c`, `e` (50) and
/// `V` (50 × m, row-major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcqrnnModel {
    pub spec: MlpSpec,
    pub params: Vec<f64>,
    pub hyperparams: Hyperparams,
    pub history: Option<TrainHistory>,
}

struct Head<'a> {
    u: &'a [f64],
    c: f64,
    e: &'a [f64],
    v: &'a [f64],
}

impl NcqrnnModel {
    pub fn new(hidden_sizes: Vec<usize>, activation: Activation, width: usize, seed: u64) -> Result<Self> {
        if width < N_LEVELS {
            return Err(Error::Config(format!("non-crossing width must be at least {N_LEVELS}, got {width}")));
        }
        let spec = MlpSpec::new(N_LEVELS, hidden_sizes, activation, vec![Activation::Softplus; width])?;
        let mut params = spec.init_params(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let limit = (6.0 / (width + 1) as f64).sqrt();
        params.extend((0..width).map(|_| rng.gen_range(-limit..limit)));
        params.push(0.0);
        params.extend(std::iter::repeat(inverse_softplus(0.01)).take(N_LEVELS - 1));
        params.extend(std::iter::repeat(-8.0).take((N_LEVELS - 1) * width));
        Ok(Self { spec, params, hyperparams: Hyperparams::default(), history: None })
    }

    pub fn width(&self) -> usize {
        self.spec.output_dim
    }

    fn split(&self) -> (&[f64], Head<'_>) {
        let m = self.width();
        let (base, rest) = self.params.split_at(self.spec.n_params());
        let (u, rest) = rest.split_at(m);
        let (c, rest) = rest.split_at(1);
        let (e, v) = rest.split_at(N_LEVELS - 1);
        (base, Head { u, c: c[0], e, v })
    }

    fn head_forward(head: &Head, a: &Array2<f64>) -> Array2<f64> {
        let m = a.ncols();
        let mut q = Array2::zeros((a.nrows(), N_LEVELS));
        let sp_v: Vec<f64> = head.v.iter().map(|&x| softplus(x)).collect();
        let sp_e: Vec<f64> = head.e.iter().map(|&x| softplus(x)).collect();
        for (mut qrow, arow) in q.rows_mut().into_iter().zip(a.rows()) {
            let mut prev = head.c + head.u.iter().zip(arow).map(|(u, a)| u * a).sum::<f64>();
            qrow[0] = prev;
            for k in 1..N_LEVELS {
                let w = &sp_v[(k - 1) * m..k * m];
                let d = sp_e[k - 1] + w.iter().zip(arow).map(|(w, a)| w * a).sum::<f64>();
                prev += d;
                qrow[k] = prev;
            }
        }
        q
    }

    pub fn try_forward(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        let (base, head) = self.split();
        let (a, _) = self.spec.forward_with(base, inputs)?;
        Ok(Self::head_forward(&head, &a))
    }
}

impl Trainable for NcqrnnModel {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn forward(&self, inputs: ArrayView2<f64>) -> Array2<f64> {
        self.try_forward(inputs).expect("input width checked before training")
    }

    fn loss_and_grad(&self, inputs: ArrayView2<f64>, targets: ArrayView1<f64>, loss: &dyn Loss) -> (f64, Vec<f64>) {
        let m = self.width();
        let (base, head) = self.split();
        let (a, cache) = self.spec.forward_with(base, inputs).expect("input width checked");
        let q = Self::head_forward(&head, &a);
        let (value, dq) = loss.evaluate(q.view(), targets);

        let sp_v: Vec<f64> = head.v.iter().map(|&x| softplus(x)).collect();
        let mut g_u = vec![0.0; m];
        let mut g_c = 0.0;
        let mut g_e = vec![0.0; N_LEVELS - 1];
        let mut g_v = vec![0.0; (N_LEVELS - 1) * m];
        let mut d_a = Array2::zeros(a.raw_dim());
        let mut tail = vec![0.0; N_LEVELS];
        for ((drow, arow), mut darow) in dq.rows().into_iter().zip(a.rows()).zip(d_a.rows_mut()) {
            // tail[k] = Σ_{l ≥ k} ∂L/∂q_l
            let mut acc = 0.0;
            for k in (0..N_LEVELS).rev() {
                acc += drow[k];
                tail[k] = acc;
            }
            g_c += tail[0];
            for j in 0..m {
                g_u[j] += tail[0] * arow[j];
                darow[j] += tail[0] * head.u[j];
            }
            for k in 1..N_LEVELS {
                let t = tail[k];
                g_e[k - 1] += t;
                let row = (k - 1) * m;
                for j in 0..m {
                    g_v[row + j] += t * arow[j];
                    darow[j] += t * sp_v[row + j];
                }
            }
        }
        for (g, &e) in g_e.iter_mut().zip(head.e) {
            *g *= logistic(e);
        }
        for (g, &v) in g_v.iter_mut().zip(head.v) {
            *g *= logistic(v);
        }
        let (mut grads, _) = self.spec.backward_with(base, &cache, d_a.view());
        grads.extend(g_u);
        grads.push(g_c);
        grads.extend(g_e);
        grads.extend(g_v);
        (value, grads)
    }
}

/// Trains on the mean quantile Huber loss. The head starts at the lowest
/// empirical quantile with increments matching the empirical spacings.
pub fn fit_ncqrnn(
    train: (ArrayView2<f64>, ArrayView1<f64>),
    val: (ArrayView2<f64>, ArrayView1<f64>),
    hp: &Hyperparams,
    seed: u64,
) -> Result<NcqrnnModel> {
    check_data(train, val)?;
    let mut model = NcqrnnModel::new(hp.hidden_sizes.clone(), hp.activation, hp.nc_width, seed)?;
    let q = empirical_grid_quantiles(train.1);
    let m = model.width();
    let offset = model.spec.n_params() + m;
    model.params[offset] = q[0];
    for k in 1..N_LEVELS {
        model.params[offset + k] = inverse_softplus((q[k] - q[k - 1]).max(1e-4));
    }
    model.hyperparams = hp.clone();
    let (mut model, history) = train_early_stopping(model, train, val, &hp.train_config(seed), &QuantileLoss::default())?;
    model.history = Some(history);
    Ok(model)
}

/// Head outputs clipped to [0, 1]; monotone without repair.
pub fn predict_ncqrnn(m: &NcqrnnModel, members: &[f64]) -> Result<QuantileForecast> {
    let x = ArrayView2::from_shape((1, members.len()), members).map_err(|e| Error::Domain(e.to_string()))?;
    let q = m.try_forward(x)?;
    QuantileForecast::new(q.slice(s![0, ..]).iter().map(|v| v.clamp(0.0, 1.0)).collect())
}
