use ndarray::{s, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{check_data, empirical_grid_quantiles, inverse_softplus, Hyperparams, QuantileLoss};
use crate::error::{domain, Error, Result};
use crate::neural::{train_early_stopping, Activation, Loss, MlpSpec, Trainable, TrainHistory};
use crate::scoring::{level_grid, QuantileForecast, N_LEVELS};

fn bernstein_basis(n: usize, tau: f64) -> Vec<f64> {
    let mut binom = 1.0;
    (0..=n)
        .map(|j| {
            if j > 0 {
                binom = binom * (n + 1 - j) as f64 / j as f64;
            }
            binom * tau.powi(j as i32) * (1.0 - tau).powi((n - j) as i32)
        })
        .collect()
}

/// Σ_j c_j·C(n, j)·τ^j·(1−τ)^(n−j) with n = coeffs.len() − 1.
pub fn bernstein_eval(coeffs: &[f64], tau: f64) -> Result<f64> {
    if coeffs.is_empty() {
        return domain("Bernstein polynomial needs at least one coefficient");
    }
    if !(0.0..=1.0).contains(&tau) {
        return domain(format!("Bernstein argument must lie in [0, 1], got {tau}"));
    }
    let b = bernstein_basis(coeffs.len() - 1, tau);
    Ok(coeffs.iter().zip(b).map(|(c, b)| c * b).sum())
}

/// `S[k][i−1] = P(Bin(n, τ_k) ≥ i)` for i = 1…n on the level grid, made
/// non-decreasing in k. With coefficients `c_j = c0 + Σ_{i≤j} δ_i` the
/// Bernstein quantile at τ_k equals `c0 + Σ_i δ_i·S[k][i−1]`.
pub fn bernstein_tail_basis(n: usize) -> Array2<f64> {
    let mut s = Array2::zeros((N_LEVELS, n));
    for (k, tau) in level_grid().into_iter().enumerate() {
        let b = bernstein_basis(n, tau);
        let mut tail = 0.0;
        for i in (1..=n).rev() {
            tail += b[i];
            s[[k, i - 1]] = tail;
        }
    }
    for k in 1..N_LEVELS {
        for i in 0..n {
            s[[k, i]] = s[[k, i]].max(s[[k - 1, i]]);
        }
    }
    s
}

/// Network emitting a base coefficient and `degree` softplus increments of a
/// Bernstein quantile function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BqnModel {
    pub spec: MlpSpec,
    pub params: Vec<f64>,
    pub degree: usize,
    pub hyperparams: Hyperparams,
    pub history: Option<TrainHistory>,
    #[serde(skip)]
    basis: Option<Array2<f64>>,
}

impl BqnModel {
    pub fn new(hidden_sizes: Vec<usize>, activation: Activation, degree: usize, seed: u64) -> Result<Self> {
        if degree == 0 {
            return Err(Error::Config("Bernstein degree must be at least 1".into()));
        }
        let mut heads = vec![Activation::Linear];
        heads.extend(std::iter::repeat(Activation::Softplus).take(degree));
        let spec = MlpSpec::new(N_LEVELS, hidden_sizes, activation, heads)?;
        let params = spec.init_params(seed);
        Ok(Self { spec, params, degree, hyperparams: Hyperparams::default(), history: None, basis: None })
    }

    fn basis(&self) -> Array2<f64> {
        self.basis.clone().unwrap_or_else(|| bernstein_tail_basis(self.degree))
    }

    /// Coefficients `(c_0, …, c_n)` for one input row.
    pub fn coefficients(&self, members: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, members.len()), members).map_err(|e| Error::Domain(e.to_string()))?;
        let (out, _) = self.spec.forward_with(&self.params, x)?;
        let mut c = vec![out[[0, 0]]];
        for i in 1..=self.degree {
            c.push(c[i - 1] + out[[0, i]]);
        }
        Ok(c)
    }

    fn quantiles(&self, heads: &Array2<f64>, basis: &Array2<f64>) -> Array2<f64> {
        let mut q = heads.slice(s![.., 1..]).dot(&basis.t());
        for (mut row, c0) in q.rows_mut().into_iter().zip(heads.column(0)) {
            row.mapv_inplace(|v| *c0 + v);
        }
        q
    }

    pub fn try_forward(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        let (heads, _) = self.spec.forward_with(&self.params, inputs)?;
        Ok(self.quantiles(&heads, &self.basis()))
    }
}

impl Trainable for BqnModel {
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
        let basis = self.basis();
        let (heads, cache) = self.spec.forward_with(&self.params, inputs).expect("input width checked");
        let q = self.quantiles(&heads, &basis);
        let (value, dq) = loss.evaluate(q.view(), targets);
        let mut d_heads = Array2::zeros(heads.raw_dim());
        d_heads.column_mut(0).assign(&dq.sum_axis(ndarray::Axis(1)));
        d_heads.slice_mut(s![.., 1..]).assign(&dq.dot(&basis));
        let (grads, _) = self.spec.backward_with(&self.params, &cache, d_heads.view());
        (value, grads)
    }
}

/// Trains on the mean quantile Huber loss at the 51 grid levels. The base
/// head starts at the lowest empirical quantile and the increments at an even
/// split of the empirical range.
pub fn fit_bqn(
    train: (ArrayView2<f64>, ArrayView1<f64>),
    val: (ArrayView2<f64>, ArrayView1<f64>),
    hp: &Hyperparams,
    seed: u64,
) -> Result<BqnModel> {
    check_data(train, val)?;
    let mut m = BqnModel::new(hp.hidden_sizes.clone(), hp.activation, hp.degree, seed)?;
    let q = empirical_grid_quantiles(train.1);
    let n = m.params.len();
    let d = hp.degree;
    m.params[n - d - 1] = q[0];
    let inc = inverse_softplus(((q[N_LEVELS - 1] - q[0]) / d as f64).max(1e-3));
    m.params[n - d..].iter_mut().for_each(|b| *b = inc);
    m.hyperparams = hp.clone();
    m.basis = Some(bernstein_tail_basis(d));
    let (mut m, history) = train_early_stopping(m, train, val, &hp.train_config(seed), &QuantileLoss::default())?;
    m.history = Some(history);
    Ok(m)
}

/// Bernstein quantiles at the grid, clipped to [0, 1]; monotone without repair.
pub fn predict_bqn(m: &BqnModel, members: &[f64]) -> Result<QuantileForecast> {
    let x = ArrayView2::from_shape((1, members.len()), members).map_err(|e| Error::Domain(e.to_string()))?;
    let q = m.try_forward(x)?;
    QuantileForecast::new(q.row(0).iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::gradient_check;
    use ndarray::Array1;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bernstein_examples() {
        assert!((bernstein_eval(&[0.0, 1.0], 0.25).unwrap() - 0.25).abs() < 1e-15);
        for tau in [0.0, 0.3, 0.7, 1.0] {
            assert!((bernstein_eval(&[0.4; 9], tau).unwrap() - 0.4).abs() < 1e-15);
        }
        assert!((bernstein_eval(&[0.0, 0.5, 1.0], 0.5).unwrap() - 0.5).abs() < 1e-15);
        assert!(bernstein_eval(&[], 0.5).is_err());
        assert!(bernstein_eval(&[1.0], 1.5).is_err());
    }

    #[test]
    fn tail_basis_matches_cumulative_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 9;
        let s = bernstein_tail_basis(n);
        let delta: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..0.2)).collect();
        let mut c = vec![0.1];
        for i in 0..n {
            c.push(c[i] + delta[i]);
        }
        for (k, tau) in level_grid().into_iter().enumerate() {
            let direct = bernstein_eval(&c, tau).unwrap();
            let via_tail = 0.1 + (0..n).map(|i| delta[i] * s[[k, i]]).sum::<f64>();
            assert!((direct - via_tail).abs() < 1e-13);
        }
    }

    #[test]
    fn gradient_through_bernstein_head() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Array2::from_shape_fn((8, N_LEVELS), |_| rng.gen_range(0.0..1.0));
        let y: Array1<f64> = (0..8).map(|_| rng.gen_range(0.0..1.0)).collect();
        for seed in 0..10 {
            let m = BqnModel::new(vec![6], Activation::Logistic, 7, seed).unwrap();
            let err = gradient_check(&m, x.view(), y.view(), &QuantileLoss::new(10.0), 1e-5);
            assert!(err < 1e-4, "{err}");
        }
    }

    #[test]
    fn constant_head_gives_constant_quantiles() {
        let mut m = BqnModel::new(vec![4], Activation::Relu, 6, 0).unwrap();
        let n = m.params.len();
        m.params.iter_mut().for_each(|p| *p = 0.0);
        m.params[n - 7] = 0.5;
        m.params[n - 6..].iter_mut().for_each(|b| *b = -800.0);
        let q = predict_bqn(&m, &[0.2; N_LEVELS]).unwrap();
        assert!(q.values().iter().all(|&v| v == 0.5));

        m.params[n - 7] = 1.4;
        let q = predict_bqn(&m, &[0.2; N_LEVELS]).unwrap();
        assert!(q.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn monotone_without_repair_for_random_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..1000 {
            let mut m = BqnModel::new(vec![5], Activation::Tanh, rng.gen_range(6..=15), seed).unwrap();
            m.params.iter_mut().for_each(|p| *p = rng.gen_range(-5.0..5.0));
            let x: Vec<f64> = (0..N_LEVELS).map(|_| rng.gen_range(0.0..1.0)).collect();
            let raw = m.try_forward(ArrayView2::from_shape((1, N_LEVELS), &x).unwrap()).unwrap();
            assert!(raw.row(0).windows(2).into_iter().all(|w| w[0] <= w[1]));
        }
    }
}
