use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Adam, Loss, Trainable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 256,
            patience: 6,
            max_epochs: 300,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate < 1.0) {
            return Err(Error::Config(format!("learning rate must lie in (0, 1), got {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch size, patience and max epochs must be at least 1".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config("patience cannot exceed max epochs".into()));
        }
        Ok(())
    }
}

/// Per-epoch losses and the selected snapshot.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Tracks the best validation loss and the run of non-improving epochs.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: f64::INFINITY, best_epoch: 0, since_best: 0 }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }

    pub fn update(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.since_best = 0;
            StopDecision::Improved
        } else {
            self.since_best += 1;
            if self.since_best >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }
}

/// Mini-batch Adam training with early stopping on the validation loss.
/// Returns the parameters of the best validation epoch.
pub fn train_early_stopping<M: Trainable>(
    mut model: M,
    train: (ArrayView2<f64>, ArrayView1<f64>),
    val: (ArrayView2<f64>, ArrayView1<f64>),
    cfg: &TrainConfig,
    loss: &dyn Loss,
) -> Result<(M, TrainHistory)> {
    cfg.validate()?;
    let (x, y) = train;
    let (vx, vy) = val;
    if x.nrows() == 0 || vx.nrows() == 0 {
        return Err(Error::InsufficientData("training and validation sets must be non-empty".into()));
    }
    if x.nrows() != y.len() || vx.nrows() != vy.len() {
        return Err(Error::Domain("inputs and targets differ in length".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(model.params().len());
    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut best = model.params().to_vec();
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..x.nrows()).collect();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let bx: Array2<f64> = x.select(Axis(0), chunk);
            let by: Array1<f64> = y.select(Axis(0), chunk);
            let (value, grads) = model.loss_and_grad(bx.view(), by.view(), loss);
            if !value.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training(format!("non-finite loss or gradient at epoch {epoch}")));
            }
            total += value * chunk.len() as f64;
            adam.step(model.params_mut(), &grads, cfg.learning_rate);
        }
        let val_loss = loss.value(model.forward(vx).view(), vy);
        if !val_loss.is_finite() {
            return Err(Error::Training(format!("non-finite validation loss at epoch {epoch}")));
        }
        history.train_loss.push(total / x.nrows() as f64);
        history.val_loss.push(val_loss);
        history.epochs_run = epoch;
        match stopper.update(epoch, val_loss) {
            StopDecision::Improved => best.copy_from_slice(model.params()),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }
    model.params_mut().copy_from_slice(&best);
    history.best_epoch = stopper.best_epoch();
    Ok((model, history))
}

/// Largest relative difference between the analytic gradient and central
/// finite differences with step `h`.
pub fn gradient_check<M: Trainable>(
    model: &M,
    inputs: ArrayView2<f64>,
    targets: ArrayView1<f64>,
    loss: &dyn Loss,
    h: f64,
) -> f64 {
    let (_, analytic) = model.loss_and_grad(inputs, targets, loss);
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for i in 0..analytic.len() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + h;
        let up = loss.value(probe.forward(inputs).view(), targets);
        probe.params_mut()[i] = orig - h;
        let down = loss.value(probe.forward(inputs).view(), targets);
        probe.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let scale = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / scale);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{Activation, Mlp, MlpSpec};
    use ndarray::Array2;
    use rand::Rng;

    struct Mse;
    impl Loss for Mse {
        fn evaluate(&self, out: ArrayView2<f64>, y: ArrayView1<f64>) -> (f64, Array2<f64>) {
            let n = y.len() as f64;
            let mut g = Array2::zeros(out.raw_dim());
            let mut v = 0.0;
            for i in 0..y.len() {
                let r = out[[i, 0]] - y[i];
                v += r * r;
                g[[i, 0]] = 2.0 * r / n;
            }
            (v / n, g)
        }
    }

    struct ZeroLoss;
    impl Loss for ZeroLoss {
        fn evaluate(&self, out: ArrayView2<f64>, _: ArrayView1<f64>) -> (f64, Array2<f64>) {
            (0.0, Array2::zeros(out.raw_dim()))
        }
    }

    fn toy(n: usize, seed: u64) -> (Array2<f64>, Array1<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 3), |_| rng.gen_range(-1.0..1.0));
        let y = x.rows().into_iter().map(|r| 0.5 * r[0] - 0.3 * r[1] + 0.1).collect();
        (x, y)
    }

    #[test]
    fn stopper_with_rising_losses() {
        let mut s = EarlyStopper::new(6);
        let mut stopped = None;
        for epoch in 1..=20 {
            if s.update(epoch, epoch as f64) == StopDecision::Stop {
                stopped = Some(epoch);
                break;
            }
        }
        assert_eq!(stopped, Some(7));
        assert_eq!(s.best_epoch(), 1);
    }

    #[test]
    fn gradients_match_finite_differences_for_each_activation() {
        let (x, y) = toy(7, 3);
        for act in Activation::HIDDEN {
            let spec = MlpSpec::new(3, vec![5, 4], act, vec![Activation::Softplus]).unwrap();
            let mut net = Mlp::new(spec, 11).unwrap();
            // Nonzero biases keep ReLU pre-activations away from the kink.
            let mut rng = ChaCha8Rng::seed_from_u64(12);
            net.params.iter_mut().for_each(|p| *p += rng.gen_range(-0.3..0.3));
            let err = gradient_check(&net, x.view(), y.view(), &Mse, 1e-5);
            assert!(err < 1e-4, "{act:?}: {err}");
        }
    }

    #[test]
    fn zero_loss_gradient_gives_zero_parameter_gradient() {
        let (x, y) = toy(5, 1);
        let spec = MlpSpec::new(3, vec![4], Activation::Tanh, vec![Activation::Linear]).unwrap();
        let net = Mlp::new(spec, 2).unwrap();
        let (_, g) = net.loss_and_grad(x.view(), y.view(), &ZeroLoss);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicated_batch_keeps_mean_gradient() {
        let (x, y) = toy(6, 4);
        let x2 = ndarray::concatenate![Axis(0), x, x];
        let y2 = ndarray::concatenate![Axis(0), y, y];
        let spec = MlpSpec::new(3, vec![4], Activation::Logistic, vec![Activation::Linear]).unwrap();
        let net = Mlp::new(spec, 2).unwrap();
        let (_, g1) = net.loss_and_grad(x.view(), y.view(), &Mse);
        let (_, g2) = net.loss_and_grad(x2.view(), y2.view(), &Mse);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn training_is_deterministic_and_single_epoch_is_honoured() {
        let (x, y) = toy(300, 5);
        let (vx, vy) = toy(100, 6);
        let spec = MlpSpec::new(3, vec![8], Activation::Tanh, vec![Activation::Linear]).unwrap();
        let cfg = TrainConfig { learning_rate: 0.01, batch_size: 32, patience: 5, max_epochs: 30, seed: 9 };
        let run = || {
            train_early_stopping(Mlp::new(spec.clone(), 1).unwrap(), (x.view(), y.view()), (vx.view(), vy.view()), &cfg, &Mse)
                .unwrap()
        };
        let (a, ha) = run();
        let (b, hb) = run();
        assert_eq!(a.params, b.params);
        assert_eq!(ha, hb);
        let best = ha.val_loss[ha.best_epoch - 1];
        assert!(ha.val_loss.iter().all(|&v| v >= best));

        let one = TrainConfig { max_epochs: 1, patience: 1, ..cfg.clone() };
        let (_, h) = train_early_stopping(Mlp::new(spec.clone(), 1).unwrap(), (x.view(), y.view()), (vx.view(), vy.view()), &one, &Mse)
            .unwrap();
        assert_eq!(h.epochs_run, 1);
        assert_eq!(h.train_loss.len(), 1);
    }

    #[test]
    fn training_loss_falls_over_first_epochs() {
        let (x, y) = toy(2000, 7);
        let (vx, vy) = toy(200, 8);
        let spec = MlpSpec::new(3, vec![], Activation::Relu, vec![Activation::Linear]).unwrap();
        let cfg = TrainConfig { learning_rate: 0.001, batch_size: 32, patience: 10, max_epochs: 10, seed: 3 };
        let (_, h) = train_early_stopping(Mlp::new(spec, 2).unwrap(), (x.view(), y.view()), (vx.view(), vy.view()), &cfg, &Mse)
            .unwrap();
        assert!(h.train_loss.windows(2).all(|w| w[1] < w[0]), "{:?}", h.train_loss);
    }

    #[test]
    fn invalid_config_rejected() {
        let bad = TrainConfig { learning_rate: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { patience: 10, max_epochs: 5, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
