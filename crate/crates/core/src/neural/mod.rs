//! A small feed-forward network engine: dense layers, analytic
//! backpropagation, Adam, mini-batch training with early stopping, and
//! finite-difference gradient checks.

mod activation;
mod adam;
mod mlp;
mod train;

use ndarray::{Array2, ArrayView1, ArrayView2};

pub use activation::{logistic, softplus, Activation};
pub use adam::Adam;
pub use mlp::{Mlp, MlpSpec, NetworkDocument, NETWORK_FORMAT_VERSION};
pub use train::{
    gradient_check, train_early_stopping, EarlyStopper, StopDecision, TrainConfig, TrainHistory,
};

/// Mean loss over a batch of network outputs, with its gradient.
///
/// `outputs` has one row per case; `targets` one scalar observation per case.
/// The returned gradient has the shape of `outputs` and already carries the
/// `1/n` factor of the mean.
pub trait Loss: Sync {
    fn evaluate(&self, outputs: ArrayView2<f64>, targets: ArrayView1<f64>) -> (f64, Array2<f64>);

    fn value(&self, outputs: ArrayView2<f64>, targets: ArrayView1<f64>) -> f64 {
        self.evaluate(outputs, targets).0
    }
}

/// A differentiable model with a flat parameter vector.
pub trait Trainable: Clone + Send + Sync {
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    fn forward(&self, inputs: ArrayView2<f64>) -> Array2<f64>;
    /// Mean loss and its gradient with respect to every parameter.
    fn loss_and_grad(
        &self,
        inputs: ArrayView2<f64>,
        targets: ArrayView1<f64>,
        loss: &dyn Loss,
    ) -> (f64, Vec<f64>);
}
