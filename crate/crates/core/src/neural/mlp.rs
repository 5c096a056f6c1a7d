use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, Loss, Trainable};
use crate::error::{Error, Result};

pub const NETWORK_FORMAT_VERSION: u32 = 1;

/// Architecture of a dense network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_dim: usize,
    /// One activation per output neuron, linear or softplus.
    pub output_activations: Vec<Activation>,
}

impl MlpSpec {
    pub fn new(
        input_dim: usize,
        hidden_sizes: Vec<usize>,
        hidden_activation: Activation,
        output_activations: Vec<Activation>,
    ) -> Result<Self> {
        let spec = Self {
            input_dim,
            hidden_sizes,
            hidden_activation,
            output_dim: output_activations.len(),
            output_activations,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_sizes.contains(&0) {
            return Err(Error::Config("network dimensions must be at least 1".into()));
        }
        if !Activation::HIDDEN.contains(&self.hidden_activation) {
            return Err(Error::Config(format!(
                "hidden activation must be relu, softplus, logistic or tanh, got {}",
                self.hidden_activation.name()
            )));
        }
        if self.output_activations.len() != self.output_dim {
            return Err(Error::Config("one output activation per output neuron".into()));
        }
        if self
            .output_activations
            .iter()
            .any(|a| !matches!(a, Activation::Linear | Activation::Softplus))
        {
            return Err(Error::Config("output activations must be linear or softplus".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of each layer in order.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_sizes.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden_sizes {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_dim));
        dims
    }

    pub fn n_params(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    /// Scaled-uniform (Glorot) weights, zero biases.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(self.n_params());
        for (fan_in, fan_out) in self.layer_dims() {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)));
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        params
    }

    fn activation(&self, layer: usize, neuron: usize) -> Activation {
        if layer == self.hidden_sizes.len() {
            self.output_activations[neuron]
        } else {
            self.hidden_activation
        }
    }

    /// Forward pass with an explicit parameter slice; returns the output and
    /// the per-layer cache needed by [`MlpSpec::backward_with`].
    pub fn forward_with(&self, params: &[f64], inputs: ArrayView2<f64>) -> Result<(Array2<f64>, Cache)> {
        if inputs.ncols() != self.input_dim {
            return Err(Error::Domain(format!(
                "network expects {} inputs, batch has {} columns",
                self.input_dim,
                inputs.ncols()
            )));
        }
        let mut cache = Cache { pre: Vec::new(), post: Vec::new() };
        let mut offset = 0;
        let mut current = inputs.to_owned();
        for (l, (fan_in, fan_out)) in self.layer_dims().into_iter().enumerate() {
            let w = ArrayView2::from_shape((fan_out, fan_in), &params[offset..offset + fan_in * fan_out])
                .expect("layout");
            offset += fan_in * fan_out;
            let b = ArrayView1::from(&params[offset..offset + fan_out]);
            offset += fan_out;
            let mut z = current.dot(&w.t());
            z += &b;
            let mut a = z.clone();
            for (j, mut col) in a.axis_iter_mut(Axis(1)).enumerate() {
                let act = self.activation(l, j);
                if act != Activation::Linear {
                    col.mapv_inplace(|v| act.apply(v));
                }
            }
            cache.pre.push(z);
            cache.post.push(current);
            current = a;
        }
        Ok((current, cache))
    }

    /// Parameter gradient given `d_out = ∂L/∂outputs`, plus `∂L/∂inputs`.
    pub fn backward_with(&self, params: &[f64], cache: &Cache, d_out: ArrayView2<f64>) -> (Vec<f64>, Array2<f64>) {
        let dims = self.layer_dims();
        let mut offsets = Vec::with_capacity(dims.len());
        let mut off = 0;
        for &(i, o) in &dims {
            offsets.push(off);
            off += i * o + o;
        }
        let mut grads = vec![0.0; off];
        let mut delta = d_out.to_owned();
        for l in (0..dims.len()).rev() {
            let (fan_in, fan_out) = dims[l];
            let z = &cache.pre[l];
            // Output of this layer is the next layer's input, or recomputed at the top.
            let a_out: Array2<f64> = if l + 1 < dims.len() {
                cache.post[l + 1].clone()
            } else {
                let mut a = z.clone();
                for (j, mut col) in a.axis_iter_mut(Axis(1)).enumerate() {
                    let act = self.activation(l, j);
                    col.mapv_inplace(|v| act.apply(v));
                }
                a
            };
            for j in 0..fan_out {
                let act = self.activation(l, j);
                if act == Activation::Linear {
                    continue;
                }
                let zc = z.column(j);
                let ac = a_out.column(j);
                let mut dc = delta.column_mut(j);
                for ((d, &zv), &av) in dc.iter_mut().zip(zc.iter()).zip(ac.iter()) {
                    *d *= act.derivative(zv, av);
                }
            }
            let a_in = &cache.post[l];
            let dw = delta.t().dot(a_in);
            let db = delta.sum_axis(Axis(0));
            let o = offsets[l];
            grads[o..o + fan_in * fan_out].copy_from_slice(dw.as_slice().expect("contiguous"));
            grads[o + fan_in * fan_out..o + fan_in * fan_out + fan_out]
                .copy_from_slice(db.as_slice().expect("contiguous"));
            let w = ArrayView2::from_shape((fan_out, fan_in), &params[o..o + fan_in * fan_out]).expect("layout");
            delta = delta.dot(&w);
        }
        (grads, delta)
    }
}

/// Pre-activations and layer inputs from a forward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
}

/// A dense network with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: Vec<f64>,
}

impl Mlp {
    pub fn new(spec: MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let params = spec.init_params(seed);
        Ok(Self { spec, params })
    }

    pub fn with_params(spec: MlpSpec, params: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.n_params() {
            return Err(Error::Config(format!(
                "network needs {} parameters, got {}",
                spec.n_params(),
                params.len()
            )));
        }
        Ok(Self { spec, params })
    }

    pub fn try_forward(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.spec.forward_with(&self.params, inputs)?.0)
    }

    pub fn predict_one(&self, input: &[f64]) -> Vec<f64> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row");
        self.forward(x).row(0).to_vec()
    }

    pub fn to_document(&self) -> NetworkDocument {
        NetworkDocument {
            format_version: NETWORK_FORMAT_VERSION,
            spec: self.spec.clone(),
            params: self.params.clone(),
        }
    }

    pub fn from_document(doc: NetworkDocument) -> Result<Self> {
        if doc.format_version != NETWORK_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported network format version {}",
                doc.format_version
            )));
        }
        Self::with_params(doc.spec, doc.params)
    }
}

impl Trainable for Mlp {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn forward(&self, inputs: ArrayView2<f64>) -> Array2<f64> {
        self.try_forward(inputs).expect("input width matches the network")
    }

    fn loss_and_grad(&self, inputs: ArrayView2<f64>, targets: ArrayView1<f64>, loss: &dyn Loss) -> (f64, Vec<f64>) {
        let (out, cache) = self.spec.forward_with(&self.params, inputs).expect("input width");
        let (value, d_out) = loss.evaluate(out.view(), targets);
        let (grads, _) = self.spec.backward_with(&self.params, &cache, d_out.view());
        (value, grads)
    }
}

/// Persisted network: spec plus flat row-major weights in layer order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDocument {
    pub format_version: u32,
    pub spec: MlpSpec,
    pub params: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_network_outputs_zero() {
        let spec = MlpSpec::new(3, vec![4], Activation::Tanh, vec![Activation::Linear; 2]).unwrap();
        let net = Mlp::with_params(spec.clone(), vec![0.0; spec.n_params()]).unwrap();
        let out = net.forward(array![[1.0, 2.0, 3.0], [0.5, -1.0, 2.0]].view());
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_linear_neuron() {
        let spec = MlpSpec::new(1, vec![], Activation::Relu, vec![Activation::Linear]).unwrap();
        let net = Mlp::with_params(spec, vec![2.0, 1.0]).unwrap();
        assert_eq!(net.predict_one(&[3.0]), vec![7.0]);
    }

    #[test]
    fn softplus_output_at_zero() {
        let spec = MlpSpec::new(2, vec![], Activation::Relu, vec![Activation::Linear, Activation::Softplus]).unwrap();
        let net = Mlp::with_params(spec, vec![0.0; 6]).unwrap();
        let out = net.predict_one(&[0.3, 0.9]);
        assert_eq!(out[0], 0.0);
        assert!((out[1] - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_and_bad_specs() {
        let spec = MlpSpec::new(3, vec![2], Activation::Relu, vec![Activation::Linear]).unwrap();
        let net = Mlp::new(spec, 1).unwrap();
        assert!(net.try_forward(array![[1.0, 2.0]].view()).is_err());
        assert!(MlpSpec::new(3, vec![0], Activation::Relu, vec![Activation::Linear]).is_err());
        assert!(MlpSpec::new(3, vec![2], Activation::Linear, vec![Activation::Linear]).is_err());
        assert!(MlpSpec::new(3, vec![2], Activation::Relu, vec![Activation::Tanh]).is_err());
    }

    #[test]
    fn glorot_limits_and_document_round_trip() {
        let spec = MlpSpec::new(51, vec![15, 10, 10], Activation::Relu, vec![Activation::Linear, Activation::Softplus]).unwrap();
        let net = Mlp::new(spec.clone(), 4).unwrap();
        let limit = (6.0f64 / 66.0).sqrt();
        assert!(net.params[..51 * 15].iter().all(|w| w.abs() <= limit));
        assert_eq!(net.params.len(), 51 * 15 + 15 + 15 * 10 + 10 + 10 * 10 + 10 + 10 * 2 + 2);
        let json = serde_json::to_string(&net.to_document()).unwrap();
        let back = Mlp::from_document(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, net);
    }
}
