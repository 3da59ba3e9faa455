//! Dense feedforward ReLU networks with reverse-mode gradients.
//!
//! Networks map `[0,1]^d` to a scalar. Hidden layers use ReLU; the output
//! layer is affine followed by a configurable [`OutputActivation`]. The
//! structural statistics (width, depth, size, weight bound) describing the
//! function class are pure functions of the parameters.

mod io;
mod loss;
mod train;

pub use io::{load_network, read_network, save_network, write_network};
pub use loss::{LossSpec, TrainData};
pub use train::{train, Optimizer, TrainConfig, TrainOutcome};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng;

/// Numerically stable `ln(1 + exp(z))`.
#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Activation applied to the final affine output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputActivation {
    Identity,
    Softplus,
    /// `min(z, xi)` — the clipping operator at level `xi`.
    Clip(f64),
    /// `clamp(z, -b, b)` — symmetric truncation of the regression class.
    ClipSymmetric(f64),
    /// `min(softplus(z), xi)` — nonnegative output truncated at `xi`,
    /// used when fitting a clipped density ratio.
    SoftplusClip(f64),
}

impl OutputActivation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            OutputActivation::Identity => z,
            OutputActivation::Softplus => softplus(z),
            OutputActivation::Clip(xi) => z.min(xi),
            OutputActivation::ClipSymmetric(b) => z.clamp(-b, b),
            OutputActivation::SoftplusClip(xi) => softplus(z).min(xi),
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            OutputActivation::Identity => 1.0,
            OutputActivation::Softplus => sigmoid(z),
            OutputActivation::Clip(xi) => {
                if z < xi {
                    1.0
                } else {
                    0.0
                }
            }
            OutputActivation::ClipSymmetric(b) => {
                if z > -b && z < b {
                    1.0
                } else {
                    0.0
                }
            }
            OutputActivation::SoftplusClip(xi) => {
                if softplus(z) < xi {
                    sigmoid(z)
                } else {
                    0.0
                }
            }
        }
    }
}

/// A fully connected ReLU network with scalar output.
///
/// `layer_dims = [N_0, N_1, ..., N_{D+1}]` where `N_0` is the input
/// dimension and `N_{D+1} = 1`. `weights[l]` has shape
/// `(layer_dims[l+1], layer_dims[l])`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub output_activation: OutputActivation,
}

/// Structural statistics of a network's parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkStats {
    /// Maximum hidden-layer width.
    pub width: usize,
    /// Number of hidden layers.
    pub depth: usize,
    /// Number of nonzero entries across all weight matrices and biases.
    pub size: usize,
    /// Maximum absolute parameter value.
    pub weight_bound: f64,
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "network needs at least input and output layers, got dims {dims:?}"
        )));
    }
    if dims.iter().any(|&n| n == 0) {
        return Err(Error::InvalidConfig(format!("zero-width layer in {dims:?}")));
    }
    if *dims.last().unwrap() != 1 {
        return Err(Error::InvalidConfig(format!(
            "output dimension must be 1, got {}",
            dims.last().unwrap()
        )));
    }
    Ok(())
}

impl MlpNetwork {
    /// All-zero parameters.
    pub fn zeros(layer_dims: Vec<usize>, output_activation: OutputActivation) -> Result<Self> {
        validate_dims(&layer_dims)?;
        let weights = layer_dims
            .windows(2)
            .map(|w| Array2::zeros((w[1], w[0])))
            .collect();
        let biases = layer_dims[1..].iter().map(|&n| Array1::zeros(n)).collect();
        Ok(Self {
            layer_dims,
            weights,
            biases,
            output_activation,
        })
    }

    /// He-scaled Gaussian weights (`std = sqrt(2 / fan_in)`), zero biases.
    pub fn he_init(
        layer_dims: Vec<usize>,
        output_activation: OutputActivation,
        seed: u64,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_dims, output_activation)?;
        let mut rng = rng::chacha(&[seed, 0x4e45_5457_4f52_4b00]);
        for w in &mut net.weights {
            let std = (2.0 / w.ncols() as f64).sqrt();
            let dist = Normal::new(0.0, std).expect("valid std");
            for v in w.iter_mut() {
                *v = dist.sample(&mut rng);
            }
        }
        Ok(net)
    }

    /// Builds a network from explicit parameters, validating shapes.
    pub fn from_parts(
        layer_dims: Vec<usize>,
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
        output_activation: OutputActivation,
    ) -> Result<Self> {
        validate_dims(&layer_dims)?;
        let n_layers = layer_dims.len() - 1;
        if weights.len() != n_layers || biases.len() != n_layers {
            return Err(Error::InvalidConfig(format!(
                "expected {n_layers} weight matrices and bias vectors, got {} and {}",
                weights.len(),
                biases.len()
            )));
        }
        for l in 0..n_layers {
            let (rows, cols) = weights[l].dim();
            if rows != layer_dims[l + 1] || cols != layer_dims[l] {
                return Err(Error::InvalidConfig(format!(
                    "weight {l} has shape {rows}x{cols}, expected {}x{}",
                    layer_dims[l + 1],
                    layer_dims[l]
                )));
            }
            if biases[l].len() != layer_dims[l + 1] {
                return Err(Error::InvalidConfig(format!(
                    "bias {l} has length {}, expected {}",
                    biases[l].len(),
                    layer_dims[l + 1]
                )));
            }
        }
        Ok(Self {
            layer_dims,
            weights,
            biases,
            output_activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    /// Forward pass on a single point.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let n_layers = self.weights.len();
        let mut a = x.to_vec();
        for l in 0..n_layers {
            let w = &self.weights[l];
            let b = &self.biases[l];
            let mut z = vec![0.0; w.nrows()];
            for (i, zi) in z.iter_mut().enumerate() {
                let mut acc = b[i];
                for (j, &aj) in a.iter().enumerate() {
                    acc += w[(i, j)] * aj;
                }
                *zi = acc;
            }
            if l + 1 < n_layers {
                for zi in &mut z {
                    *zi = zi.max(0.0);
                }
            }
            a = z;
        }
        Ok(self.output_activation.apply(a[0]))
    }

    /// Forward pass on a batch of rows, returning one output per row.
    pub fn forward_batch(&self, inputs: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                expected: self.input_dim(),
                got: inputs.ncols(),
            });
        }
        let n_layers = self.weights.len();
        let mut a = inputs.to_owned();
        for l in 0..n_layers {
            let mut z = a.dot(&self.weights[l].t());
            z += &self.biases[l];
            if l + 1 < n_layers {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        let act = self.output_activation;
        Ok(a.index_axis(Axis(1), 0).mapv(|z| act.apply(z)))
    }

    /// Structural statistics `(width, depth, size, weight_bound)`.
    pub fn stats(&self) -> NetworkStats {
        let hidden = &self.layer_dims[1..self.layer_dims.len() - 1];
        let width = hidden.iter().copied().max().unwrap_or(0);
        let depth = hidden.len();
        let mut size = 0;
        let mut bound = 0.0_f64;
        for w in &self.weights {
            size += w.iter().filter(|v| **v != 0.0).count();
            bound = w.iter().fold(bound, |acc, v| acc.max(v.abs()));
        }
        for b in &self.biases {
            size += b.iter().filter(|v| **v != 0.0).count();
            bound = b.iter().fold(bound, |acc, v| acc.max(v.abs()));
        }
        NetworkStats {
            width,
            depth,
            size,
            weight_bound: bound,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }
}

/// Per-parameter gradient structure, shaped like the network parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    fn zeros_like(net: &MlpNetwork) -> Self {
        Self {
            weights: net.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            biases: net.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
        }
    }
}

/// Empirical loss of `net` over `data` (mean of per-sample losses).
pub fn batch_loss(net: &MlpNetwork, data: &TrainData, loss: LossSpec) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyInput("loss batch"));
    }
    let v = net.forward_batch(data.inputs.view())?;
    let n = data.len() as f64;
    let mut acc = 0.0;
    for i in 0..data.len() {
        acc += loss.value(v[i], data.targets[i], data.weights[i]);
    }
    Ok(acc / n)
}

/// Exact reverse-mode gradient of the empirical loss over the batch.
pub fn gradient(net: &MlpNetwork, data: &TrainData, loss: LossSpec) -> Result<Gradients> {
    Ok(backprop(net, data, loss)?.0)
}

/// Backpropagation returning gradients together with the batch loss.
pub(crate) fn backprop(
    net: &MlpNetwork,
    data: &TrainData,
    loss: LossSpec,
) -> Result<(Gradients, f64)> {
    if data.is_empty() {
        return Err(Error::EmptyInput("gradient batch"));
    }
    if data.inputs.ncols() != net.input_dim() {
        return Err(Error::ShapeMismatch {
            expected: net.input_dim(),
            got: data.inputs.ncols(),
        });
    }
    let n_layers = net.weights.len();
    let n = data.len();

    // Forward with caches: inputs to each affine layer and pre-activations.
    let mut layer_inputs: Vec<Array2<f64>> = Vec::with_capacity(n_layers);
    let mut pre_acts: Vec<Array2<f64>> = Vec::with_capacity(n_layers);
    let mut a = data.inputs.clone();
    for l in 0..n_layers {
        let mut z = a.dot(&net.weights[l].t());
        z += &net.biases[l];
        layer_inputs.push(a);
        if l + 1 < n_layers {
            a = z.mapv(|v| v.max(0.0));
        } else {
            a = z.clone();
        }
        pre_acts.push(z);
    }

    let act = net.output_activation;
    let z_out = pre_acts.last().unwrap();
    let mut loss_acc = 0.0;
    // dL/dz at the output, already divided by the batch size.
    let mut delta = Array2::<f64>::zeros((n, 1));
    for i in 0..n {
        let z = z_out[(i, 0)];
        let v = act.apply(z);
        let (y, w) = (data.targets[i], data.weights[i]);
        loss_acc += loss.value(v, y, w);
        delta[(i, 0)] = loss.dvalue(v, y, w) * act.derivative(z) / n as f64;
    }
    let loss_value = loss_acc / n as f64;

    let mut grads = Gradients::zeros_like(net);
    for l in (0..n_layers).rev() {
        grads.weights[l] = delta.t().dot(&layer_inputs[l]);
        grads.biases[l] = delta.sum_axis(Axis(0));
        if l > 0 {
            let mut next = delta.dot(&net.weights[l]);
            next.zip_mut_with(&pre_acts[l - 1], |d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = next;
        }
    }
    Ok((grads, loss_value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};

    fn one_unit_net(a0: f64, b0: f64, a1: f64, b1: f64, act: OutputActivation) -> MlpNetwork {
        MlpNetwork::from_parts(
            vec![1, 1, 1],
            vec![arr2(&[[a0]]), arr2(&[[a1]])],
            vec![arr1(&[b0]), arr1(&[b1])],
            act,
        )
        .unwrap()
    }

    #[test]
    fn zero_network_maps_everything_to_zero() {
        let net = MlpNetwork::zeros(vec![3, 4, 1], OutputActivation::Identity).unwrap();
        for x in [[0.0, 0.0, 0.0], [0.3, 0.9, 0.1], [1.0, 1.0, 1.0]] {
            assert_eq!(net.forward(&x).unwrap(), 0.0);
        }
    }

    #[test]
    fn relu_kills_negative_input() {
        let net = one_unit_net(1.0, 0.0, 1.0, 0.0, OutputActivation::Identity);
        assert_eq!(net.forward(&[-2.0]).unwrap(), 0.0);
        assert_eq!(net.forward(&[3.0]).unwrap(), 3.0);
    }

    #[test]
    fn clip_caps_output() {
        let net = one_unit_net(1.0, 0.0, 1.0, 0.0, OutputActivation::Clip(2.0));
        assert_eq!(net.forward(&[3.0]).unwrap(), 2.0);
        assert_eq!(net.forward(&[1.5]).unwrap(), 1.5);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let net = MlpNetwork::zeros(vec![3, 2, 1], OutputActivation::Identity).unwrap();
        assert!(matches!(
            net.forward(&[0.1, 0.2]),
            Err(Error::ShapeMismatch {
                expected: 3,
                got: 2
            })
        ));
    }

    #[test]
    fn batch_forward_matches_single() {
        let net = MlpNetwork::he_init(vec![2, 5, 3, 1], OutputActivation::Softplus, 9).unwrap();
        let xs = arr2(&[[0.1, 0.9], [0.5, 0.5], [0.0, 1.0]]);
        let batch = net.forward_batch(xs.view()).unwrap();
        for (i, row) in xs.rows().into_iter().enumerate() {
            let single = net.forward(row.as_slice().unwrap()).unwrap();
            assert!((batch[i] - single).abs() < 1e-14);
        }
    }

    #[test]
    fn stats_count_dense_network() {
        let mut net = MlpNetwork::zeros(vec![3, 5, 1], OutputActivation::Identity).unwrap();
        for w in &mut net.weights {
            w.fill(0.25);
        }
        for b in &mut net.biases {
            b.fill(-0.5);
        }
        let s = net.stats();
        assert_eq!(s.width, 5);
        assert_eq!(s.depth, 1);
        assert_eq!(s.size, 3 * 5 + 5 + 5 + 1);
        assert_eq!(s.weight_bound, 0.5);
    }

    #[test]
    fn stats_track_zeroed_entries() {
        let mut net = MlpNetwork::zeros(vec![3, 5, 1], OutputActivation::Identity).unwrap();
        for w in &mut net.weights {
            w.fill(1.0);
        }
        let dense = net.stats().size;
        net.weights[0][(0, 0)] = 0.0;
        net.weights[0][(2, 1)] = 0.0;
        assert_eq!(net.stats().size, dense - 2);
    }

    #[test]
    fn zeroing_never_increases_size_or_bound() {
        let net = MlpNetwork::he_init(vec![2, 4, 4, 1], OutputActivation::Identity, 3).unwrap();
        let base = net.stats();
        for l in 0..net.weights.len() {
            for idx in 0..net.weights[l].len() {
                let mut copy = net.clone();
                let flat = copy.weights[l].as_slice_mut().unwrap();
                flat[idx] = 0.0;
                let s = copy.stats();
                assert!(s.size <= base.size);
                assert!(s.weight_bound <= base.weight_bound);
            }
        }
    }

    #[test]
    fn all_zero_weight_bound_is_zero() {
        let net = MlpNetwork::zeros(vec![4, 3, 1], OutputActivation::Identity).unwrap();
        assert_eq!(net.stats().weight_bound, 0.0);
        assert_eq!(net.stats().size, 0);
    }

    #[test]
    fn single_linear_unit_gradient_closed_form() {
        // f(x) = w*x + b with w=1, b=0; squared loss on (x=1, y=0):
        // dL/dw = 2*(w*x - y)*x = 2.
        let net = MlpNetwork::from_parts(
            vec![1, 1],
            vec![arr2(&[[1.0]])],
            vec![arr1(&[0.0])],
            OutputActivation::Identity,
        )
        .unwrap();
        let data = TrainData::new(arr2(&[[1.0]]), arr1(&[0.0]), arr1(&[1.0])).unwrap();
        let g = gradient(&net, &data, LossSpec::Squared).unwrap();
        assert!((g.weights[0][(0, 0)] - 2.0).abs() < 1e-14);
        assert!((g.biases[0][0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn frozen_parameter_has_zero_gradient() {
        // A dead ReLU unit (large negative bias) contributes nothing, so its
        // incoming weight gradient is exactly zero.
        let mut net = MlpNetwork::he_init(vec![1, 2, 1], OutputActivation::Identity, 5).unwrap();
        net.biases[0][0] = -100.0;
        let data = TrainData::new(
            arr2(&[[0.2], [0.8], [0.5]]),
            arr1(&[1.0, 0.0, 0.5]),
            arr1(&[1.0, 1.0, 1.0]),
        )
        .unwrap();
        let g = gradient(&net, &data, LossSpec::Squared).unwrap();
        assert_eq!(g.weights[0][(0, 0)], 0.0);
        assert_eq!(g.biases[0][0], 0.0);
    }
}
