//! Mini-batch training loop with early stopping and plateau decay.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

use super::loss::{LossSpec, TrainData};
use super::{backprop, batch_loss, Gradients, MlpNetwork};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Adam {
        lr0: f64,
        decay_factor: f64,
    },
    SgdNesterov {
        lr0: f64,
        momentum: f64,
        decay_factor: f64,
    },
}

impl Optimizer {
    fn lr0(&self) -> f64 {
        match self {
            Optimizer::Adam { lr0, .. } | Optimizer::SgdNesterov { lr0, .. } => *lr0,
        }
    }

    fn decay_factor(&self) -> f64 {
        match self {
            Optimizer::Adam { decay_factor, .. }
            | Optimizer::SgdNesterov { decay_factor, .. } => *decay_factor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Adam recipe used for ratio networks: initial rate 1e-3, decayed by 0.5.
    pub fn adam(seed: u64) -> Self {
        Self {
            optimizer: Optimizer::Adam {
                lr0: 1e-3,
                decay_factor: 0.5,
            },
            max_epochs: 200,
            batch_size: 256,
            early_stop_patience: 20,
            seed,
        }
    }

    /// SGD recipe used for regression networks: Nesterov momentum 0.9,
    /// initial rate 0.01, decayed by 0.5.
    pub fn sgd_nesterov(seed: u64) -> Self {
        Self {
            optimizer: Optimizer::SgdNesterov {
                lr0: 0.01,
                momentum: 0.9,
                decay_factor: 0.5,
            },
            max_epochs: 200,
            batch_size: 256,
            early_stop_patience: 20,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let lr0 = self.optimizer.lr0();
        if !(lr0 > 0.0) {
            return bad(format!("learning rate must be positive, got {lr0}"));
        }
        if let Optimizer::SgdNesterov { momentum, .. } = self.optimizer {
            if !(0.0..1.0).contains(&momentum) {
                return bad(format!("momentum must be in [0,1), got {momentum}"));
            }
        }
        let decay = self.optimizer.decay_factor();
        if !(decay > 0.0 && decay <= 1.0) {
            return bad(format!("decay factor must be in (0,1], got {decay}"));
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.early_stop_patience == 0 {
            return bad("early_stop_patience must be positive".into());
        }
        Ok(())
    }
}

/// Result of a training run. `net` carries the parameters that achieved the
/// best monitored loss (validation loss, or training loss without a
/// validation set).
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: MlpNetwork,
    pub best_loss: f64,
    pub epochs_run: usize,
}

enum OptimizerState {
    Adam {
        m: Gradients,
        v: Gradients,
        step: usize,
    },
    Nesterov {
        buf: Gradients,
        momentum: f64,
    },
}

impl OptimizerState {
    fn new(opt: &Optimizer, net: &MlpNetwork) -> Self {
        match opt {
            Optimizer::Adam { .. } => OptimizerState::Adam {
                m: Gradients::zeros_like(net),
                v: Gradients::zeros_like(net),
                step: 0,
            },
            Optimizer::SgdNesterov { momentum, .. } => OptimizerState::Nesterov {
                buf: Gradients::zeros_like(net),
                momentum: *momentum,
            },
        }
    }

    fn apply(&mut self, net: &mut MlpNetwork, grads: &Gradients, lr: f64) {
        match self {
            OptimizerState::Adam { m, v, step } => {
                *step += 1;
                let bc1 = 1.0 - ADAM_BETA1.powi(*step as i32);
                let bc2 = 1.0 - ADAM_BETA2.powi(*step as i32);
                for l in 0..net.weights.len() {
                    adam_update(
                        net.weights[l].as_slice_mut().unwrap(),
                        m.weights[l].as_slice_mut().unwrap(),
                        v.weights[l].as_slice_mut().unwrap(),
                        grads.weights[l].as_slice().unwrap(),
                        lr,
                        bc1,
                        bc2,
                    );
                    adam_update(
                        net.biases[l].as_slice_mut().unwrap(),
                        m.biases[l].as_slice_mut().unwrap(),
                        v.biases[l].as_slice_mut().unwrap(),
                        grads.biases[l].as_slice().unwrap(),
                        lr,
                        bc1,
                        bc2,
                    );
                }
            }
            OptimizerState::Nesterov { buf, momentum } => {
                let mu = *momentum;
                for l in 0..net.weights.len() {
                    nesterov_update(
                        net.weights[l].as_slice_mut().unwrap(),
                        buf.weights[l].as_slice_mut().unwrap(),
                        grads.weights[l].as_slice().unwrap(),
                        lr,
                        mu,
                    );
                    nesterov_update(
                        net.biases[l].as_slice_mut().unwrap(),
                        buf.biases[l].as_slice_mut().unwrap(),
                        grads.biases[l].as_slice().unwrap(),
                        lr,
                        mu,
                    );
                }
            }
        }
    }
}

fn adam_update(p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64], lr: f64, bc1: f64, bc2: f64) {
    for i in 0..p.len() {
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
        let mhat = m[i] / bc1;
        let vhat = v[i] / bc2;
        p[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
    }
}

fn nesterov_update(p: &mut [f64], buf: &mut [f64], g: &[f64], lr: f64, mu: f64) {
    for i in 0..p.len() {
        buf[i] = mu * buf[i] + g[i];
        p[i] -= lr * (g[i] + mu * buf[i]);
    }
}

/// Trains a network, returning the parameters with the best monitored loss.
///
/// The monitored loss is the full-batch loss on `validation` when present,
/// otherwise on the training data. The learning rate decays by the
/// configured factor when the monitored loss fails to improve for
/// `patience/2` consecutive epochs; training stops after `patience` epochs
/// without improvement. A non-finite loss aborts with
/// [`Error::DivergedTraining`] carrying the epoch index.
pub fn train(
    net: MlpNetwork,
    data: &TrainData,
    loss: LossSpec,
    cfg: &TrainConfig,
    validation: Option<&TrainData>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput("training data"));
    }
    let mut net = net;
    let monitor = validation.unwrap_or(data);

    let mut best_loss = batch_loss(&net, monitor, loss)?;
    if !best_loss.is_finite() {
        return Err(Error::DivergedTraining { epoch: 0 });
    }
    let mut best_net = net.clone();

    let mut state = OptimizerState::new(&cfg.optimizer, &net);
    let mut lr = cfg.optimizer.lr0();
    let decay = cfg.optimizer.decay_factor();
    let plateau_window = (cfg.early_stop_patience / 2).max(1);

    let mut rng = rng::chacha(&[cfg.seed, 0x5452_4149_4e00_0001]);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut since_improvement = 0usize;
    let mut since_decay = 0usize;
    let mut epochs_run = 0usize;

    for epoch in 1..=cfg.max_epochs {
        epochs_run = epoch;
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.subset(chunk);
            let (grads, batch_loss_value) = backprop(&net, &batch, loss)?;
            if !batch_loss_value.is_finite() {
                return Err(Error::DivergedTraining { epoch });
            }
            state.apply(&mut net, &grads, lr);
        }

        let monitored = batch_loss(&net, monitor, loss)?;
        if !monitored.is_finite() {
            return Err(Error::DivergedTraining { epoch });
        }
        if monitored < best_loss {
            best_loss = monitored;
            best_net = net.clone();
            since_improvement = 0;
            since_decay = 0;
        } else {
            since_improvement += 1;
            since_decay += 1;
        }
        if since_decay >= plateau_window {
            lr *= decay;
            since_decay = 0;
        }
        if since_improvement >= cfg.early_stop_patience {
            break;
        }
    }

    Ok(TrainOutcome {
        net: best_net,
        best_loss,
        epochs_run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::OutputActivation;
    use ndarray::{arr1, arr2, Array1, Array2};

    fn line_data(n: usize, slope: f64) -> TrainData {
        let xs: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| slope * x).collect();
        TrainData::unweighted(
            Array2::from_shape_vec((n, 1), xs).unwrap(),
            Array1::from_vec(ys),
        )
        .unwrap()
    }

    #[test]
    fn constant_target_loss_never_worse_than_initial() {
        let data = TrainData::unweighted(
            arr2(&[[0.1], [0.4], [0.7], [0.9]]),
            arr1(&[3.0, 3.0, 3.0, 3.0]),
        )
        .unwrap();
        let net = MlpNetwork::he_init(vec![1, 4, 1], OutputActivation::Identity, 11).unwrap();
        let initial = batch_loss(&net, &data, LossSpec::Squared).unwrap();
        let cfg = TrainConfig {
            max_epochs: 50,
            ..TrainConfig::sgd_nesterov(11)
        };
        let out = train(net, &data, LossSpec::Squared, &cfg, None).unwrap();
        let final_loss = batch_loss(&out.net, &data, LossSpec::Squared).unwrap();
        assert!(final_loss <= initial + 1e-12);
    }

    #[test]
    fn zero_weights_leave_parameters_unchanged() {
        let data = TrainData::new(
            arr2(&[[0.2], [0.8]]),
            arr1(&[1.0, -1.0]),
            arr1(&[0.0, 0.0]),
        )
        .unwrap();
        let net = MlpNetwork::he_init(vec![1, 3, 1], OutputActivation::Identity, 7).unwrap();
        let before = net.clone();
        let cfg = TrainConfig {
            max_epochs: 5,
            ..TrainConfig::adam(7)
        };
        let out = train(net, &data, LossSpec::WeightedSquared, &cfg, None).unwrap();
        assert_eq!(out.net.weights, before.weights);
        assert_eq!(out.net.biases, before.biases);
    }

    #[test]
    fn linear_capacity_net_fits_y_equals_2x() {
        // Least-squares optimum is exact (w=2, b=0, residual 0), so training
        // MSE should approach the oracle value of zero.
        let data = line_data(64, 2.0);
        let net = MlpNetwork::he_init(vec![1, 1], OutputActivation::Identity, 13).unwrap();
        let cfg = TrainConfig {
            batch_size: 8,
            ..TrainConfig::sgd_nesterov(13)
        };
        let out = train(net, &data, LossSpec::Squared, &cfg, None).unwrap();
        let mse = batch_loss(&out.net, &data, LossSpec::Squared).unwrap();
        assert!(mse < 1e-3, "training MSE {mse}");
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let data = line_data(32, 1.5);
        let cfg = TrainConfig {
            max_epochs: 20,
            ..TrainConfig::adam(99)
        };
        let run = || {
            let net = MlpNetwork::he_init(vec![1, 6, 1], OutputActivation::Identity, 42).unwrap();
            train(net, &data, LossSpec::Squared, &cfg, None).unwrap().net
        };
        let (a, b) = (run(), run());
        for l in 0..a.weights.len() {
            let wa = a.weights[l].iter().map(|v| v.to_bits());
            let wb = b.weights[l].iter().map(|v| v.to_bits());
            assert!(wa.eq(wb), "weights differ at layer {l}");
            let ba = a.biases[l].iter().map(|v| v.to_bits());
            let bb = b.biases[l].iter().map(|v| v.to_bits());
            assert!(ba.eq(bb), "biases differ at layer {l}");
        }
    }

    #[test]
    fn diverging_run_reports_epoch() {
        // An absurd learning rate blows the parameters up to non-finite values.
        let data = line_data(16, 1.0);
        let net = MlpNetwork::he_init(vec![1, 4, 1], OutputActivation::Identity, 3).unwrap();
        let cfg = TrainConfig {
            optimizer: Optimizer::SgdNesterov {
                lr0: 1e150,
                momentum: 0.9,
                decay_factor: 1.0,
            },
            max_epochs: 10,
            batch_size: 4,
            early_stop_patience: 10,
            seed: 3,
        };
        match train(net, &data, LossSpec::Squared, &cfg, None) {
            Err(Error::DivergedTraining { epoch }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = TrainConfig::adam(0);
        cfg.optimizer = Optimizer::Adam {
            lr0: 0.0,
            decay_factor: 0.5,
        };
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::sgd_nesterov(0);
        cfg.optimizer = Optimizer::SgdNesterov {
            lr0: 0.1,
            momentum: 1.0,
            decay_factor: 0.5,
        };
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::adam(0);
        cfg.optimizer = Optimizer::Adam {
            lr0: 0.1,
            decay_factor: 1.5,
        };
        assert!(cfg.validate().is_err());
    }
}
