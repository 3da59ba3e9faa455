//! Training losses and the batch container.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

/// Per-sample loss evaluated at the network output `v`.
///
/// Each sample carries a target `y` and a weight `w`; the batch loss is the
/// mean of per-sample values. The ratio-matching loss uses the encoding
/// built by `density_ratio::lsif_training_data`: source rows carry
/// `(y = 0, w = N/N_source)` and target rows `(y = N/N_target, w = 0)`, so
/// that the full-batch mean equals the empirical ratio risk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossSpec {
    /// `(y - v)^2`
    Squared,
    /// `w * (y - v)^2`
    WeightedSquared,
    /// `w * v^2 / 2 - y * v`
    Lsif,
}

impl LossSpec {
    #[inline]
    pub fn value(self, v: f64, y: f64, w: f64) -> f64 {
        match self {
            LossSpec::Squared => {
                let r = y - v;
                r * r
            }
            LossSpec::WeightedSquared => {
                let r = y - v;
                w * r * r
            }
            LossSpec::Lsif => 0.5 * w * v * v - y * v,
        }
    }

    /// Derivative of [`LossSpec::value`] with respect to `v`.
    #[inline]
    pub fn dvalue(self, v: f64, y: f64, w: f64) -> f64 {
        match self {
            LossSpec::Squared => 2.0 * (v - y),
            LossSpec::WeightedSquared => 2.0 * w * (v - y),
            LossSpec::Lsif => w * v - y,
        }
    }
}

/// A flat training batch: inputs (rows), targets and per-sample weights.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub inputs: Array2<f64>,
    pub targets: Array1<f64>,
    pub weights: Array1<f64>,
}

impl TrainData {
    pub fn new(inputs: Array2<f64>, targets: Array1<f64>, weights: Array1<f64>) -> Result<Self> {
        if inputs.nrows() != targets.len() {
            return Err(Error::LengthMismatch {
                left: inputs.nrows(),
                right: targets.len(),
            });
        }
        if inputs.nrows() != weights.len() {
            return Err(Error::LengthMismatch {
                left: inputs.nrows(),
                right: weights.len(),
            });
        }
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidConfig(
                "per-sample weights must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            inputs,
            targets,
            weights,
        })
    }

    /// Uniform unit weights.
    pub fn unweighted(inputs: Array2<f64>, targets: Array1<f64>) -> Result<Self> {
        let n = inputs.nrows();
        Self::new(inputs, targets, Array1::ones(n))
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Gathers the given rows into a new batch.
    pub fn subset(&self, idx: &[usize]) -> TrainData {
        TrainData {
            inputs: self.inputs.select(Axis(0), idx),
            targets: self.targets.select(Axis(0), idx),
            weights: self.weights.select(Axis(0), idx),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};

    #[test]
    fn squared_and_weighted_agree_at_unit_weight() {
        for (v, y) in [(0.0, 1.0), (2.5, -0.5), (1.0, 1.0)] {
            assert_eq!(
                LossSpec::Squared.value(v, y, 1.0),
                LossSpec::WeightedSquared.value(v, y, 1.0)
            );
            assert_eq!(
                LossSpec::Squared.dvalue(v, y, 1.0),
                LossSpec::WeightedSquared.dvalue(v, y, 1.0)
            );
        }
    }

    #[test]
    fn negative_weights_rejected() {
        let err = TrainData::new(arr2(&[[0.0], [1.0]]), arr1(&[0.0, 0.0]), arr1(&[1.0, -0.1]));
        assert!(err.is_err());
    }

    #[test]
    fn subset_gathers_rows() {
        let data = TrainData::new(
            arr2(&[[0.0], [1.0], [2.0]]),
            arr1(&[10.0, 11.0, 12.0]),
            arr1(&[1.0, 2.0, 3.0]),
        )
        .unwrap();
        let sub = data.subset(&[2, 0]);
        assert_eq!(sub.inputs, arr2(&[[2.0], [0.0]]));
        assert_eq!(sub.targets, arr1(&[12.0, 10.0]));
        assert_eq!(sub.weights, arr1(&[3.0, 1.0]));
    }
}
