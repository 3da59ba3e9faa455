//! Target-regression estimators under covariate shift.
//!
//! Three estimators of the target regression function from source-domain
//! responses:
//!
//! - **URE** — the ratio is unknown: the source subjects are split in two,
//!   the ratio is fitted on one half against the target covariates, and the
//!   regression minimizes the ratio-weighted squared loss on the other half;
//! - **KRE** — the ratio is known: the weighted fit uses the full source
//!   dataset;
//! - **NE** — the unweighted fit on all source data, ignoring the shift.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array1;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::RepeatedDataset;
use crate::density_ratio::{self, fit_ratio, RatioFitConfig, RatioKind, RatioModel};
use crate::error::{Error, Result};
use crate::nn::{
    self, load_network, save_network, LossSpec, MlpNetwork, OutputActivation, TrainConfig,
    TrainData,
};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Ure,
    Kre,
    Ne,
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimatorKind::Ure => write!(f, "URE"),
            EstimatorKind::Kre => write!(f, "KRE"),
            EstimatorKind::Ne => write!(f, "NE"),
        }
    }
}

/// Record of the subject-level split used by URE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub seed: u64,
    pub fraction: f64,
    /// Subject indices assigned to the regression half.
    pub first: Vec<usize>,
    /// Subject indices assigned to the ratio half.
    pub second: Vec<usize>,
}

/// A fitted target-regression estimator.
#[derive(Debug, Clone)]
pub struct FittedRegression {
    pub net: MlpNetwork,
    pub kind: EstimatorKind,
    pub ratio_used: Option<RatioModel>,
    pub split: Option<SplitRecord>,
}

impl FittedRegression {
    /// Deterministic forward pass of the fitted network.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.net.forward(x)
    }
}

/// Deterministic subject-index assignment: the first part receives
/// `floor(fraction * n)` subjects of a seeded permutation.
pub fn split_assignment(
    n_subjects: usize,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0 < fraction && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split fraction must be in (0,1), got {fraction}"
        )));
    }
    let k = (fraction * n_subjects as f64).floor() as usize;
    if k == 0 || k == n_subjects {
        return Err(Error::InvalidSplit {
            n_first: k,
            n_second: n_subjects - k,
        });
    }
    let mut idx: Vec<usize> = (0..n_subjects).collect();
    let mut rng = rng::chacha(&[seed, 0x5350_4c49_5400_0001]);
    idx.shuffle(&mut rng);
    let second = idx.split_off(k);
    Ok((idx, second))
}

/// Partitions a dataset by subject (never by observation). The union of the
/// two parts equals the input; no subject appears in both.
pub fn split_source(
    data: &RepeatedDataset,
    fraction: f64,
    seed: u64,
) -> Result<(RepeatedDataset, RepeatedDataset)> {
    let (first, second) = split_assignment(data.n_subjects(), fraction, seed)?;
    Ok((data.select_subjects(&first), data.select_subjects(&second)))
}

/// Ratio-weighted empirical risk `(1/N) sum r(x_ij) (y_ij - f(x_ij))^2`.
pub fn weighted_erm_loss<F: Fn(&[f64]) -> f64>(
    f: F,
    data: &RepeatedDataset,
    ratio: &RatioModel,
) -> Result<f64> {
    if !data.has_responses() {
        return Err(Error::MissingResponses);
    }
    let mut acc = 0.0;
    let mut n = 0usize;
    for (i, j, row) in data.iter_rows() {
        let y = data.subjects[i].responses.as_ref().unwrap()[j];
        let resid = y - f(row);
        acc += ratio.evaluate(row)? * resid * resid;
        n += 1;
    }
    Ok(acc / n as f64)
}

/// Configuration of the regression-network fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFitConfig {
    /// Hidden-layer widths.
    pub hidden_dims: Vec<usize>,
    pub train: TrainConfig,
    /// Optional symmetric output truncation of the regression class.
    pub output_bound: Option<f64>,
}

impl RegressionFitConfig {
    /// Three hidden layers of width 128, Nesterov SGD recipe, identity output.
    pub fn default_with_seed(seed: u64) -> Self {
        Self {
            hidden_dims: vec![128, 128, 128],
            train: TrainConfig::sgd_nesterov(seed),
            output_bound: None,
        }
    }

    fn output_activation(&self) -> OutputActivation {
        match self.output_bound {
            Some(b) => OutputActivation::ClipSymmetric(b),
            None => OutputActivation::Identity,
        }
    }
}

/// Configuration of the full URE pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UreConfig {
    /// Fraction of source subjects assigned to the regression half.
    pub split_fraction: f64,
    pub split_seed: u64,
    pub ratio: RatioFitConfig,
    pub regression: RegressionFitConfig,
}

impl UreConfig {
    pub fn default_with_seed(seed: u64) -> Self {
        Self {
            split_fraction: 0.5,
            split_seed: rng::mix_seed(&[seed, 1]),
            ratio: RatioFitConfig::default_with_seed(rng::mix_seed(&[seed, 2])),
            regression: RegressionFitConfig::default_with_seed(rng::mix_seed(&[seed, 3])),
        }
    }
}

/// Validation data for the URE stages. The regression stage monitors the
/// ratio-weighted loss on a source-law validation set; the ratio stage
/// monitors the empirical ratio risk on held-out (source, target) covariates.
#[derive(Debug, Clone, Copy)]
pub struct UreValidation<'a> {
    pub regression: Option<&'a RepeatedDataset>,
    pub ratio: Option<(&'a RepeatedDataset, &'a RepeatedDataset)>,
}

impl<'a> UreValidation<'a> {
    pub fn none() -> Self {
        Self {
            regression: None,
            ratio: None,
        }
    }
}

/// Builds the weighted training batch for a regression fit, scaling the
/// weights by `1/scale`.
fn weighted_train_data(
    data: &RepeatedDataset,
    ratio: Option<&RatioModel>,
    scale: f64,
) -> Result<TrainData> {
    if !data.has_responses() {
        return Err(Error::MissingResponses);
    }
    data.check_unit_cube()?;
    let inputs = data.flatten_covariates();
    let targets = data.flatten_responses()?;
    let weights = match ratio {
        Some(r) => r.evaluate_dataset(data)? / scale,
        None => Array1::ones(inputs.nrows()),
    };
    TrainData::new(inputs, targets, weights)
}

fn fit_regression_net(
    data: &RepeatedDataset,
    ratio: Option<&RatioModel>,
    cfg: &RegressionFitConfig,
    validation: Option<&RepeatedDataset>,
) -> Result<MlpNetwork> {
    // The weighted objective's minimizer is invariant to a positive
    // rescaling of the weights, but gradient magnitudes are not; training
    // normalizes the weights to unit mean so the optimizer recipe keeps a
    // consistent step scale whatever the fitted ratio's overall level.
    // The same factor applies to the validation monitor.
    let scale = match ratio {
        Some(r) => {
            let w = r.evaluate_dataset(data)?;
            let mean = w.mean().unwrap_or(1.0);
            if mean > 0.0 {
                mean
            } else {
                1.0
            }
        }
        None => 1.0,
    };
    let train_data = weighted_train_data(data, ratio, scale)?;
    let val_data = match validation {
        Some(v) => Some(weighted_train_data(v, ratio, scale)?),
        None => None,
    };
    let loss = match ratio {
        Some(_) => LossSpec::WeightedSquared,
        None => LossSpec::Squared,
    };
    let mut dims = vec![data.d];
    dims.extend_from_slice(&cfg.hidden_dims);
    dims.push(1);
    let net = MlpNetwork::he_init(dims, cfg.output_activation(), cfg.train.seed)?;
    Ok(nn::train(net, &train_data, loss, &cfg.train, val_data.as_ref())?.net)
}

/// Naive estimator: unweighted empirical-risk minimizer over all source
/// observations, ignoring the covariate shift.
pub fn fit_naive(
    source: &RepeatedDataset,
    cfg: &RegressionFitConfig,
    validation: Option<&RepeatedDataset>,
) -> Result<FittedRegression> {
    let net = fit_regression_net(source, None, cfg, validation)?;
    Ok(FittedRegression {
        net,
        kind: EstimatorKind::Ne,
        ratio_used: None,
        split: None,
    })
}

/// Known-ratio estimator: ratio-weighted fit on the full source dataset.
pub fn fit_kre(
    source: &RepeatedDataset,
    ratio: &RatioModel,
    cfg: &RegressionFitConfig,
    validation: Option<&RepeatedDataset>,
) -> Result<FittedRegression> {
    let net = fit_regression_net(source, Some(ratio), cfg, validation)?;
    Ok(FittedRegression {
        net,
        kind: EstimatorKind::Kre,
        ratio_used: Some(ratio.clone()),
        split: None,
    })
}

/// Unknown-ratio estimator: splits the source subjects, fits the ratio on
/// the second half against the target covariates, then fits the regression
/// on the first half with the fitted ratio as weights.
pub fn fit_ure(
    source: &RepeatedDataset,
    target_cov: &RepeatedDataset,
    cfg: &UreConfig,
    validation: UreValidation<'_>,
) -> Result<FittedRegression> {
    if !source.has_responses() {
        return Err(Error::MissingResponses);
    }
    let (first_idx, second_idx) =
        split_assignment(source.n_subjects(), cfg.split_fraction, cfg.split_seed)?;
    let regression_half = source.select_subjects(&first_idx);
    let ratio_half = source.select_subjects(&second_idx).covariates_only();

    let ratio = fit_ratio(&ratio_half, target_cov, &cfg.ratio, validation.ratio)?;
    let net = fit_regression_net(
        &regression_half,
        Some(&ratio),
        &cfg.regression,
        validation.regression,
    )?;
    Ok(FittedRegression {
        net,
        kind: EstimatorKind::Ure,
        ratio_used: Some(ratio),
        split: Some(SplitRecord {
            seed: cfg.split_seed,
            fraction: cfg.split_fraction,
            first: first_idx,
            second: second_idx,
        }),
    })
}

/// Persists the network plus a metadata sidecar (`<path>.meta`); any ratio
/// model is written next to it as `<path>.ratio`.
pub fn save_fitted(path: &Path, model: &FittedRegression) -> Result<()> {
    save_network(path, &model.net)?;
    let mut meta = BufWriter::new(File::create(sidecar(path, "meta"))?);
    writeln!(
        meta,
        "estimator: {}",
        match model.kind {
            EstimatorKind::Ure => "ure",
            EstimatorKind::Kre => "kre",
            EstimatorKind::Ne => "ne",
        }
    )?;
    match &model.split {
        Some(s) => {
            writeln!(meta, "split_seed: {}", s.seed)?;
            writeln!(meta, "split_fraction: {}", s.fraction)?;
            let first: Vec<String> = s.first.iter().map(|i| i.to_string()).collect();
            let second: Vec<String> = s.second.iter().map(|i| i.to_string()).collect();
            writeln!(meta, "split_first: {}", first.join(" "))?;
            writeln!(meta, "split_second: {}", second.join(" "))?;
        }
        None => writeln!(meta, "split_seed: none")?,
    }
    match &model.ratio_used {
        Some(r) => {
            let rp = sidecar(path, "ratio");
            density_ratio::save_ratio(&rp, r)?;
            writeln!(meta, "ratio: {}", rp.file_name().unwrap().to_string_lossy())?;
        }
        None => writeln!(meta, "ratio: none")?,
    }
    Ok(())
}

pub fn load_fitted(path: &Path) -> Result<FittedRegression> {
    let net = load_network(path)?;
    let meta_path = sidecar(path, "meta");
    let pathstr = meta_path.display().to_string();
    let reader = BufReader::new(File::open(&meta_path)?);
    let mut kind = None;
    let mut split_seed: Option<u64> = None;
    let mut split_fraction = 0.5;
    let mut first = Vec::new();
    let mut second = Vec::new();
    let mut ratio = None;
    for line in reader.lines() {
        let line = line?;
        let Some((key, value)) = line.split_once(':') else {
            continue;
        };
        let value = value.trim();
        match key.trim() {
            "estimator" => {
                kind = Some(match value {
                    "ure" => EstimatorKind::Ure,
                    "kre" => EstimatorKind::Kre,
                    "ne" => EstimatorKind::Ne,
                    other => {
                        return Err(Error::ModelFormat {
                            path: pathstr,
                            msg: format!("unknown estimator `{other}`"),
                        })
                    }
                });
            }
            "split_seed" if value != "none" => {
                split_seed = Some(value.parse().map_err(|_| Error::ModelFormat {
                    path: pathstr.clone(),
                    msg: "bad split seed".into(),
                })?);
            }
            "split_fraction" => {
                split_fraction = value.parse().unwrap_or(0.5);
            }
            "split_first" => {
                first = value
                    .split_whitespace()
                    .filter_map(|t| t.parse().ok())
                    .collect();
            }
            "split_second" => {
                second = value
                    .split_whitespace()
                    .filter_map(|t| t.parse().ok())
                    .collect();
            }
            "ratio" if value != "none" => {
                ratio = Some(density_ratio::load_ratio(&sidecar(path, "ratio"))?);
            }
            _ => {}
        }
    }
    let kind = kind.ok_or_else(|| Error::ModelFormat {
        path: meta_path.display().to_string(),
        msg: "missing estimator line".into(),
    })?;
    let split = split_seed.map(|seed| SplitRecord {
        seed,
        fraction: split_fraction,
        first,
        second,
    });
    Ok(FittedRegression {
        net,
        kind,
        ratio_used: ratio,
        split,
    })
}

fn sidecar(path: &Path, ext: &str) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".");
    os.push(ext);
    PathBuf::from(os)
}

/// KRE with an exact ratio must carry a known (non-fitted) ratio model.
pub fn check_kre_ratio(ratio: &RatioModel) -> Result<()> {
    match ratio.kind {
        RatioKind::Fitted(_) => Err(Error::InvalidConfig(
            "the known-ratio estimator requires an exact or constant ratio".into(),
        )),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Subject;

    fn grid_dataset(n_subjects: usize, m: usize, f: impl Fn(f64) -> f64) -> RepeatedDataset {
        let mut subjects = Vec::new();
        for i in 0..n_subjects {
            let mut cov = Vec::new();
            let mut resp = Vec::new();
            for j in 0..m {
                let x = ((i * m + j) as f64 + 0.5) / (n_subjects * m) as f64;
                cov.push(x);
                resp.push(f(x));
            }
            subjects.push(Subject {
                covariates: cov,
                responses: Some(resp),
            });
        }
        RepeatedDataset::new(1, subjects).unwrap()
    }

    #[test]
    fn split_is_disjoint_and_exhaustive() {
        let ds = grid_dataset(10, 3, |x| x);
        let (a, b) = split_source(&ds, 0.5, 7).unwrap();
        assert_eq!(a.n_subjects(), 5);
        assert_eq!(b.n_subjects(), 5);
        let (fa, sa) = split_assignment(10, 0.5, 7).unwrap();
        let mut all: Vec<usize> = fa.iter().chain(sa.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn split_floor_rule() {
        let (a, b) = split_assignment(3, 0.5, 1).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(b.len(), 2);
    }

    #[test]
    fn split_is_deterministic_under_seed() {
        assert_eq!(
            split_assignment(20, 0.3, 99).unwrap(),
            split_assignment(20, 0.3, 99).unwrap()
        );
        assert_ne!(
            split_assignment(20, 0.3, 99).unwrap(),
            split_assignment(20, 0.3, 100).unwrap()
        );
    }

    #[test]
    fn degenerate_two_subject_split() {
        let (a, b) = split_assignment(2, 0.5, 5).unwrap();
        assert_eq!((a.len(), b.len()), (1, 1));
    }

    #[test]
    fn empty_part_is_an_error() {
        assert!(split_assignment(1, 0.5, 0).is_err());
        assert!(split_assignment(4, 0.1, 0).is_err());
    }

    #[test]
    fn weighted_loss_with_unit_ratio_is_plain_mse() {
        let ds = grid_dataset(4, 2, |x| 2.0 * x);
        let one = RatioModel::constant(1.0).unwrap();
        let loss = weighted_erm_loss(|_| 0.0, &ds, &one).unwrap();
        let expect: f64 = ds
            .iter_rows()
            .map(|(i, j, _)| {
                let y = ds.subjects[i].responses.as_ref().unwrap()[j];
                y * y
            })
            .sum::<f64>()
            / ds.total_observations() as f64;
        assert!((loss - expect).abs() < 1e-15);
    }

    #[test]
    fn interpolating_fit_has_zero_weighted_loss() {
        let ds = grid_dataset(3, 3, |x| x * x);
        let ratio = RatioModel::constant(5.0).unwrap();
        let loss = weighted_erm_loss(|x| x[0] * x[0], &ds, &ratio).unwrap();
        assert!(loss.abs() < 1e-28);
    }

    #[test]
    fn weighted_loss_direct_arithmetic() {
        // Two observations, ratio values {2, 0}, residuals {1, 7}:
        // (2*1 + 0*49)/2 = 1. The ratio network computes max(0, -10x + 4),
        // which is 2 at x = 0.2 and 0 at x = 0.8.
        let ds = RepeatedDataset::new(
            1,
            vec![Subject {
                covariates: vec![0.2, 0.8],
                responses: Some(vec![1.0, 7.0]),
            }],
        )
        .unwrap();
        let net = MlpNetwork::from_parts(
            vec![1, 1],
            vec![ndarray::arr2(&[[-10.0]])],
            vec![ndarray::arr1(&[4.0])],
            OutputActivation::Identity,
        )
        .unwrap();
        let ratio = RatioModel::fitted(net, None).unwrap();
        let loss = weighted_erm_loss(|_| 0.0, &ds, &ratio).unwrap();
        assert!((loss - 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_responses_is_contract_error() {
        let ds = grid_dataset(2, 2, |x| x).covariates_only();
        let one = RatioModel::constant(1.0).unwrap();
        assert!(matches!(
            weighted_erm_loss(|_| 0.0, &ds, &one),
            Err(Error::MissingResponses)
        ));
    }

    #[test]
    fn ratio_constant_scaling_equivalence() {
        // weighted loss with constant(c) equals c times the unweighted loss,
        // pointwise in f.
        let ds = grid_dataset(5, 2, |x| (6.0 * x).sin());
        let c = 3.7;
        let rc = RatioModel::constant(c).unwrap();
        let r1 = RatioModel::constant(1.0).unwrap();
        for f in [|x: &[f64]| x[0], |x: &[f64]| 0.25 - x[0] * x[0]] {
            let lc = weighted_erm_loss(f, &ds, &rc).unwrap();
            let l1 = weighted_erm_loss(f, &ds, &r1).unwrap();
            assert!((lc - c * l1).abs() < 1e-12 * lc.abs().max(1.0));
        }
    }

    #[test]
    fn naive_fit_learns_constant_responses() {
        let ds = grid_dataset(8, 4, |_| 1.5);
        let mut cfg = RegressionFitConfig::default_with_seed(3);
        cfg.hidden_dims = vec![8];
        cfg.train.max_epochs = 400;
        cfg.train.batch_size = 4;
        let fit = fit_naive(&ds, &cfg, None).unwrap();
        for x in [[0.05], [0.4], [0.95]] {
            let yhat = fit.predict(&x).unwrap();
            assert!((yhat - 1.5).abs() < 1e-2, "prediction {yhat}");
        }
        assert_eq!(fit.kind, EstimatorKind::Ne);
        assert!(fit.ratio_used.is_none());
    }

    #[test]
    fn kre_with_unit_ratio_matches_naive_loss_path() {
        // With r = 1 the weighted objective equals the unweighted one, so
        // under identical seeds the two fits coincide.
        let ds = grid_dataset(6, 3, |x| x);
        let mut cfg = RegressionFitConfig::default_with_seed(11);
        cfg.hidden_dims = vec![6];
        cfg.train.max_epochs = 30;
        let one = RatioModel::constant(1.0).unwrap();
        let kre = fit_kre(&ds, &one, &cfg, None).unwrap();
        let ne = fit_naive(&ds, &cfg, None).unwrap();
        for l in 0..kre.net.weights.len() {
            assert_eq!(kre.net.weights[l], ne.net.weights[l]);
            assert_eq!(kre.net.biases[l], ne.net.biases[l]);
        }
        assert_eq!(kre.kind, EstimatorKind::Kre);
    }

    #[test]
    fn ure_runs_with_two_subjects_and_records_split() {
        let mut subjects = Vec::new();
        for i in 0..2 {
            let mut cov = Vec::new();
            let mut resp = Vec::new();
            for j in 0..12 {
                let x = ((i * 12 + j) as f64 + 0.5) / 24.0;
                cov.push(x);
                resp.push(x);
            }
            subjects.push(Subject {
                covariates: cov,
                responses: Some(resp),
            });
        }
        let source = RepeatedDataset::new(1, subjects).unwrap();
        let target = source.covariates_only();
        let mut cfg = UreConfig::default_with_seed(17);
        cfg.ratio.hidden_dims = vec![4];
        cfg.ratio.train.max_epochs = 5;
        cfg.regression.hidden_dims = vec![4];
        cfg.regression.train.max_epochs = 5;
        let fit = fit_ure(&source, &target, &cfg, UreValidation::none()).unwrap();
        let split = fit.split.as_ref().unwrap();
        assert_eq!(split.first.len(), 1);
        assert_eq!(split.second.len(), 1);
        assert!(fit.ratio_used.is_some());
        assert_eq!(fit.kind, EstimatorKind::Ure);
    }

    #[test]
    fn fitted_regression_round_trips_through_disk() {
        let ds = grid_dataset(4, 3, |x| x);
        let mut cfg = RegressionFitConfig::default_with_seed(5);
        cfg.hidden_dims = vec![4];
        cfg.train.max_epochs = 10;
        let ratio = RatioModel::constant(2.0).unwrap();
        let fit = fit_kre(&ds, &ratio, &cfg, None).unwrap();

        let dir = std::env::temp_dir().join("covshift_reg_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.net");
        save_fitted(&path, &fit).unwrap();
        let back = load_fitted(&path).unwrap();
        assert_eq!(back.kind, EstimatorKind::Kre);
        assert!(back.ratio_used.is_some());
        for x in [[0.3], [0.7]] {
            assert_eq!(back.predict(&x).unwrap(), fit.predict(&x).unwrap());
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn kre_ratio_kind_check() {
        let exact = RatioModel::constant(1.0).unwrap();
        assert!(check_kre_ratio(&exact).is_ok());
        let net = MlpNetwork::zeros(vec![1, 2, 1], OutputActivation::Softplus).unwrap();
        let fitted = RatioModel::fitted(net, None).unwrap();
        assert!(check_kre_ratio(&fitted).is_err());
    }
}
