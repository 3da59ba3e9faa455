//! Least-squares density-ratio estimation and the exact Gaussian-copula
//! ratio.
//!
//! The density ratio `r(x) = q(x)/p(x)` re-weights source-domain risk into
//! target-domain risk. It is estimated by minimizing the empirical risk
//! `(1/2) mean_P v(X)^2 - mean_Q v(X)`, whose population minimizer is `r`.
//! Unbounded ratios are handled by the clipping operator `T_xi v = min(v, xi)`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::RepeatedDataset;
use crate::error::{Error, Result};
use crate::nn::{
    self, read_network, write_network, LossSpec, MlpNetwork, OutputActivation, TrainConfig,
    TrainData,
};
use crate::normal::{std_normal_quantile, BOUNDARY_EPS};

/// Parameters of the componentwise Gaussian-copula construction
/// `X = Phi(Z)`, `Z ~ N(mu 1_d, var I_d)` in each domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopulaParams {
    pub mu_p: f64,
    pub var_p: f64,
    pub mu_q: f64,
    pub var_q: f64,
    pub d: usize,
}

/// Tail regime of the copula density ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RatioRegime {
    /// `var_p >= var_q`: the ratio is uniformly bounded.
    Bounded,
    /// `var_q > var_p >= var_q / 2`: unbounded with a finite second moment.
    FiniteSecondMoment,
    /// `var_p < var_q / 2`: the second moment diverges.
    InfiniteSecondMoment,
}

impl CopulaParams {
    pub fn validate(&self) -> Result<()> {
        if self.var_p <= 0.0 || self.var_q <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "variances must be positive, got var_p={}, var_q={}",
                self.var_p, self.var_q
            )));
        }
        if self.d == 0 {
            return Err(Error::InvalidConfig("dimension must be positive".into()));
        }
        Ok(())
    }

    pub fn regime(&self) -> RatioRegime {
        if self.var_p >= self.var_q {
            RatioRegime::Bounded
        } else if self.var_p >= 0.5 * self.var_q {
            RatioRegime::FiniteSecondMoment
        } else {
            RatioRegime::InfiniteSecondMoment
        }
    }

    /// Supremum of the ratio over the cube, available in the bounded regime:
    /// `(s_p/s_q)^d * exp(d (mu_q - mu_p)^2 / (2 (var_p - var_q)))`.
    /// Returns `None` when the ratio is unbounded (`var_p < var_q`), or when
    /// `var_p == var_q` with different means (the sup is attained in the
    /// limit at the boundary).
    pub fn sup_ratio(&self) -> Option<f64> {
        if self.var_p > self.var_q {
            let scale = (self.var_p / self.var_q).sqrt().powi(self.d as i32);
            let gap = self.mu_q - self.mu_p;
            Some(scale * ((self.d as f64) * gap * gap / (2.0 * (self.var_p - self.var_q))).exp())
        } else if self.var_p == self.var_q && self.mu_p == self.mu_q {
            Some(1.0)
        } else {
            None
        }
    }
}

/// Exact copula density ratio `q(x)/p(x)` at `x` strictly inside the cube;
/// boundary coordinates are clamped, never an error.
pub fn exact_copula_ratio(p: &CopulaParams, x: &[f64]) -> Result<f64> {
    if x.len() != p.d {
        return Err(Error::ShapeMismatch {
            expected: p.d,
            got: x.len(),
        });
    }
    let scale = (p.var_p / p.var_q).sqrt();
    let mut out = 1.0;
    for &xi in x {
        let z = std_normal_quantile(xi.clamp(BOUNDARY_EPS, 1.0 - BOUNDARY_EPS));
        let dq = z - p.mu_q;
        let dp = z - p.mu_p;
        out *= scale * (-dq * dq / (2.0 * p.var_q) + dp * dp / (2.0 * p.var_p)).exp();
    }
    Ok(out)
}

/// A fitted or known nonnegative ratio function, optionally clipped.
#[derive(Debug, Clone)]
pub enum RatioKind {
    Fitted(MlpNetwork),
    ExactCopula(CopulaParams),
    Constant(f64),
}

#[derive(Debug, Clone)]
pub struct RatioModel {
    pub kind: RatioKind,
    pub clip_level: Option<f64>,
}

impl RatioModel {
    pub fn constant(c: f64) -> Result<Self> {
        if !(c >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "constant ratio must be nonnegative, got {c}"
            )));
        }
        Ok(Self {
            kind: RatioKind::Constant(c),
            clip_level: None,
        })
    }

    pub fn exact_copula(params: CopulaParams, clip_level: Option<f64>) -> Result<Self> {
        params.validate()?;
        validate_clip(clip_level)?;
        Ok(Self {
            kind: RatioKind::ExactCopula(params),
            clip_level,
        })
    }

    pub fn fitted(net: MlpNetwork, clip_level: Option<f64>) -> Result<Self> {
        validate_clip(clip_level)?;
        Ok(Self {
            kind: RatioKind::Fitted(net),
            clip_level,
        })
    }

    /// A copy of this model clipped at `xi`.
    pub fn with_clip(&self, xi: f64) -> Result<Self> {
        validate_clip(Some(xi))?;
        Ok(Self {
            kind: self.kind.clone(),
            clip_level: Some(xi),
        })
    }

    /// Pointwise evaluation; nonnegative, and `<= clip_level` when set.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let raw = match &self.kind {
            RatioKind::Fitted(net) => net.forward(x)?.max(0.0),
            RatioKind::ExactCopula(p) => exact_copula_ratio(p, x)?,
            RatioKind::Constant(c) => *c,
        };
        Ok(match self.clip_level {
            Some(xi) => raw.min(xi),
            None => raw,
        })
    }

    /// Evaluates the model over every observation of a dataset, in
    /// storage order.
    pub fn evaluate_dataset(&self, data: &RepeatedDataset) -> Result<Array1<f64>> {
        let mut out = Vec::with_capacity(data.total_observations());
        for (_, _, row) in data.iter_rows() {
            out.push(self.evaluate(row)?);
        }
        Ok(Array1::from_vec(out))
    }
}

fn validate_clip(clip: Option<f64>) -> Result<()> {
    if let Some(xi) = clip {
        if !(xi > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "clip level must be positive, got {xi}"
            )));
        }
    }
    Ok(())
}

/// Empirical ratio-matching risk of a candidate `v`:
/// `(1/(2 n_source)) sum v(x_P)^2 - (1/n_target) sum v(x_Q)`.
pub fn lsif_empirical_loss<F: Fn(&[f64]) -> f64>(
    v: F,
    source_batch: ArrayView2<'_, f64>,
    target_batch: ArrayView2<'_, f64>,
) -> Result<f64> {
    if source_batch.nrows() == 0 {
        return Err(Error::EmptyInput("source batch"));
    }
    if target_batch.nrows() == 0 {
        return Err(Error::EmptyInput("target batch"));
    }
    let mut sq = 0.0;
    for row in source_batch.rows() {
        let val = v(row.as_slice().unwrap());
        sq += val * val;
    }
    let mut lin = 0.0;
    for row in target_batch.rows() {
        lin += v(row.as_slice().unwrap());
    }
    Ok(0.5 * sq / source_batch.nrows() as f64 - lin / target_batch.nrows() as f64)
}

/// Stacks source and target covariates into one training batch whose
/// full-batch [`LossSpec::Lsif`] mean equals [`lsif_empirical_loss`]:
/// source rows carry `(y=0, w=N/N_source)`, target rows `(y=N/N_target, w=0)`.
pub fn lsif_training_data(source: &Array2<f64>, target: &Array2<f64>) -> Result<TrainData> {
    if source.nrows() == 0 {
        return Err(Error::EmptyInput("source covariates"));
    }
    if target.nrows() == 0 {
        return Err(Error::EmptyInput("target covariates"));
    }
    if source.ncols() != target.ncols() {
        return Err(Error::ShapeMismatch {
            expected: source.ncols(),
            got: target.ncols(),
        });
    }
    let (ns, nt) = (source.nrows(), target.nrows());
    let n = ns + nt;
    let inputs = ndarray::concatenate(Axis(0), &[source.view(), target.view()])
        .expect("matching column counts");
    let mut targets = Array1::zeros(n);
    let mut weights = Array1::zeros(n);
    for i in 0..ns {
        weights[i] = n as f64 / ns as f64;
    }
    for i in ns..n {
        targets[i] = n as f64 / nt as f64;
    }
    TrainData::new(inputs, targets, weights)
}

/// How the truncation level is chosen when fitting a ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClipPolicy {
    /// No truncation.
    None,
    /// Train with the clipping layer `min(softplus(z), xi)` at a fixed level.
    Fixed { xi: f64 },
    /// Train unclipped, then truncate at the given quantile (in `(0,1)`) of
    /// the fitted ratio over the source covariates used for fitting.
    Percentile { q: f64 },
}

/// Configuration for [`fit_ratio`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioFitConfig {
    /// Hidden-layer widths of the ratio network.
    pub hidden_dims: Vec<usize>,
    pub train: TrainConfig,
    pub clip: ClipPolicy,
}

impl RatioFitConfig {
    /// Two hidden layers of width 64, Adam recipe, no truncation.
    pub fn default_with_seed(seed: u64) -> Self {
        Self {
            hidden_dims: vec![64, 64],
            train: TrainConfig::adam(seed),
            clip: ClipPolicy::None,
        }
    }
}

/// Fits a softplus-output network minimizing the empirical ratio risk over
/// the flattened observations of `source_cov` and `target_cov`.
///
/// With `ClipPolicy::Fixed`, the clipping layer is part of the trained
/// network. With `ClipPolicy::Percentile`, the network is trained unclipped
/// and the returned model truncates at the requested quantile of its own
/// values over `source_cov`. `validation`, when given, is a pair of
/// (source-law, target-law) covariate sets monitored for early stopping.
pub fn fit_ratio(
    source_cov: &RepeatedDataset,
    target_cov: &RepeatedDataset,
    cfg: &RatioFitConfig,
    validation: Option<(&RepeatedDataset, &RepeatedDataset)>,
) -> Result<RatioModel> {
    if source_cov.d != target_cov.d {
        return Err(Error::ShapeMismatch {
            expected: source_cov.d,
            got: target_cov.d,
        });
    }
    source_cov.check_unit_cube()?;
    target_cov.check_unit_cube()?;

    let activation = match cfg.clip {
        ClipPolicy::Fixed { xi } => {
            validate_clip(Some(xi))?;
            OutputActivation::SoftplusClip(xi)
        }
        ClipPolicy::None | ClipPolicy::Percentile { .. } => OutputActivation::Softplus,
    };
    if let ClipPolicy::Percentile { q } = cfg.clip {
        if !(0.0 < q && q < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "clip percentile must be in (0,1), got {q}"
            )));
        }
    }

    let src = source_cov.flatten_covariates();
    let tgt = target_cov.flatten_covariates();
    let data = lsif_training_data(&src, &tgt)?;
    let val_data = match validation {
        Some((vs, vt)) => Some(lsif_training_data(
            &vs.flatten_covariates(),
            &vt.flatten_covariates(),
        )?),
        None => None,
    };

    let mut dims = vec![source_cov.d];
    dims.extend_from_slice(&cfg.hidden_dims);
    dims.push(1);
    let net = MlpNetwork::he_init(dims, activation, cfg.train.seed)?;
    let outcome = nn::train(net, &data, LossSpec::Lsif, &cfg.train, val_data.as_ref())?;

    match cfg.clip {
        ClipPolicy::None => RatioModel::fitted(outcome.net, None),
        ClipPolicy::Fixed { xi } => RatioModel::fitted(outcome.net, Some(xi)),
        ClipPolicy::Percentile { q } => {
            let model = RatioModel::fitted(outcome.net, None)?;
            let mut values = model.evaluate_dataset(source_cov)?.to_vec();
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let rank = ((values.len() as f64 - 1.0) * q).round() as usize;
            let xi = values[rank.min(values.len() - 1)].max(f64::MIN_POSITIVE);
            model.with_clip(xi)
        }
    }
}

/// Empirical `(delta+2)`-th moment of the ratio over source covariates —
/// an estimate of the moment constant controlling the unbounded regime.
pub fn moment_diagnostic(
    model: &RatioModel,
    source_cov: &RepeatedDataset,
    delta: f64,
) -> Result<f64> {
    if delta < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "delta must be nonnegative, got {delta}"
        )));
    }
    let vals = model.evaluate_dataset(source_cov)?;
    if vals.is_empty() {
        return Err(Error::EmptyInput("source covariates"));
    }
    let p = delta + 2.0;
    Ok(vals.iter().map(|v| v.powf(p)).sum::<f64>() / vals.len() as f64)
}

/// Save format: the network block (fitted) or a single parameter line
/// (exact copula / constant), then a trailer line `clip: <xi or none>`.
pub fn save_ratio(path: &Path, model: &RatioModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    match &model.kind {
        RatioKind::Fitted(net) => write_network(&mut w, net)?,
        RatioKind::ExactCopula(p) => writeln!(
            w,
            "copula: {} {} {} {} {}",
            fmt(p.mu_p),
            fmt(p.var_p),
            fmt(p.mu_q),
            fmt(p.var_q),
            p.d
        )?,
        RatioKind::Constant(c) => writeln!(w, "constant: {}", fmt(*c))?,
    }
    match model.clip_level {
        Some(xi) => writeln!(w, "clip: {}", fmt(xi))?,
        None => writeln!(w, "clip: none")?,
    }
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn load_ratio(path: &Path) -> Result<RatioModel> {
    let pathstr = path.display().to_string();
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().peekable();
    let bad = |msg: String| Error::ModelFormat {
        path: pathstr.clone(),
        msg,
    };

    let first = match lines.peek() {
        Some(Ok(l)) => l.clone(),
        Some(Err(_)) => return Err(Error::Io(lines.next().unwrap().unwrap_err())),
        None => return Err(bad("empty file".into())),
    };

    let kind = if first.starts_with("dims:") {
        RatioKind::Fitted(read_network(&mut lines, &pathstr)?)
    } else if let Some(body) = first.strip_prefix("copula:") {
        lines.next();
        let vals: Vec<&str> = body.split_whitespace().collect();
        if vals.len() != 5 {
            return Err(bad("copula line needs 5 parameters".into()));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::ModelFormat {
                path: pathstr.clone(),
                msg: format!("bad copula parameter `{s}`"),
            })
        };
        RatioKind::ExactCopula(CopulaParams {
            mu_p: parse(vals[0])?,
            var_p: parse(vals[1])?,
            mu_q: parse(vals[2])?,
            var_q: parse(vals[3])?,
            d: vals[4]
                .parse()
                .map_err(|_| bad("bad copula dimension".into()))?,
        })
    } else if let Some(body) = first.strip_prefix("constant:") {
        lines.next();
        RatioKind::Constant(
            body.trim()
                .parse()
                .map_err(|_| bad("bad constant value".into()))?,
        )
    } else {
        return Err(bad(format!("unrecognized first line `{first}`")));
    };

    let clip_line = match lines.next() {
        Some(Ok(l)) => l,
        Some(Err(e)) => return Err(Error::Io(e)),
        None => return Err(bad("missing clip trailer".into())),
    };
    let clip_body = clip_line
        .strip_prefix("clip:")
        .ok_or_else(|| bad(format!("expected `clip:` trailer, got `{clip_line}`")))?
        .trim();
    let clip_level = if clip_body == "none" {
        None
    } else {
        Some(
            clip_body
                .parse()
                .map_err(|_| bad("bad clip level".into()))?,
        )
    };

    Ok(RatioModel { kind, clip_level })
}
