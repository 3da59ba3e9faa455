//! Seedable generators for the two simulation designs.
//!
//! Covariates arise from a Gaussian copula `X = Phi(Z)` with
//! `Z ~ N(mu 1_d, var I_d)` per domain, so the covariate shift has a
//! closed-form density ratio. Responses follow
//! `y_ij = f0(x_ij) + f_i(x_ij) + eps_ij` with subject-specific random
//! series `f_i` (zero conditional mean, `1/k` amplitude decay) and
//! independent Gaussian noise. Per-subject ChaCha streams keep generation
//! order-independent and reproducible.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{RepeatedDataset, Subject};
use crate::density_ratio::CopulaParams;
use crate::error::{Error, Result};
use crate::normal::std_normal_cdf;
use crate::rng;

const COVARIATE_TAG: u64 = 0x434f_5641_5249_4154;
const RESPONSE_TAG: u64 = 0x5245_5350_4f4e_5345;

/// Simulation case: the low-dimensional design (`d = 3`) or the
/// two-block design with `d = 10`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    Case1,
    Case2,
}

impl Case {
    pub fn dim(self) -> usize {
        match self {
            Case::Case1 => 3,
            Case::Case2 => 10,
        }
    }

    /// The true regression function for this case.
    pub fn f0(self, x: &[f64]) -> Result<f64> {
        match self {
            Case::Case1 => f0_case1(x),
            Case::Case2 => f0_case2(x),
        }
    }
}

impl std::fmt::Display for Case {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Case::Case1 => write!(f, "case1"),
            Case::Case2 => write!(f, "case2"),
        }
    }
}

/// Which tail regime the copula parameters put the density ratio in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Bounded,
    Unbounded,
}

impl Regime {
    /// Default copula parameters: bounded `(0, 0.4, 0.5, 0.3)`,
    /// unbounded `(0, 0.3, 1, 0.5)`.
    pub fn default_copula(self, d: usize) -> CopulaParams {
        match self {
            Regime::Bounded => CopulaParams {
                mu_p: 0.0,
                var_p: 0.4,
                mu_q: 0.5,
                var_q: 0.3,
                d,
            },
            Regime::Unbounded => CopulaParams {
                mu_p: 0.0,
                var_p: 0.3,
                mu_q: 1.0,
                var_q: 0.5,
                d,
            },
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Regime::Bounded => write!(f, "bounded"),
            Regime::Unbounded => write!(f, "unbounded"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

/// Full description of one simulated scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub case: Case,
    pub regime: Regime,
    pub n_p: usize,
    pub n_q: usize,
    pub m: usize,
    pub copula: CopulaParams,
    pub noise_sd: f64,
    pub lambda_sd: f64,
    /// Number of series terms kept in the subject effect (`k` runs from 2
    /// to `series_terms + 1`).
    pub series_terms: usize,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn new(case: Case, regime: Regime, n_p: usize, n_q: usize, m: usize, seed: u64) -> Self {
        Self {
            case,
            regime,
            n_p,
            n_q,
            m,
            copula: regime.default_copula(case.dim()),
            noise_sd: 0.01,
            lambda_sd: 0.1,
            series_terms: 50,
            seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_p == 0 || self.n_q == 0 || self.m == 0 {
            return Err(Error::InvalidConfig(
                "subject and observation counts must be positive".into(),
            ));
        }
        if self.series_terms == 0 {
            return Err(Error::InvalidConfig(
                "series_terms must be positive".into(),
            ));
        }
        if self.noise_sd < 0.0 || self.lambda_sd < 0.0 {
            return Err(Error::InvalidConfig(
                "noise_sd and lambda_sd must be nonnegative".into(),
            ));
        }
        self.copula.validate()?;
        if self.copula.d != self.case.dim() {
            return Err(Error::InvalidConfig(format!(
                "copula dimension {} does not match case dimension {}",
                self.copula.d,
                self.case.dim()
            )));
        }
        Ok(())
    }
}

/// `f0` for the low-dimensional case:
/// `sin(12 pi sum_l l x_l / (d (d+1)))` with `d = 3`.
pub fn f0_case1(x: &[f64]) -> Result<f64> {
    let d = 3;
    if x.len() != d {
        return Err(Error::ShapeMismatch {
            expected: d,
            got: x.len(),
        });
    }
    let weighted: f64 = x.iter().enumerate().map(|(l, &v)| (l + 1) as f64 * v).sum();
    let df = d as f64;
    Ok((12.0 * std::f64::consts::PI * weighted / (df * (df + 1.0))).sin())
}

/// `f0` for the two-block case:
/// `sin(2 pi s1) cos(2 pi s2)` with `s1 = sum_{1..5} x_l / 5`,
/// `s2 = sum_{6..10} x_l / 5`, `d = 10`.
pub fn f0_case2(x: &[f64]) -> Result<f64> {
    if x.len() != 10 {
        return Err(Error::ShapeMismatch {
            expected: 10,
            got: x.len(),
        });
    }
    let s1: f64 = x[..5].iter().sum::<f64>() / 5.0;
    let s2: f64 = x[5..].iter().sum::<f64>() / 5.0;
    let tau = std::f64::consts::TAU;
    Ok((tau * s1).sin() * (tau * s2).cos())
}

/// The exact `f0` evaluator for a case, for MSE computation.
pub fn oracle_f0(case: Case) -> impl Fn(&[f64]) -> Result<f64> {
    move |x| case.f0(x)
}

/// Draws covariates-only data for a domain: `n` subjects with `m`
/// observations each, `X = Phi(Z)` componentwise.
pub fn gen_covariates(
    domain: Domain,
    cfg: &ScenarioConfig,
    n: usize,
    m: usize,
) -> Result<RepeatedDataset> {
    cfg.validate()?;
    if n == 0 || m == 0 {
        return Err(Error::InvalidConfig(
            "subject and observation counts must be positive".into(),
        ));
    }
    let d = cfg.case.dim();
    let (mu, sd) = match domain {
        Domain::Source => (cfg.copula.mu_p, cfg.copula.var_p.sqrt()),
        Domain::Target => (cfg.copula.mu_q, cfg.copula.var_q.sqrt()),
    };
    let domain_tag = match domain {
        Domain::Source => 1,
        Domain::Target => 2,
    };
    let mut subjects = Vec::with_capacity(n);
    for i in 0..n {
        let mut stream = rng::chacha_stream(&[cfg.seed, COVARIATE_TAG, domain_tag], i as u64);
        let mut cov = Vec::with_capacity(m * d);
        for _ in 0..m * d {
            let z: f64 = stream.sample(StandardNormal);
            // Saturated CDF values are nudged inside the open interval.
            let x = std_normal_cdf(mu + sd * z)
                .clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
            cov.push(x);
        }
        subjects.push(Subject {
            covariates: cov,
            responses: None,
        });
    }
    RepeatedDataset::new(d, subjects)
}

/// Evaluates the subject-effect series for one subject given its
/// coefficients (laid out per term, then per coordinate/block).
fn subject_effect(case: Case, lambdas: &[f64], x: &[f64]) -> f64 {
    let sqrt3 = 3.0_f64.sqrt();
    let pi = std::f64::consts::PI;
    match case {
        Case::Case1 => {
            let d = 3;
            let sqrt_d = (d as f64).sqrt();
            let terms = lambdas.len() / d;
            let mut acc = 0.0;
            for t in 0..terms {
                let k = (t + 2) as f64;
                for l in 0..d {
                    let lam = lambdas[t * d + l];
                    acc += sqrt3 * lam * ((k * pi * x[l]).sin() + (k * pi * x[l]).cos())
                        / (sqrt_d * k);
                }
            }
            acc
        }
        Case::Case2 => {
            let s1: f64 = x[..5].iter().sum::<f64>() / 5.0;
            let s2: f64 = x[5..].iter().sum::<f64>() / 5.0;
            let sqrt2 = 2.0_f64.sqrt();
            let terms = lambdas.len() / 2;
            let mut acc = 0.0;
            for t in 0..terms {
                let k = (t + 2) as f64;
                let block1 = (k * pi * s1).sin() + (k * pi * s1).cos();
                let block2 = (k * pi * s2).sin() + (k * pi * s2).cos();
                acc += sqrt3 * (lambdas[t * 2] * block1 + lambdas[t * 2 + 1] * block2)
                    / (sqrt2 * k);
            }
            acc
        }
    }
}

/// Number of series coefficients per subject.
fn lambda_count(case: Case, series_terms: usize) -> usize {
    match case {
        Case::Case1 => series_terms * 3,
        Case::Case2 => series_terms * 2,
    }
}

/// Attaches responses `y_ij = f0(x_ij) + f_i(x_ij) + eps_ij` to covariate
/// data. Series coefficients are drawn once per subject; noise is fresh per
/// observation.
pub fn gen_responses(cov: &RepeatedDataset, cfg: &ScenarioConfig) -> Result<RepeatedDataset> {
    cfg.validate()?;
    if cov.d != cfg.case.dim() {
        return Err(Error::ShapeMismatch {
            expected: cfg.case.dim(),
            got: cov.d,
        });
    }
    let n_lambda = lambda_count(cfg.case, cfg.series_terms);
    let mut subjects = Vec::with_capacity(cov.n_subjects());
    for (i, subject) in cov.subjects.iter().enumerate() {
        let mut stream = rng::chacha_stream(&[cfg.seed, RESPONSE_TAG], i as u64);
        let lambdas: Vec<f64> = (0..n_lambda)
            .map(|_| {
                let z: f64 = stream.sample(StandardNormal);
                cfg.lambda_sd * z
            })
            .collect();
        let m = subject.covariates.len() / cov.d;
        let mut responses = Vec::with_capacity(m);
        for j in 0..m {
            let x = &subject.covariates[j * cov.d..(j + 1) * cov.d];
            let eps: f64 = {
                let z: f64 = stream.sample(StandardNormal);
                cfg.noise_sd * z
            };
            responses.push(cfg.case.f0(x)? + subject_effect(cfg.case, &lambdas, x) + eps);
        }
        subjects.push(Subject {
            covariates: subject.covariates.clone(),
            responses: Some(responses),
        });
    }
    RepeatedDataset::new(cov.d, subjects)
}

/// Source covariates with responses in one call.
pub fn gen_source(cfg: &ScenarioConfig, n: usize, m: usize) -> Result<RepeatedDataset> {
    let cov = gen_covariates(Domain::Source, cfg, n, m)?;
    gen_responses(&cov, cfg)
}
