//! Experiment orchestration: Monte Carlo replications of the simulation
//! designs, MSE evaluation against the true regression function, result
//! tables with manifests, and the approximation benchmark.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::RepeatedDataset;
use crate::density_ratio::{ClipPolicy, RatioFitConfig, RatioModel};
use crate::error::{Error, Result};
use crate::regression::{
    fit_kre, fit_naive, fit_ure, EstimatorKind, RegressionFitConfig, UreConfig, UreValidation,
};
use crate::rng;
use crate::simgen::{gen_covariates, gen_responses, oracle_f0, Case, Domain, Regime,
    ScenarioConfig};
use crate::simplex::{
    build_approximant, error_certificate, AnalyticOracle, HolderSpec,
};

const REPLICATION_TAG: u64 = 0x5245_504c_4943_4154;

/// Average squared deviation of a predictor from the true regression
/// function over all target observations.
pub fn prediction_mse<P, F>(predict: P, target_cov: &RepeatedDataset, f0: F) -> Result<f64>
where
    P: Fn(&[f64]) -> Result<f64>,
    F: Fn(&[f64]) -> Result<f64>,
{
    let n = target_cov.total_observations();
    if n == 0 {
        return Err(Error::EmptyInput("evaluation covariates"));
    }
    let mut acc = 0.0;
    for (_, _, row) in target_cov.iter_rows() {
        let diff = predict(row)? - f0(row)?;
        acc += diff * diff;
    }
    Ok(acc / n as f64)
}

/// Full experiment description. Per-replication seeds, training seeds and
/// dataset seeds all derive from `scenario.seed` through a fixed mixer, so
/// results are independent of execution order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub methods: Vec<EstimatorKind>,
    pub replications: usize,
    /// Number of target subjects in the fresh evaluation draw.
    pub eval_n_q: usize,
    pub output_dir: PathBuf,
    pub parallelism: usize,
    pub ratio: RatioFitConfig,
    pub regression: RegressionFitConfig,
    /// Truncation applied to the exact ratio used by the known-ratio
    /// estimator.
    pub kre_clip: ClipPolicy,
}

impl ExperimentConfig {
    /// Truncation levels for the unbounded regime. The fitted ratio trains
    /// inside the clipped class (an unclipped fit degenerates: the source
    /// sample is too thin over the target bulk to penalize explosion
    /// there); the exact ratio is truncated to keep per-batch gradient
    /// influence bounded. Both levels are calibration constants for the
    /// simulation designs and can be overridden.
    pub const UNBOUNDED_FITTED_CLIP: f64 = 20.0;
    pub const UNBOUNDED_EXACT_CLIP: f64 = 30.0;

    /// Desk-scale defaults: 10 replications, 2000 evaluation subjects, a
    /// narrow two-layer ratio network (width 8 resists separation overfit
    /// at desk sample sizes). In the unbounded regime both the estimated
    /// and the exact ratio are truncated; the bounded regime leaves both
    /// unclipped.
    pub fn desk_scale(scenario: ScenarioConfig, output_dir: PathBuf) -> Self {
        let (ratio_clip, kre_clip) = match scenario.regime {
            Regime::Bounded => (ClipPolicy::None, ClipPolicy::None),
            Regime::Unbounded => (
                ClipPolicy::Fixed {
                    xi: Self::UNBOUNDED_FITTED_CLIP,
                },
                ClipPolicy::Fixed {
                    xi: Self::UNBOUNDED_EXACT_CLIP,
                },
            ),
        };
        let mut ratio = RatioFitConfig::default_with_seed(0);
        ratio.clip = ratio_clip;
        ratio.hidden_dims = vec![8, 8];
        Self {
            scenario,
            methods: vec![EstimatorKind::Ne, EstimatorKind::Kre, EstimatorKind::Ure],
            replications: 10,
            eval_n_q: 2000,
            output_dir,
            parallelism: std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1),
            regression: RegressionFitConfig::default_with_seed(0),
            ratio,
            kre_clip,
        }
    }

    /// Paper-scale counts: 50 replications, 10000 evaluation subjects, and
    /// 10000 target subjects for ratio fitting.
    pub fn full_scale(mut self) -> Self {
        self.replications = 50;
        self.eval_n_q = 10_000;
        self.scenario.n_q = 10_000;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("methods must be nonempty".into()));
        }
        if self.eval_n_q == 0 {
            return Err(Error::InvalidConfig("eval_n_q must be >= 1".into()));
        }
        if self.parallelism == 0 {
            return Err(Error::InvalidConfig("parallelism must be >= 1".into()));
        }
        self.scenario.validate()?;
        self.ratio.train.validate()?;
        self.regression.train.validate()?;
        Ok(())
    }
}

/// Aggregated result for one method.
#[derive(Debug, Clone, Serialize)]
pub struct ResultRow {
    pub method: EstimatorKind,
    pub case: Case,
    pub regime: Regime,
    pub n_p: usize,
    pub m: usize,
    pub mse_mean: f64,
    pub mse_sd: f64,
    /// Per-replication MSEs of the successful replications, in
    /// replication order.
    pub mses: Vec<f64>,
    pub failed: usize,
    pub wall_time_s: f64,
}

/// One method's measurement within one replication.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicationRecord {
    pub method: EstimatorKind,
    pub replication: usize,
    pub seed: u64,
    pub mse: Option<f64>,
    /// Resolved truncation level of the ratio actually used, when any.
    pub ratio_clip: Option<f64>,
    pub status: String,
    pub wall_time_s: f64,
}

#[derive(Debug)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub records: Vec<ReplicationRecord>,
    pub failures: usize,
    pub results_path: PathBuf,
    pub replications_path: PathBuf,
    pub manifest_path: PathBuf,
}

fn sample_sd(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

fn percentile_of(values: &mut Vec<f64>, q: f64) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((values.len() as f64 - 1.0) * q).round() as usize;
    values[rank.min(values.len() - 1)]
}

/// Runs every requested method on freshly generated data for replication
/// `r`. Per-method failures are reported in the records; they do not abort
/// the replication.
fn run_replication(cfg: &ExperimentConfig, r: usize) -> Vec<ReplicationRecord> {
    let seed_r = rng::mix_seed(&[cfg.scenario.seed, REPLICATION_TAG, r as u64]);
    let scenario = &cfg.scenario;
    let n_v = ((0.2 * scenario.n_p as f64).ceil() as usize).max(2);
    let n_vq = ((0.2 * scenario.n_q as f64).ceil() as usize).max(1);

    let datasets = (|| -> Result<_> {
        let train_cfg = scenario.with_seed(seed_r);
        let source = gen_responses(
            &gen_covariates(Domain::Source, &train_cfg, scenario.n_p, scenario.m)?,
            &train_cfg,
        )?;
        let target_cov =
            gen_covariates(Domain::Target, &train_cfg, scenario.n_q, scenario.m)?;

        let val_cfg = scenario.with_seed(rng::mix_seed(&[seed_r, 11]));
        let val_reg = gen_responses(
            &gen_covariates(Domain::Source, &val_cfg, n_v, scenario.m)?,
            &val_cfg,
        )?;
        let ratio_val_cfg = scenario.with_seed(rng::mix_seed(&[seed_r, 12]));
        let val_ratio_p = gen_covariates(Domain::Source, &ratio_val_cfg, n_v, scenario.m)?;
        let val_ratio_q = gen_covariates(Domain::Target, &ratio_val_cfg, n_vq, scenario.m)?;

        let eval_cfg = scenario.with_seed(rng::mix_seed(&[seed_r, 13]));
        let eval_cov = gen_covariates(Domain::Target, &eval_cfg, cfg.eval_n_q, scenario.m)?;
        Ok((source, target_cov, val_reg, val_ratio_p, val_ratio_q, eval_cov))
    })();

    let (source, target_cov, val_reg, val_ratio_p, val_ratio_q, eval_cov) = match datasets {
        Ok(d) => d,
        Err(e) => {
            return cfg
                .methods
                .iter()
                .map(|&method| ReplicationRecord {
                    method,
                    replication: r,
                    seed: seed_r,
                    mse: None,
                    ratio_clip: None,
                    status: sanitize(&format!("data generation failed: {e}")),
                    wall_time_s: 0.0,
                })
                .collect();
        }
    };

    let f0 = oracle_f0(scenario.case);
    let mut records = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let start = Instant::now();
        let outcome: Result<(f64, Option<f64>)> = (|| {
            let fitted = match method {
                EstimatorKind::Ne => {
                    let mut reg = cfg.regression.clone();
                    reg.train.seed = rng::mix_seed(&[seed_r, 21]);
                    fit_naive(&source, &reg, Some(&val_reg))?
                }
                EstimatorKind::Kre => {
                    let clip = match cfg.kre_clip {
                        ClipPolicy::None => None,
                        ClipPolicy::Fixed { xi } => Some(xi),
                        ClipPolicy::Percentile { q } => {
                            let exact = RatioModel::exact_copula(scenario.copula, None)?;
                            let mut vals = exact.evaluate_dataset(&source)?.to_vec();
                            Some(percentile_of(&mut vals, q))
                        }
                    };
                    let ratio = RatioModel::exact_copula(scenario.copula, clip)?;
                    let mut reg = cfg.regression.clone();
                    reg.train.seed = rng::mix_seed(&[seed_r, 22]);
                    fit_kre(&source, &ratio, &reg, Some(&val_reg))?
                }
                EstimatorKind::Ure => {
                    let mut ure = UreConfig {
                        split_fraction: 0.5,
                        split_seed: rng::mix_seed(&[seed_r, 23]),
                        ratio: cfg.ratio.clone(),
                        regression: cfg.regression.clone(),
                    };
                    ure.ratio.train.seed = rng::mix_seed(&[seed_r, 24]);
                    ure.regression.train.seed = rng::mix_seed(&[seed_r, 25]);
                    fit_ure(
                        &source,
                        &target_cov,
                        &ure,
                        UreValidation {
                            regression: Some(&val_reg),
                            ratio: Some((&val_ratio_p, &val_ratio_q)),
                        },
                    )?
                }
            };
            let mse = prediction_mse(|x| fitted.predict(x), &eval_cov, &f0)?;
            let clip = fitted.ratio_used.as_ref().and_then(|rm| rm.clip_level);
            Ok((mse, clip))
        })();

        let wall = start.elapsed().as_secs_f64();
        let record = match outcome {
            Ok((mse, clip)) => ReplicationRecord {
                method,
                replication: r,
                seed: seed_r,
                mse: Some(mse),
                ratio_clip: clip,
                status: "ok".into(),
                wall_time_s: wall,
            },
            Err(e) => ReplicationRecord {
                method,
                replication: r,
                seed: seed_r,
                mse: None,
                ratio_clip: None,
                status: sanitize(&e.to_string()),
                wall_time_s: wall,
            },
        };
        records.push(record);
    }
    records
}

fn sanitize(msg: &str) -> String {
    msg.replace([',', '\n'], ";")
}

/// Runs the experiment: per replication, generate data, fit each requested
/// method, and evaluate its prediction MSE on a fresh target draw. Writes
/// `results.csv`, `replications.csv` and `manifest.json` into the output
/// directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let start = Instant::now();

    let reps: Vec<Vec<ReplicationRecord>> = if cfg.parallelism > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.parallelism)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        pool.install(|| {
            use rayon::prelude::*;
            (0..cfg.replications)
                .into_par_iter()
                .map(|r| run_replication(cfg, r))
                .collect()
        })
    } else {
        (0..cfg.replications)
            .map(|r| run_replication(cfg, r))
            .collect()
    };

    let records: Vec<ReplicationRecord> = reps.into_iter().flatten().collect();
    let total_wall = start.elapsed().as_secs_f64();

    let mut rows = Vec::new();
    for &method in &cfg.methods {
        let mses: Vec<f64> = records
            .iter()
            .filter(|rec| rec.method == method)
            .filter_map(|rec| rec.mse)
            .collect();
        let failed = records
            .iter()
            .filter(|rec| rec.method == method && rec.mse.is_none())
            .count();
        let mean = if mses.is_empty() {
            f64::NAN
        } else {
            mses.iter().sum::<f64>() / mses.len() as f64
        };
        let wall: f64 = records
            .iter()
            .filter(|rec| rec.method == method)
            .map(|rec| rec.wall_time_s)
            .sum();
        rows.push(ResultRow {
            method,
            case: cfg.scenario.case,
            regime: cfg.scenario.regime,
            n_p: cfg.scenario.n_p,
            m: cfg.scenario.m,
            mse_mean: mean,
            mse_sd: sample_sd(&mses, mean),
            mses,
            failed,
            wall_time_s: wall,
        });
    }

    let results_path = cfg.output_dir.join("results.csv");
    write_results_csv(&results_path, &rows)?;
    let replications_path = cfg.output_dir.join("replications.csv");
    write_replications_csv(&replications_path, &records)?;
    let manifest_path = cfg.output_dir.join("manifest.json");
    write_manifest(&manifest_path, cfg, &records, total_wall)?;

    let failures = records.iter().filter(|r| r.mse.is_none()).count();
    Ok(ExperimentOutput {
        rows,
        records,
        failures,
        results_path,
        replications_path,
        manifest_path,
    })
}

fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "method,case,regime,n_p,m,replications_ok,replications_failed,mse_mean,mse_sd,mses,wall_time_s"
    )?;
    for row in rows {
        let mses: Vec<String> = row.mses.iter().map(|v| v.to_string()).collect();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            row.method,
            row.case,
            row.regime,
            row.n_p,
            row.m,
            row.mses.len(),
            row.failed,
            row.mse_mean,
            row.mse_sd,
            mses.join(";"),
            row.wall_time_s
        )?;
    }
    Ok(())
}

fn write_replications_csv(path: &Path, records: &[ReplicationRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "method,replication,seed,mse,ratio_clip,status,wall_time_s"
    )?;
    for rec in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            rec.method,
            rec.replication,
            rec.seed,
            rec.mse.map(|v| v.to_string()).unwrap_or_default(),
            rec.ratio_clip.map(|v| v.to_string()).unwrap_or_default(),
            rec.status,
            rec.wall_time_s
        )?;
    }
    Ok(())
}

fn write_manifest(
    path: &Path,
    cfg: &ExperimentConfig,
    records: &[ReplicationRecord],
    total_wall: f64,
) -> Result<()> {
    let seeds: Vec<u64> = (0..cfg.replications)
        .map(|r| rng::mix_seed(&[cfg.scenario.seed, REPLICATION_TAG, r as u64]))
        .collect();
    let clips: Vec<serde_json::Value> = records
        .iter()
        .map(|rec| {
            serde_json::json!({
                "method": rec.method,
                "replication": rec.replication,
                "ratio_clip": rec.ratio_clip,
            })
        })
        .collect();
    let manifest = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "replication_seeds": seeds,
        "series_terms": cfg.scenario.series_terms,
        "resolved_ratio_clips": clips,
        "total_wall_time_s": total_wall,
    });
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &manifest)
        .map_err(|e| Error::InvalidConfig(format!("manifest serialization: {e}")))?;
    writeln!(w)?;
    Ok(())
}

/// A test function with analytically known Hölder data for the
/// approximation benchmark.
pub struct BenchFunction {
    pub name: String,
    pub d: usize,
    pub holder: HolderSpec,
    /// Plain evaluation, used for the empirical sup error.
    pub f: Box<dyn Fn(&[f64]) -> f64 + Sync + Send>,
    /// Analytic partial derivatives up to order `holder.t`.
    pub derivatives: Box<dyn Fn(&[usize], &[f64]) -> Option<f64> + Sync + Send>,
}

/// One benchmark measurement.
#[derive(Debug, Clone, Serialize)]
pub struct ApproxBenchRow {
    pub name: String,
    pub d: usize,
    pub zeta: f64,
    pub b: f64,
    pub n: usize,
    pub sup_error: f64,
    pub certificate: f64,
}

/// Builds the approximant for every `(function, N)` pair and measures the
/// sup error over seeded random points against the certified bound.
pub fn approx_benchmark(
    functions: &[BenchFunction],
    n_values: &[usize],
    eval_points: usize,
    seed: u64,
) -> Result<Vec<ApproxBenchRow>> {
    use rand::Rng;
    let mut rows = Vec::new();
    for func in functions {
        for &n in n_values {
            let oracle = AnalyticOracle(|alpha: &[usize], x: &[f64]| (func.derivatives)(alpha, x));
            let approx = build_approximant(&oracle, func.holder, n, func.d)?;
            let mut rng = rng::chacha(&[seed, n as u64, func.d as u64]);
            let mut sup = 0.0_f64;
            for _ in 0..eval_points {
                let x: Vec<f64> = (0..func.d).map(|_| rng.random_range(0.0..1.0)).collect();
                let err = (approx.evaluate(&x)? - (func.f)(&x)).abs();
                sup = sup.max(err);
            }
            rows.push(ApproxBenchRow {
                name: func.name.clone(),
                d: func.d,
                zeta: func.holder.zeta,
                b: func.holder.b,
                n,
                sup_error: sup,
                certificate: error_certificate(&func.holder, func.d, n),
            });
        }
    }
    Ok(rows)
}

pub fn write_approx_bench_csv(path: &Path, rows: &[ApproxBenchRow]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "name,d,zeta,b,n,sup_error,certificate")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.name, r.d, r.zeta, r.b, r.n, r.sup_error, r.certificate
        )?;
    }
    Ok(())
}

/// Sine ridge `sin(2 pi sum x_l / d)` as a member of the smoothness-2
/// Hölder ball: first derivatives are bounded by `2 pi / d` and their
/// Lipschitz seminorm in the sup norm by `(2 pi / d)^2 d = 4 pi^2 / d`.
fn sine_ridge(d: usize) -> Result<BenchFunction> {
    let tau = std::f64::consts::TAU;
    let df = d as f64;
    let b = (tau / df).powi(2) * df;
    Ok(BenchFunction {
        name: format!("sin_d{d}"),
        d,
        holder: HolderSpec::new(2.0, b.max(1.0))?,
        f: Box::new(move |x| (tau * x.iter().sum::<f64>() / df).sin()),
        derivatives: Box::new(move |alpha, x| {
            let s = tau * x.iter().sum::<f64>() / df;
            match alpha.iter().sum::<usize>() {
                0 => Some(s.sin()),
                1 => Some(tau / df * s.cos()),
                _ => None,
            }
        }),
    })
}

fn cosine_ridge(d: usize) -> Result<BenchFunction> {
    let tau = std::f64::consts::TAU;
    let df = d as f64;
    let b = (tau / df).powi(2) * df;
    Ok(BenchFunction {
        name: format!("cos_d{d}"),
        d,
        holder: HolderSpec::new(2.0, b.max(1.0))?,
        f: Box::new(move |x| (tau * x.iter().sum::<f64>() / df).cos()),
        derivatives: Box::new(move |alpha, x| {
            let s = tau * x.iter().sum::<f64>() / df;
            match alpha.iter().sum::<usize>() {
                0 => Some(s.cos()),
                1 => Some(-(tau / df) * s.sin()),
                _ => None,
            }
        }),
    })
}

/// The stock benchmark set: a constant, an affine function, sine ridges in
/// d = 1..3, a cosine ridge in d = 2, and a genuinely Lipschitz-only kink.
pub fn standard_bench_functions() -> Result<Vec<BenchFunction>> {
    let mut out = Vec::new();
    out.push(BenchFunction {
        name: "constant_d2".into(),
        d: 2,
        holder: HolderSpec::new(1.0, 1.0)?,
        f: Box::new(|_| 0.7),
        derivatives: Box::new(|alpha, _| {
            Some(if alpha.iter().sum::<usize>() == 0 {
                0.7
            } else {
                0.0
            })
        }),
    });
    out.push(BenchFunction {
        name: "affine_d2".into(),
        d: 2,
        holder: HolderSpec::new(2.0, 1.3)?,
        f: Box::new(|x| 0.3 + 0.5 * (x[0] + x[1])),
        derivatives: Box::new(|alpha, x| {
            Some(match alpha.iter().sum::<usize>() {
                0 => 0.3 + 0.5 * (x[0] + x[1]),
                1 => 0.5,
                _ => 0.0,
            })
        }),
    });
    out.push(sine_ridge(1)?);
    out.push(sine_ridge(2)?);
    out.push(sine_ridge(3)?);
    out.push(cosine_ridge(2)?);
    // |x - 1/3|: zeta = 1, B = 1; the kink never sits on a mesh vertex for
    // power-of-two N.
    out.push(BenchFunction {
        name: "kink_d1".into(),
        d: 1,
        holder: HolderSpec::new(1.0, 1.0)?,
        f: Box::new(|x| (x[0] - 1.0 / 3.0).abs()),
        derivatives: Box::new(|alpha, x| {
            Some(if alpha.iter().sum::<usize>() == 0 {
                (x[0] - 1.0 / 3.0).abs()
            } else {
                0.0
            })
        }),
    });
    Ok(out)
}

/// Least-squares slope of `log(err)` against `log(n)`.
pub fn log_log_slope(pairs: &[(usize, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|(k, _)| (*k as f64).ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|(_, e)| e.max(1e-300).ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}
