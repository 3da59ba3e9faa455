//! Command-line interface: simulation, fitting, evaluation, experiments
//! and the approximation benchmark.
//!
//! Exit codes: 0 on success, 2 on configuration/schema errors, 3 on
//! training divergence, 1 otherwise.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use covshift::dataio::{self, binned_mse, PanelSchema};
use covshift::density_ratio::{self, ClipPolicy, RatioFitConfig};
use covshift::error::Error;
use covshift::harness::{
    approx_benchmark, log_log_slope, prediction_mse, run_experiment, standard_bench_functions,
    write_approx_bench_csv, ExperimentConfig,
};
use covshift::regression::{
    self, check_kre_ratio, fit_kre, fit_naive, fit_ure, EstimatorKind, RegressionFitConfig,
    UreConfig, UreValidation,
};
use covshift::simgen::{gen_covariates, gen_responses, Case, Domain, Regime, ScenarioConfig};

#[derive(Parser)]
#[command(name = "covshift", version, about = "Deep regression for repeated measurements under covariate shift")]
struct Cli {
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Key-value configuration file (`key = value` lines, `#` comments).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file or directory (subcommand dependent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum CaseArg {
    Case1,
    Case2,
}

impl From<CaseArg> for Case {
    fn from(c: CaseArg) -> Case {
        match c {
            CaseArg::Case1 => Case::Case1,
            CaseArg::Case2 => Case::Case2,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Bounded,
    Unbounded,
}

impl From<RegimeArg> for Regime {
    fn from(r: RegimeArg) -> Regime {
        match r {
            RegimeArg::Bounded => Regime::Bounded,
            RegimeArg::Unbounded => Regime::Unbounded,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Ne,
    Kre,
    Ure,
}

impl From<MethodArg> for EstimatorKind {
    fn from(m: MethodArg) -> EstimatorKind {
        match m {
            MethodArg::Ne => EstimatorKind::Ne,
            MethodArg::Kre => EstimatorKind::Kre,
            MethodArg::Ure => EstimatorKind::Ure,
        }
    }
}

/// Scenario flags. Precedence: command line > config file > defaults
/// (case1, bounded, n_p 500, n_q 1000, m 25).
#[derive(Args)]
struct ScenarioArgs {
    #[arg(long, value_enum)]
    case: Option<CaseArg>,
    #[arg(long, value_enum)]
    regime: Option<RegimeArg>,
    /// Source-domain subjects.
    #[arg(long)]
    n_p: Option<usize>,
    /// Target-domain subjects used for ratio fitting.
    #[arg(long)]
    n_q: Option<usize>,
    /// Observations per subject.
    #[arg(long)]
    m: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate simulation datasets as CSV files.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Also emit a source-law validation dataset.
        #[arg(long)]
        with_validation: bool,
    },
    /// Fit a density-ratio model from source and target covariate CSVs.
    FitRatio {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Truncation: `none`, `fixed:<xi>` or `percentile:<q>`.
        #[arg(long, default_value = "none")]
        clip: String,
    },
    /// Fit a regression estimator from dataset CSVs.
    Fit {
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long)]
        source: PathBuf,
        /// Target covariates (required for `ure`).
        #[arg(long)]
        target: Option<PathBuf>,
        /// Ratio model file (required for `kre`).
        #[arg(long)]
        ratio: Option<PathBuf>,
        /// Source-law validation dataset with responses.
        #[arg(long)]
        validation: Option<PathBuf>,
    },
    /// Evaluate a fitted model: against the simulation oracle, or against
    /// responses contained in the dataset.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Compare to the named case's true regression function.
        #[arg(long, value_enum)]
        oracle: Option<CaseArg>,
    },
    /// Run a Monte Carlo experiment and write result tables.
    Experiment {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Monte Carlo replications (default 10).
        #[arg(long)]
        replications: Option<usize>,
        /// Target subjects in the fresh evaluation draw (default 2000).
        #[arg(long)]
        eval_n_q: Option<usize>,
        /// Comma-separated subset of ne,kre,ure.
        #[arg(long, value_delimiter = ',', default_values = ["ne", "kre", "ure"])]
        methods: Vec<MethodArg>,
        #[arg(long)]
        parallelism: Option<usize>,
        /// Paper-scale counts (50 replications, n_q = eval_n_q = 10000).
        #[arg(long)]
        full_scale: bool,
    },
    /// Measure simplicial-approximant sup errors against the certificate.
    ApproxBench {
        #[arg(long, value_delimiter = ',', default_values = ["4", "8", "16", "32"])]
        n_values: Vec<usize>,
        #[arg(long, default_value_t = 10_000)]
        points: usize,
    },
    /// Quantile-binned MSE of predictions against true values.
    BinnedMse {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        true_col: String,
        #[arg(long)]
        pred_col: String,
        #[arg(long, default_value_t = 10)]
        bins: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_)
        | Error::Schema(_)
        | Error::Parse { .. }
        | Error::ModelFormat { .. }
        | Error::EmptyDataset { .. } => 2,
        Error::DivergedTraining { .. } => 3,
        _ => 1,
    }
}

/// `key = value` lines; `#` starts a comment.
fn load_kv_config(path: &Path) -> Result<HashMap<String, String>, Error> {
    let text = std::fs::read_to_string(path)?;
    let mut map = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: "expected `key = value`".into(),
            });
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

struct Overrides {
    map: HashMap<String, String>,
}

impl Overrides {
    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, Error> {
        match self.map.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Error::InvalidConfig(format!("config key `{key}`: cannot parse `{raw}`"))
            }),
        }
    }
}

fn parse_clip(s: &str) -> Result<ClipPolicy, Error> {
    if s == "none" {
        return Ok(ClipPolicy::None);
    }
    if let Some(x) = s.strip_prefix("fixed:") {
        let xi: f64 = x
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad clip level `{x}`")))?;
        return Ok(ClipPolicy::Fixed { xi });
    }
    if let Some(q) = s.strip_prefix("percentile:") {
        let q: f64 = q
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad clip percentile `{q}`")))?;
        return Ok(ClipPolicy::Percentile { q });
    }
    Err(Error::InvalidConfig(format!(
        "clip must be `none`, `fixed:<xi>` or `percentile:<q>`, got `{s}`"
    )))
}

fn parse_dims(s: &str) -> Result<Vec<usize>, Error> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidConfig(format!("bad hidden dims `{s}`")))
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), Error> {
    let overrides = Overrides {
        map: match &cli.config {
            Some(path) => load_kv_config(path)?,
            None => HashMap::new(),
        },
    };
    let seed = match cli.seed {
        Some(s) => s,
        None => overrides.get::<u64>("seed")?.unwrap_or(0),
    };

    match cli.command {
        Command::Simulate {
            scenario,
            with_validation,
        } => {
            let cfg = build_scenario(&scenario, seed, &overrides)?;
            let out = require_out(&cli.out, "simulate writes a directory")?;
            std::fs::create_dir_all(&out)?;
            let manifest = format!(
                "case={} regime={} n_p={} n_q={} m={} seed={} series_terms={}",
                cfg.case, cfg.regime, cfg.n_p, cfg.n_q, cfg.m, cfg.seed, cfg.series_terms
            );
            let source = gen_responses(
                &gen_covariates(Domain::Source, &cfg, cfg.n_p, cfg.m)?,
                &cfg,
            )?;
            dataio::write_dataset_csv(&out.join("source.csv"), &source, Some(&manifest))?;
            let target = gen_covariates(Domain::Target, &cfg, cfg.n_q, cfg.m)?;
            dataio::write_dataset_csv(&out.join("target.csv"), &target, Some(&manifest))?;
            if with_validation {
                let n_v = ((0.2 * cfg.n_p as f64).ceil() as usize).max(2);
                let vcfg = cfg.with_seed(covshift::rng::mix_seed(&[cfg.seed, 11]));
                let val = gen_responses(
                    &gen_covariates(Domain::Source, &vcfg, n_v, cfg.m)?,
                    &vcfg,
                )?;
                dataio::write_dataset_csv(&out.join("validation.csv"), &val, Some(&manifest))?;
            }
            println!("wrote datasets to {}", out.display());
            Ok(())
        }

        Command::FitRatio {
            source,
            target,
            clip,
        } => {
            let out = require_out(&cli.out, "fit-ratio writes a model file")?;
            let (source_ds, _) = dataio::read_dataset_csv(&source)?;
            let (target_ds, _) = dataio::read_dataset_csv(&target)?;
            let mut cfg = RatioFitConfig::default_with_seed(seed);
            cfg.clip = parse_clip(overrides.map.get("ratio_clip").map_or(&clip, |v| v))?;
            apply_train_overrides(&mut cfg.train, &overrides)?;
            if let Some(dims) = overrides.map.get("ratio_hidden") {
                cfg.hidden_dims = parse_dims(dims)?;
            }
            let model = density_ratio::fit_ratio(
                &source_ds.covariates_only(),
                &target_ds.covariates_only(),
                &cfg,
                None,
            )?;
            density_ratio::save_ratio(&out, &model)?;
            println!("wrote ratio model to {}", out.display());
            Ok(())
        }

        Command::Fit {
            method,
            source,
            target,
            ratio,
            validation,
        } => {
            let out = require_out(&cli.out, "fit writes a model file")?;
            let (source_ds, _) = dataio::read_dataset_csv(&source)?;
            let val_ds = match &validation {
                Some(p) => Some(dataio::read_dataset_csv(p)?.0),
                None => None,
            };
            let mut reg = RegressionFitConfig::default_with_seed(seed);
            apply_train_overrides(&mut reg.train, &overrides)?;
            if let Some(dims) = overrides.map.get("reg_hidden") {
                reg.hidden_dims = parse_dims(dims)?;
            }
            let fitted = match EstimatorKind::from(method) {
                EstimatorKind::Ne => fit_naive(&source_ds, &reg, val_ds.as_ref())?,
                EstimatorKind::Kre => {
                    let ratio_path = ratio.ok_or_else(|| {
                        Error::InvalidConfig("kre requires --ratio <model file>".into())
                    })?;
                    let ratio_model = density_ratio::load_ratio(&ratio_path)?;
                    check_kre_ratio(&ratio_model)?;
                    fit_kre(&source_ds, &ratio_model, &reg, val_ds.as_ref())?
                }
                EstimatorKind::Ure => {
                    let target_path = target.ok_or_else(|| {
                        Error::InvalidConfig("ure requires --target <covariate csv>".into())
                    })?;
                    let (target_ds, _) = dataio::read_dataset_csv(&target_path)?;
                    let mut cfg = UreConfig::default_with_seed(seed);
                    cfg.regression = reg;
                    apply_train_overrides(&mut cfg.ratio.train, &overrides)?;
                    if let Some(dims) = overrides.map.get("ratio_hidden") {
                        cfg.ratio.hidden_dims = parse_dims(dims)?;
                    }
                    if let Some(clip) = overrides.map.get("ratio_clip") {
                        cfg.ratio.clip = parse_clip(clip)?;
                    }
                    fit_ure(
                        &source_ds,
                        &target_ds.covariates_only(),
                        &cfg,
                        UreValidation {
                            regression: val_ds.as_ref(),
                            ratio: None,
                        },
                    )?
                }
            };
            regression::save_fitted(&out, &fitted)?;
            println!("wrote {} model to {}", fitted.kind, out.display());
            Ok(())
        }

        Command::Evaluate {
            model,
            data,
            oracle,
        } => {
            let fitted = regression::load_fitted(&model)?;
            let (ds, _) = dataio::read_dataset_csv(&data)?;
            let mse = match oracle {
                Some(case) => {
                    let case = Case::from(case);
                    prediction_mse(|x| fitted.predict(x), &ds.covariates_only(), |x| {
                        case.f0(x)
                    })?
                }
                None => {
                    let mut acc = 0.0;
                    let mut n = 0usize;
                    if !ds.has_responses() {
                        return Err(Error::MissingResponses);
                    }
                    for (i, j, row) in ds.iter_rows() {
                        let y = ds.subjects[i].responses.as_ref().unwrap()[j];
                        let r = fitted.predict(row)? - y;
                        acc += r * r;
                        n += 1;
                    }
                    acc / n as f64
                }
            };
            println!("mse: {mse}");
            if let Some(out) = &cli.out {
                std::fs::write(out, format!("mse\n{mse}\n"))?;
            }
            Ok(())
        }

        Command::Experiment {
            scenario,
            replications,
            eval_n_q,
            methods,
            parallelism,
            full_scale,
        } => {
            let out = require_out(&cli.out, "experiment writes a directory")?;
            let scen = build_scenario(&scenario, seed, &overrides)?;
            let mut cfg = ExperimentConfig::desk_scale(scen, out.clone());
            cfg.replications = replications
                .or(overrides.get("replications")?)
                .unwrap_or(10);
            cfg.eval_n_q = eval_n_q.or(overrides.get("eval_n_q")?).unwrap_or(2000);
            cfg.methods = methods.into_iter().map(EstimatorKind::from).collect();
            if let Some(p) = parallelism {
                cfg.parallelism = p;
            }
            if let Some(p) = overrides.get::<usize>("parallelism")? {
                cfg.parallelism = p;
            }
            apply_train_overrides(&mut cfg.ratio.train, &overrides)?;
            apply_train_overrides(&mut cfg.regression.train, &overrides)?;
            if let Some(dims) = overrides.map.get("ratio_hidden") {
                cfg.ratio.hidden_dims = parse_dims(dims)?;
            }
            if let Some(dims) = overrides.map.get("reg_hidden") {
                cfg.regression.hidden_dims = parse_dims(dims)?;
            }
            if let Some(clip) = overrides.map.get("ratio_clip") {
                cfg.ratio.clip = parse_clip(clip)?;
            }
            if let Some(clip) = overrides.map.get("kre_clip") {
                cfg.kre_clip = parse_clip(clip)?;
            }
            if full_scale {
                cfg = cfg.full_scale();
            }
            let output = run_experiment(&cfg)?;
            for row in &output.rows {
                println!(
                    "{}: mean MSE {:.6} (sd {:.6}) over {} replications ({} failed)",
                    row.method,
                    row.mse_mean,
                    row.mse_sd,
                    row.mses.len(),
                    row.failed
                );
            }
            println!("results: {}", output.results_path.display());
            Ok(())
        }

        Command::ApproxBench { n_values, points } => {
            let out = require_out(&cli.out, "approx-bench writes a CSV")?;
            let functions = standard_bench_functions()?;
            let rows = approx_benchmark(&functions, &n_values, points, seed)?;
            write_approx_bench_csv(&out, &rows)?;
            for f in &functions {
                let pairs: Vec<(usize, f64)> = rows
                    .iter()
                    .filter(|r| r.name == f.name && r.sup_error > 0.0)
                    .map(|r| (r.n, r.sup_error))
                    .collect();
                if pairs.len() >= 2 {
                    println!(
                        "{}: slope {:.3} (smoothness {})",
                        f.name,
                        log_log_slope(&pairs),
                        f.holder.zeta
                    );
                }
            }
            println!("wrote benchmark to {}", out.display());
            Ok(())
        }

        Command::BinnedMse {
            data,
            true_col,
            pred_col,
            bins,
        } => {
            let schema = PanelSchema {
                subject_col: true_col.clone(),
                covariate_cols: vec![true_col.clone(), pred_col.clone()],
                response_col: None,
            };
            let ds = dataio::load_panel_csv(&data, &schema)?;
            let mut truth = Vec::new();
            let mut pred = Vec::new();
            for (_, _, row) in ds.iter_rows() {
                truth.push(row[0]);
                pred.push(row[1]);
            }
            let table = binned_mse(&truth, &pred, bins)?;
            println!("bin_mean_true,mse,count");
            let mut lines = String::from("bin_mean_true,mse,count\n");
            for b in &table {
                let line = format!("{},{},{}", b.bin_mean_true, b.mse, b.count);
                println!("{line}");
                lines.push_str(&line);
                lines.push('\n');
            }
            if let Some(out) = &cli.out {
                std::fs::write(out, lines)?;
            }
            Ok(())
        }
    }
}

fn require_out(out: &Option<PathBuf>, why: &str) -> Result<PathBuf, Error> {
    out.clone()
        .ok_or_else(|| Error::InvalidConfig(format!("--out is required: {why}")))
}

fn build_scenario(
    args: &ScenarioArgs,
    seed: u64,
    overrides: &Overrides,
) -> Result<ScenarioConfig, Error> {
    let config_case = match overrides.map.get("case").map(String::as_str) {
        Some("case1") => Some(Case::Case1),
        Some("case2") => Some(Case::Case2),
        Some(other) => {
            return Err(Error::InvalidConfig(format!(
                "config key `case`: expected case1|case2, got `{other}`"
            )))
        }
        None => None,
    };
    let case = args
        .case
        .map(Case::from)
        .or(config_case)
        .unwrap_or(Case::Case1);
    let config_regime = match overrides.map.get("regime").map(String::as_str) {
        Some("bounded") => Some(Regime::Bounded),
        Some("unbounded") => Some(Regime::Unbounded),
        Some(other) => {
            return Err(Error::InvalidConfig(format!(
                "config key `regime`: expected bounded|unbounded, got `{other}`"
            )))
        }
        None => None,
    };
    let regime = args
        .regime
        .map(Regime::from)
        .or(config_regime)
        .unwrap_or(Regime::Bounded);
    let n_p = args.n_p.or(overrides.get("n_p")?).unwrap_or(500);
    let n_q = args.n_q.or(overrides.get("n_q")?).unwrap_or(1000);
    let m = args.m.or(overrides.get("m")?).unwrap_or(25);
    let mut cfg = ScenarioConfig::new(case, regime, n_p, n_q, m, seed);
    if let Some(v) = overrides.get("noise_sd")? {
        cfg.noise_sd = v;
    }
    if let Some(v) = overrides.get("lambda_sd")? {
        cfg.lambda_sd = v;
    }
    if let Some(v) = overrides.get("series_terms")? {
        cfg.series_terms = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn apply_train_overrides(
    train: &mut covshift::nn::TrainConfig,
    overrides: &Overrides,
) -> Result<(), Error> {
    if let Some(v) = overrides.get("max_epochs")? {
        train.max_epochs = v;
    }
    if let Some(v) = overrides.get("batch_size")? {
        train.batch_size = v;
    }
    if let Some(v) = overrides.get("patience")? {
        train.early_stop_patience = v;
    }
    if let Some(v) = overrides.get::<f64>("lr0")? {
        train.optimizer = match train.optimizer {
            covshift::nn::Optimizer::Adam { decay_factor, .. } => {
                covshift::nn::Optimizer::Adam {
                    lr0: v,
                    decay_factor,
                }
            }
            covshift::nn::Optimizer::SgdNesterov {
                momentum,
                decay_factor,
                ..
            } => covshift::nn::Optimizer::SgdNesterov {
                lr0: v,
                momentum,
                decay_factor,
            },
        };
    }
    Ok(())
}
