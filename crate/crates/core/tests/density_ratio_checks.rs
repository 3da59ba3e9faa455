//! Density-ratio checks against quadrature oracles and Monte Carlo.

mod common;

use common::{integrate, mean, normal_expectation, sample_sd};
use covshift::dataset::RepeatedDataset;
use covshift::density_ratio::{
    exact_copula_ratio, fit_ratio, moment_diagnostic, ClipPolicy, CopulaParams, RatioFitConfig,
    RatioModel,
};
use covshift::normal::std_normal_quantile;
use covshift::rng;
use covshift::simgen::{gen_covariates, Case, Domain, Regime, ScenarioConfig};
use rand::Rng;

fn bounded_params(d: usize) -> CopulaParams {
    CopulaParams {
        mu_p: 0.0,
        var_p: 0.4,
        mu_q: 0.5,
        var_q: 0.3,
        d,
    }
}

/// Copula marginal density of X at x by an independent route: the CDF
/// `F(x) = F_Z(quantile(x))` computed by quadrature of the normal density,
/// differentiated by Richardson-extrapolated central differences.
fn density_by_quadrature(x: f64, mu: f64, sd: f64) -> f64 {
    let cdf = |u: f64| -> f64 {
        let z = std_normal_quantile(u);
        let lo = mu - 12.0 * sd;
        let density = |t: f64| {
            let v = (t - mu) / sd;
            (-0.5 * v * v).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
        };
        integrate(density, lo, z, 400)
    };
    let h = 1e-4;
    let d1 = (cdf(x + h) - cdf(x - h)) / (2.0 * h);
    let d2 = (cdf(x + h / 2.0) - cdf(x - h / 2.0)) / h;
    (4.0 * d2 - d1) / 3.0
}

#[test]
fn exact_ratio_agrees_with_quadrature_density_ratio() {
    // d=1 bounded parameters at x = 0.5 (z = 0), and a few other points.
    let p = bounded_params(1);
    for x in [0.5, 0.3, 0.7, 0.9] {
        let got = exact_copula_ratio(&p, &[x]).unwrap();
        let q = density_by_quadrature(x, p.mu_q, p.var_q.sqrt());
        let pd = density_by_quadrature(x, p.mu_p, p.var_p.sqrt());
        let oracle = q / pd;
        assert!(
            (got - oracle).abs() < 1e-8,
            "x={x}: exact {got:.12} vs quadrature {oracle:.12}"
        );
    }
}

#[test]
fn bounded_ratio_respects_analytic_supremum() {
    let p = bounded_params(3);
    let analytic = p.sup_ratio().expect("bounded");
    // Spec formula (sigma_P/sigma_Q)^d exp(d (mu_Q-mu_P)^2 / (2(var_P - var_Q))).
    let manual = (p.var_p / p.var_q).sqrt().powi(3)
        * (3.0 * (p.mu_q - p.mu_p).powi(2) / (2.0 * (p.var_p - p.var_q))).exp();
    assert!((analytic - manual).abs() < 1e-10 * manual);

    let mut rng = rng::chacha(&[606, 1]);
    let mut sup = 0.0_f64;
    for _ in 0..1_000_000 {
        let x = [
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..1.0),
        ];
        sup = sup.max(exact_copula_ratio(&p, &x).unwrap());
    }
    assert!(sup.is_finite());
    assert!(
        sup <= analytic * (1.0 + 1e-12),
        "empirical sup {sup} exceeds analytic {analytic}"
    );
    // The bound is tight enough to be approached.
    assert!(sup > 0.5 * analytic, "sup {sup} far below analytic {analytic}");
}

#[test]
fn moment_diagnostic_matches_quadrature() {
    // kappa_0 = E_P[r^2] = (1-d integral)^d for the bounded parameters;
    // the empirical moment over 1e5 source draws lands within 5%.
    let p = bounded_params(3);
    let per_coord = normal_expectation(
        |z| {
            let x = covshift::normal::std_normal_cdf(z);
            let r1 = exact_copula_ratio(&bounded_params(1), &[x]).unwrap();
            r1 * r1
        },
        p.mu_p,
        p.var_p.sqrt(),
    );
    let oracle = per_coord.powi(3);

    let cfg = ScenarioConfig::new(Case::Case1, Regime::Bounded, 1, 1, 1, 404);
    let draws = gen_covariates(Domain::Source, &cfg, 4000, 25).unwrap();
    let model = RatioModel::exact_copula(p, None).unwrap();
    let kappa = moment_diagnostic(&model, &draws, 0.0).unwrap();
    assert!(
        (kappa / oracle - 1.0).abs() < 0.05,
        "empirical {kappa:.4} vs quadrature {oracle:.4}"
    );
}

#[test]
fn risk_identity_at_the_true_ratio() {
    // L(r) = (1/2) E_P r^2 - E_Q r equals -(1/2) E_Q r; in Monte Carlo form
    // the discrepancy (1/2)(mean_P r^2 - mean_Q r) is within 3 SEs of zero.
    let p = bounded_params(3);
    let model = RatioModel::exact_copula(p, None).unwrap();
    let cfg = ScenarioConfig::new(Case::Case1, Regime::Bounded, 1, 1, 1, 505);
    let source = gen_covariates(Domain::Source, &cfg, 4000, 25).unwrap();
    let target = gen_covariates(Domain::Target, &cfg, 4000, 25).unwrap();

    let r_sq_p: Vec<f64> = model
        .evaluate_dataset(&source)
        .unwrap()
        .iter()
        .map(|v| v * v)
        .collect();
    let r_q: Vec<f64> = model.evaluate_dataset(&target).unwrap().to_vec();
    let diff = 0.5 * (mean(&r_sq_p) - mean(&r_q));
    let se = 0.5
        * (sample_sd(&r_sq_p).powi(2) / r_sq_p.len() as f64
            + sample_sd(&r_q).powi(2) / r_q.len() as f64)
            .sqrt();
    assert!(
        diff.abs() < 3.0 * se,
        "identity violation {diff:.5} vs 3se {:.5}",
        3.0 * se
    );
}

#[test]
fn moment_diagnostic_stable_while_sup_grows_in_unbounded_regime() {
    // A gentle finite-second-moment configuration: the kappa_0 estimate
    // approaches its quadrature value as draws accumulate, while the
    // empirical supremum keeps growing (the ratio is unbounded).
    let p = CopulaParams {
        mu_p: 0.0,
        var_p: 0.3,
        mu_q: 0.25,
        var_q: 0.5,
        d: 1,
    };
    assert!(p.sup_ratio().is_none());
    let per_coord = normal_expectation(
        |z| {
            let x = covshift::normal::std_normal_cdf(z);
            let r1 = exact_copula_ratio(&p, &[x]).unwrap();
            r1 * r1
        },
        p.mu_p,
        p.var_p.sqrt(),
    );

    let model = RatioModel::exact_copula(p, None).unwrap();
    let mut cfg = ScenarioConfig::new(Case::Case1, Regime::Unbounded, 1, 1, 1, 606);
    cfg.copula = CopulaParams { d: 3, ..p };

    let draw = |n: usize, seed: u64| -> Vec<f64> {
        let c = cfg.with_seed(seed);
        let data = gen_covariates(Domain::Source, &c, n, 1).unwrap();
        data.iter_rows()
            .map(|(_, _, row)| exact_copula_ratio(&p, &row[..1]).unwrap())
            .collect()
    };

    let small = draw(10_000, 1);
    let large = draw(1_000_000, 2);
    let sup_small = small.iter().cloned().fold(0.0, f64::max);
    let sup_large = large.iter().cloned().fold(0.0, f64::max);
    assert!(
        sup_large > 1.5 * sup_small,
        "sup did not grow: {sup_small:.2} -> {sup_large:.2}"
    );

    let kappa_large = mean(&large.iter().map(|r| r * r).collect::<Vec<_>>());
    assert!(
        (kappa_large / per_coord - 1.0).abs() < 0.2,
        "kappa at 1e6 draws {kappa_large:.4} vs quadrature {per_coord:.4}"
    );
    let _ = model;
}

#[test]
fn fitted_ratio_is_near_one_when_domains_coincide() {
    // P = Q at n = 2000 observations, d = 2: the fitted ratio averages to
    // about one over held-out source points.
    let params = CopulaParams {
        mu_p: 0.2,
        var_p: 0.5,
        mu_q: 0.2,
        var_q: 0.5,
        d: 2,
    };
    let mut cfg = ScenarioConfig::new(Case::Case1, Regime::Bounded, 1, 1, 1, 808);
    cfg.copula = CopulaParams { d: 3, ..params };
    // Draw 2-d covariates by truncating 3-d draws to the first two columns.
    let to_2d = |data: &RepeatedDataset| -> RepeatedDataset {
        RepeatedDataset::new(
            2,
            data.subjects
                .iter()
                .map(|s| covshift::dataset::Subject {
                    covariates: s
                        .covariates
                        .chunks_exact(3)
                        .flat_map(|r| r[..2].to_vec())
                        .collect(),
                    responses: None,
                })
                .collect(),
        )
        .unwrap()
    };
    let source = to_2d(&gen_covariates(Domain::Source, &cfg, 400, 5).unwrap());
    let target = to_2d(&gen_covariates(Domain::Source, &cfg.with_seed(809), 400, 5).unwrap());
    let holdout = to_2d(&gen_covariates(Domain::Source, &cfg.with_seed(810), 400, 5).unwrap());

    let fit_cfg = RatioFitConfig::default_with_seed(811);
    let model = fit_ratio(&source, &target, &fit_cfg, None).unwrap();
    let avg = mean(&model.evaluate_dataset(&holdout).unwrap().to_vec());
    assert!(
        (0.8..=1.2).contains(&avg),
        "mean fitted ratio {avg:.3} outside [0.8, 1.2]"
    );
}

#[test]
fn clipped_models_never_exceed_their_level() {
    // 1e5 random points for both a clipped fit and a clipped exact ratio.
    let mut rng = rng::chacha(&[909, 2]);
    let net_model = {
        let source = gen_covariates(
            Domain::Source,
            &ScenarioConfig::new(Case::Case1, Regime::Bounded, 1, 1, 1, 910),
            50,
            5,
        )
        .unwrap();
        let target = gen_covariates(
            Domain::Target,
            &ScenarioConfig::new(Case::Case1, Regime::Bounded, 1, 1, 1, 911),
            50,
            5,
        )
        .unwrap();
        let mut cfg = RatioFitConfig::default_with_seed(912);
        cfg.hidden_dims = vec![16];
        cfg.train.max_epochs = 3;
        cfg.clip = ClipPolicy::Fixed { xi: 5.0 };
        fit_ratio(&source, &target, &cfg, None).unwrap()
    };
    assert_eq!(net_model.clip_level, Some(5.0));
    let exact_model = RatioModel::exact_copula(bounded_params(3), Some(2.5)).unwrap();

    for _ in 0..100_000 {
        let x = [
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..1.0),
        ];
        assert!(net_model.evaluate(&x).unwrap() <= 5.0);
        assert!(exact_model.evaluate(&x).unwrap() <= 2.5);
    }
}

#[test]
fn fitted_ratio_tracks_exact_ratio_in_l2() {
    // Bounded parameters, 1000 source subjects at m = 25: relative L2(P)
    // error of the fit against the closed form stays below 0.5.
    let cfg = ScenarioConfig::new(Case::Case1, Regime::Bounded, 1000, 1000, 25, 2024);
    let source = gen_covariates(Domain::Source, &cfg, 1000, 25).unwrap();
    let target = gen_covariates(Domain::Target, &cfg, 1000, 25).unwrap();
    let holdout = gen_covariates(Domain::Source, &cfg.with_seed(2025), 2000, 1).unwrap();

    let mut fit_cfg = RatioFitConfig::default_with_seed(2026);
    fit_cfg.train.batch_size = 256;
    let model = fit_ratio(&source, &target, &fit_cfg, None).unwrap();
    let exact = RatioModel::exact_copula(cfg.copula, None).unwrap();

    let mut num = 0.0;
    let mut den = 0.0;
    for (_, _, row) in holdout.iter_rows() {
        let fitted = model.evaluate(row).unwrap();
        let truth = exact.evaluate(row).unwrap();
        num += (fitted - truth) * (fitted - truth);
        den += truth * truth;
    }
    let rel = (num / den).sqrt();
    assert!(rel <= 0.5, "relative L2(P) error {rel:.3}");
}
