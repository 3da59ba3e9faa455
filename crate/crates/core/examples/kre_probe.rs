// One-off diagnostic: truncation level x width x epochs for the fitted
// ratio's downstream URE quality.
use covshift::density_ratio::{fit_ratio, ClipPolicy, RatioFitConfig, RatioModel};
use covshift::harness::prediction_mse;
use covshift::regression::*;
use covshift::simgen::*;

fn main() {
    let scen = ScenarioConfig::new(Case::Case1, Regime::Unbounded, 500, 1000, 25, 31415);
    let source = gen_source(&scen, scen.n_p, scen.m).unwrap();
    let target = gen_covariates(Domain::Target, &scen, scen.n_q, scen.m).unwrap();
    let val = gen_source(&scen.with_seed(1), 100, scen.m).unwrap();
    let vr_p = gen_covariates(Domain::Source, &scen.with_seed(2), 100, scen.m).unwrap();
    let vr_q = gen_covariates(Domain::Target, &scen.with_seed(2), 200, scen.m).unwrap();
    let eval = gen_covariates(Domain::Target, &scen.with_seed(3), 1000, scen.m).unwrap();
    let f0 = oracle_f0(scen.case);

    let (first, second) = split_assignment(500, 0.5, 123).unwrap();
    let reg_half = source.select_subjects(&first);
    let ratio_half = source.select_subjects(&second).covariates_only();
    let exact = RatioModel::exact_copula(scen.copula, Some(20.0)).unwrap();
    let reg = RegressionFitConfig::default_with_seed(7);
    let kre20 = fit_kre(&reg_half, &exact, &reg, Some(&val)).unwrap();
    println!("reference: exact r_20 on half -> {:.4}",
        prediction_mse(|x| kre20.predict(x), &eval, &f0).unwrap());

    for (xi, width, epochs) in [
        (20.0, 64, 200), (10.0, 64, 200), (20.0, 8, 200), (10.0, 8, 200),
        (70.71, 8, 200), (20.0, 64, 40),
    ] {
        let mut rcfg = RatioFitConfig::default_with_seed(5);
        rcfg.hidden_dims = vec![width, width];
        rcfg.train.max_epochs = epochs;
        rcfg.clip = ClipPolicy::Fixed { xi };
        let fitted = fit_ratio(&ratio_half, &target, &rcfg, Some((&vr_p, &vr_q))).unwrap();
        let ure = fit_kre(&reg_half, &fitted, &reg, Some(&val)).unwrap();
        let mse = prediction_mse(|x| ure.predict(x), &eval, &f0).unwrap();
        // how much weight lands on the regression half
        let w = fitted.evaluate_dataset(&reg_half).unwrap();
        let ge_tenth = w.iter().filter(|x| **x > 0.1).count();
        println!("xi={xi} width={width} epochs={epochs}: URE MSE {mse:.4}, #w>0.1 on D1P: {ge_tenth}");
    }
}
