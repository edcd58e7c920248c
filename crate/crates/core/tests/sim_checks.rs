use fair_targeting::estimator::FptConfig;
use fair_targeting::model::{Capacity, PolicyClass, PolicyCoefficients, PolicyKind, RuleForm};
use fair_targeting::sim::{
    draw_sample, make_calibrated_dgp, mean_and_se, population_of_coefficients, population_quantities, run_replications,
    Dgp, DgpSpec, Method, METRICS,
};
use fair_targeting::unfairness::{EnvySecondTerm, MeasureKind, UnfairnessMeasure};

type Rule = Box<dyn Fn(&[f64], u8) -> f64>;

fn linear_rule() -> PolicyCoefficients {
    PolicyCoefficients {
        form: RuleForm::Linear,
        intercept: 0.45,
        attribute: -0.1,
        covariates: vec![0.2, -0.15, 0.1],
        levels: None,
    }
}

/// Group-wise inverse-propensity estimates of `E[tau(X) pi(X, s) | S = s]`
/// and treatment rates, with their standard errors, from a large draw.
fn monte_carlo(dgp: &Dgp, rule: &dyn Fn(&[f64], u8) -> f64, n: usize, seed: u64) -> [[(f64, f64); 2]; 2] {
    let ds = draw_sample(dgp, n, seed).unwrap();
    let mut welfare: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut rate: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for i in 0..ds.n() {
        let (x, s, d) = (ds.x(i), ds.s(i), ds.d(i));
        let e = dgp.propensity(x, s);
        let gamma = if d == 1 { ds.y(i) / e } else { -ds.y(i) / (1.0 - e) };
        welfare[s as usize].push(gamma * rule(x, s));
        rate[s as usize].push(rule(x, s));
    }
    [[mean_and_se(&welfare[0]), mean_and_se(&welfare[1])], [mean_and_se(&rate[0]), mean_and_se(&rate[1])]]
}

#[test]
fn population_quantities_agree_with_monte_carlo() {
    let dgp = make_calibrated_dgp(&DgpSpec::default(), 7).unwrap();
    let coef = linear_rule();
    let rules: [(&str, Rule); 2] =
        [("treat all", Box::new(|_, _| 1.0)), ("linear", Box::new(move |x, s| coef.evaluate(x, s)))];
    for (name, rule) in &rules {
        let exact = population_quantities(&dgp, rule, EnvySecondTerm::AsPrinted);
        let [w, rate] = monte_carlo(&dgp, rule.as_ref(), 200_000, 99);
        for (s, target) in [exact.w0, exact.w1].into_iter().enumerate() {
            let (m, se) = w[s];
            assert!((m - target).abs() <= 4.0 * se, "{name} W{s}: {m} +- {se} vs {target}");
        }
        let c = rate[0].0 - rate[1].0;
        let se = (rate[0].1.powi(2) + rate[1].1.powi(2)).sqrt();
        assert!((c - exact.prediction_disparity).abs() <= 4.0 * se.max(1e-12), "{name} C: {c} vs {}", exact.prediction_disparity);
    }
}

#[test]
fn sampled_group_share_matches() {
    let dgp = make_calibrated_dgp(&DgpSpec::default(), 7).unwrap();
    let ds = draw_sample(&dgp, 100_000, 5).unwrap();
    assert!((ds.group_share(1) - dgp.p1).abs() < 0.01, "{}", ds.group_share(1));
}

fn sim_config() -> FptConfig {
    let class = PolicyClass::new(PolicyKind::LinearProbability).with_b_max(Some(1.0)).with_capacity(Capacity::Fraction(0.375));
    let measure = UnfairnessMeasure { absolute: true, ..UnfairnessMeasure::new(MeasureKind::PredictionDisparity) };
    FptConfig::new(class, measure)
}

#[test]
fn single_replication_summary_equals_its_record() {
    let dgp = make_calibrated_dgp(&DgpSpec::default(), 3).unwrap();
    let methods = [Method::Fpt, Method::Ewm, Method::ConstrainedEwm { kappa: 1.0 }];
    let sum = run_replications(&dgp, 120, 1, &methods, &sim_config(), 11).unwrap();
    assert_eq!(sum.failures, 0);
    assert_eq!(sum.records.len(), methods.len());
    for rec in &sum.records {
        let q = rec.population;
        let values = [q.w0, q.w1, q.prediction_disparity, q.prediction_disparity.abs(), q.welfare_disparity, q.incentive, q.envy];
        for (name, v) in METRICS.iter().zip(values) {
            let row = sum.row(&rec.method, name).unwrap();
            assert_eq!((row.mean, row.se, row.replications), (v, 0.0, 1), "{} {name}", rec.method);
        }
    }
}

#[test]
fn replications_are_deterministic() {
    let dgp = make_calibrated_dgp(&DgpSpec::default(), 3).unwrap();
    let methods = [Method::Fpt, Method::Ewm];
    let a = run_replications(&dgp, 100, 4, &methods, &sim_config(), 2).unwrap();
    let b = run_replications(&dgp, 100, 4, &methods, &sim_config(), 2).unwrap();
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    a.write_csv(&mut ca).unwrap();
    b.write_csv(&mut cb).unwrap();
    assert_eq!(ca, cb);
    assert_eq!(a.records, b.records);
}

#[test]
fn fitted_rules_are_evaluated_by_their_coefficients() {
    let dgp = make_calibrated_dgp(&DgpSpec::default(), 3).unwrap();
    let coef = linear_rule();
    let direct = population_quantities(&dgp, |x, s| coef.evaluate(x, s), EnvySecondTerm::WelfareForm);
    assert_eq!(population_of_coefficients(&dgp, &coef, EnvySecondTerm::WelfareForm), direct);
    assert_eq!(direct.welfare_disparity, direct.w0 - direct.w1);
}
