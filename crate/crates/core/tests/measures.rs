mod common;

use common::{assert_close, random_dataset, random_estimates, rng};
use fair_targeting::estimator::evaluate_policy;
use fair_targeting::model::{split_folds, Dataset, PolicyValues};
use fair_targeting::nuisance::empirical_welfare;
use fair_targeting::oracle::{naive_envy, naive_incentive, naive_prediction_disparity, naive_welfare, naive_welfare_disparity};
use fair_targeting::unfairness::{EnvySecondTerm, MeasureInputs, MeasureKind, UnfairnessMeasure};
use proptest::prelude::*;
use rand::Rng;

const LINEAR_KINDS: [MeasureKind; 4] = [
    MeasureKind::PredictionDisparity,
    MeasureKind::WelfareDisparity,
    MeasureKind::IncentiveCompatibility,
    MeasureKind::CounterfactualEnvy,
];

fn random_policy(r: &mut impl Rng, n: usize) -> PolicyValues {
    PolicyValues::new((0..n).map(|_| r.random::<f64>()).collect(), (0..n).map(|_| r.random::<f64>()).collect())
}

#[test]
fn report_matches_direct_definitions() {
    let mut r = rng(21);
    for _ in 0..30 {
        let n = r.random_range(8..60);
        let ds = random_dataset(&mut r, n, 2);
        let est = random_estimates(&mut r, &ds);
        let pv = random_policy(&mut r, n);
        let inputs = MeasureInputs { ds: &ds, nuisance: &est.nuisance, scores: &est.scores };
        for term in [EnvySecondTerm::AsPrinted, EnvySecondTerm::WelfareForm] {
            let rep = evaluate_policy(&inputs, &pv, term);
            assert_close(rep.w0, naive_welfare(&est.scores, &pv, 0), 1e-12, "w0");
            assert_close(rep.w1, naive_welfare(&est.scores, &pv, 1), 1e-12, "w1");
            assert_close(rep.prediction_disparity, naive_prediction_disparity(&ds, &pv), 1e-12, "C");
            assert_close(rep.welfare_disparity, naive_welfare_disparity(&est.scores, &pv), 1e-12, "D");
            assert_close(rep.incentive, naive_incentive(&est.scores, &pv), 1e-12, "I");
            assert_close(rep.envy, naive_envy(&ds, &est.nuisance, &est.scores, &pv, term), 1e-10, "E");
            assert!(rep.predictive_parity.is_none() && rep.predictive_parity_skipped.is_some());
        }
    }
}

#[test]
fn null_policy_reports_zero() {
    let mut r = rng(22);
    let ds = random_dataset(&mut r, 30, 1);
    let est = random_estimates(&mut r, &ds);
    let inputs = MeasureInputs { ds: &ds, nuisance: &est.nuisance, scores: &est.scores };
    let rep = evaluate_policy(&inputs, &PolicyValues::constant(30, 0.0), EnvySecondTerm::AsPrinted);
    assert_eq!(
        (rep.w0, rep.w1, rep.prediction_disparity, rep.welfare_disparity, rep.incentive),
        (0.0, 0.0, 0.0, 0.0, 0.0)
    );
    assert!(rep.predictive_parity_skipped.is_some());
    let all = evaluate_policy(&inputs, &PolicyValues::constant(30, 1.0), EnvySecondTerm::AsPrinted);
    assert!(all.predictive_parity.is_some());
}

fn dataset_strategy() -> impl Strategy<Value = Dataset> {
    (8usize..40, 1usize..4).prop_flat_map(|(n, p)| {
        (
            proptest::collection::vec(-1e3f64..1e3, n),
            proptest::collection::vec(0u8..2, n),
            proptest::collection::vec(0u8..2, n),
            proptest::collection::vec(-1e3f64..1e3, n * p),
        )
            .prop_map(move |(y, mut d, mut s, x)| {
                for (i, (sv, dv)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                    s[i] = sv;
                    d[i] = dv;
                }
                Dataset::new(y, d, s, x, p).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip(ds in dataset_strategy()) {
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = Dataset::from_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn folds_partition_units(seed in any::<u64>(), k in 2usize..5) {
        let mut r = rng(seed);
        let ds = random_dataset(&mut r, 60, 1);
        prop_assume!((0..2u8).all(|s| (0..2u8).all(|d| ds.cell_size(s, d) >= k)));
        let folds = split_folds(&ds, k, seed).unwrap();
        prop_assert_eq!(folds.fold_of.len(), 60);
        prop_assert!(folds.fold_of.iter().all(|&f| f < k));
        let mut seen = vec![0usize; 60];
        for f in 0..k {
            for i in folds.members(f) {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        let sizes = folds.fold_sizes();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for s in 0..2u8 {
            for d in 0..2u8 {
                for f in 0..k {
                    prop_assert!(folds.members(f).any(|i| ds.s(i) == s && ds.d(i) == d));
                }
            }
        }
    }

    #[test]
    fn measures_are_linear_in_the_policy(seed in any::<u64>(), a in 0.0f64..1.0) {
        let mut r = rng(seed);
        let ds = random_dataset(&mut r, 24, 1);
        let est = random_estimates(&mut r, &ds);
        let inputs = MeasureInputs { ds: &ds, nuisance: &est.nuisance, scores: &est.scores };
        let p = random_policy(&mut r, 24);
        let q = random_policy(&mut r, 24);
        let mix = p.mix(&q, a);
        for kind in LINEAR_KINDS {
            let m = UnfairnessMeasure::new(kind);
            let form = m.linear_form(&inputs).unwrap();
            for pv in [&p, &q, &mix] {
                prop_assert!((form.evaluate(pv) - m.evaluate(&inputs, pv).unwrap()).abs() <= 1e-10);
            }
            let lhs = m.evaluate(&inputs, &mix).unwrap();
            let rhs = a * m.evaluate(&inputs, &p).unwrap() + (1.0 - a) * m.evaluate(&inputs, &q).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10, "{:?}: {} vs {}", kind, lhs, rhs);
        }
    }

    #[test]
    fn welfare_identities(seed in any::<u64>()) {
        let mut r = rng(seed);
        let ds = random_dataset(&mut r, 20, 2);
        let est = random_estimates(&mut r, &ds);
        let inputs = MeasureInputs { ds: &ds, nuisance: &est.nuisance, scores: &est.scores };
        let pv = random_policy(&mut r, 20);
        let (w0, w1) = empirical_welfare(&est.scores, &pv);
        let d = UnfairnessMeasure::new(MeasureKind::WelfareDisparity).evaluate(&inputs, &pv).unwrap();
        prop_assert!((d + w1 - w0).abs() <= 1e-12);
        let blind = PolicyValues::blind(pv.z0.clone());
        let i = UnfairnessMeasure::new(MeasureKind::IncentiveCompatibility).evaluate(&inputs, &blind).unwrap();
        prop_assert!(i.abs() <= 1e-12);
        let c = UnfairnessMeasure::new(MeasureKind::PredictionDisparity);
        prop_assert!(c.evaluate(&inputs, &PolicyValues::constant(20, r.random())).unwrap().abs() <= 1e-12);
    }
}
