//! Empirical unfairness measures and their linear-in-policy representations.
//!
//! Sign conventions: prediction disparity is group-0 minus group-1 treatment
//! rate, welfare disparity is `W_0 - W_1`. The `absolute` flag turns any
//! linear measure into its magnitude.
//!
//! The prediction-disparity sums evaluate an attribute-aware policy at each
//! unit's own attribute.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, PolicyValues};
use crate::nuisance::{NuisanceFit, ScoreMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    PredictionDisparity,
    WelfareDisparity,
    #[serde(rename = "incentive")]
    IncentiveCompatibility,
    #[serde(rename = "envy")]
    CounterfactualEnvy,
    PredictiveParity,
}

impl MeasureKind {
    pub fn name(&self) -> &'static str {
        match self {
            MeasureKind::PredictionDisparity => "prediction_disparity",
            MeasureKind::WelfareDisparity => "welfare_disparity",
            MeasureKind::IncentiveCompatibility => "incentive",
            MeasureKind::CounterfactualEnvy => "envy",
            MeasureKind::PredictiveParity => "predictive_parity",
        }
    }

    pub fn is_linear(&self) -> bool {
        !matches!(self, MeasureKind::PredictiveParity)
    }
}

/// Second sum of the envy estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvySecondTerm {
    /// `(1/n) sum_i [Gamma_{1,s,i} pi - Gamma_{0,s,i} (1 - pi)]`.
    #[default]
    AsPrinted,
    /// `(1/n) sum_i (Gamma_{1,s,i} - Gamma_{0,s,i}) pi`, i.e. `W_s`.
    WelfareForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnfairnessMeasure {
    pub kind: MeasureKind,
    pub absolute: bool,
    #[serde(default)]
    pub envy_second_term: EnvySecondTerm,
}

impl UnfairnessMeasure {
    pub fn new(kind: MeasureKind) -> Self {
        UnfairnessMeasure { kind, absolute: false, envy_second_term: EnvySecondTerm::AsPrinted }
    }

    pub fn label(&self) -> String {
        if self.absolute {
            format!("|{}|", self.kind.name())
        } else {
            self.kind.name().to_string()
        }
    }
}

pub fn absolute_wrap(measure: UnfairnessMeasure) -> UnfairnessMeasure {
    UnfairnessMeasure { absolute: true, ..measure }
}

/// Everything a measure may read.
#[derive(Debug, Clone, Copy)]
pub struct MeasureInputs<'a> {
    pub ds: &'a Dataset,
    pub nuisance: &'a NuisanceFit,
    pub scores: &'a ScoreMatrix,
}

/// `value(pv) = <c0, z0> + <c1, z1> + constant`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearForm {
    pub c0: Vec<f64>,
    pub c1: Vec<f64>,
    pub constant: f64,
}

impl LinearForm {
    pub fn zeros(n: usize) -> Self {
        LinearForm { c0: vec![0.0; n], c1: vec![0.0; n], constant: 0.0 }
    }

    pub fn evaluate(&self, pv: &PolicyValues) -> f64 {
        let a: f64 = self.c0.iter().zip(&pv.z0).map(|(c, z)| c * z).sum();
        let b: f64 = self.c1.iter().zip(&pv.z1).map(|(c, z)| c * z).sum();
        a + b + self.constant
    }

    pub fn scaled(mut self, k: f64) -> Self {
        self.c0.iter_mut().chain(self.c1.iter_mut()).for_each(|c| *c *= k);
        self.constant *= k;
        self
    }

    pub fn plus(mut self, other: &LinearForm) -> Self {
        self.c0.iter_mut().zip(&other.c0).for_each(|(a, b)| *a += b);
        self.c1.iter_mut().zip(&other.c1).for_each(|(a, b)| *a += b);
        self.constant += other.constant;
        self
    }

    /// Whether any unit's value at the attribute opposite to its own enters.
    pub fn uses_counterfactual(&self, attribute: &[u8]) -> bool {
        attribute.iter().enumerate().any(|(i, &s)| if s == 0 { self.c1[i] != 0.0 } else { self.c0[i] != 0.0 })
    }
}

/// `W_s` as a linear form.
pub fn welfare_form(sm: &ScoreMatrix, s: u8) -> LinearForm {
    let n = sm.n();
    let mut f = LinearForm::zeros(n);
    let target = if s == 0 { &mut f.c0 } else { &mut f.c1 };
    for (i, c) in target.iter_mut().enumerate() {
        *c = sm.delta(i, s) / n as f64;
    }
    f
}

pub fn prediction_disparity(pv: &PolicyValues, attribute: &[u8], p1: f64) -> f64 {
    let n = attribute.len() as f64;
    let own = pv.own(attribute);
    let g0: f64 = own.iter().zip(attribute).map(|(z, &s)| z * f64::from(1 - s)).sum();
    let g1: f64 = own.iter().zip(attribute).map(|(z, &s)| z * f64::from(s)).sum();
    g0 / (n * (1.0 - p1)) - g1 / (n * p1)
}

pub fn prediction_disparity_form(attribute: &[u8], p1: f64) -> LinearForm {
    let n = attribute.len();
    let mut f = LinearForm::zeros(n);
    for (i, &s) in attribute.iter().enumerate() {
        if s == 0 {
            f.c0[i] = 1.0 / (n as f64 * (1.0 - p1));
        } else {
            f.c1[i] = -1.0 / (n as f64 * p1);
        }
    }
    f
}

pub fn welfare_disparity(sm: &ScoreMatrix, pv: &PolicyValues) -> f64 {
    let (w0, w1) = crate::nuisance::empirical_welfare(sm, pv);
    w0 - w1
}

pub fn welfare_disparity_form(sm: &ScoreMatrix) -> LinearForm {
    welfare_form(sm, 0).plus(&welfare_form(sm, 1).scaled(-1.0))
}

/// `I_1 + I_0`, `I_s = (1/n) sum_i Delta_{s,i} pi(x_i, 1-s) - W_s`.
pub fn incentive_compatibility(sm: &ScoreMatrix, pv: &PolicyValues) -> f64 {
    let n = sm.n() as f64;
    let (w0, w1) = crate::nuisance::empirical_welfare(sm, pv);
    let swap1: f64 = (0..sm.n()).map(|i| sm.delta(i, 1) * pv.z0[i]).sum::<f64>() / n;
    let swap0: f64 = (0..sm.n()).map(|i| sm.delta(i, 0) * pv.z1[i]).sum::<f64>() / n;
    (swap1 - w1) + (swap0 - w0)
}

pub fn incentive_form(sm: &ScoreMatrix) -> LinearForm {
    let n = sm.n();
    let mut f = LinearForm::zeros(n);
    for i in 0..n {
        let (d0, d1) = (sm.delta(i, 0), sm.delta(i, 1));
        f.c0[i] = (d1 - d0) / n as f64;
        f.c1[i] = (d0 - d1) / n as f64;
    }
    f
}

/// `A_n(s, s')` for one ordered pair.
fn envy_pair(attribute: &[u8], nf: &NuisanceFit, sm: &ScoreMatrix, pv: &PolicyValues, s: u8, s_prime: u8, term: EnvySecondTerm) -> f64 {
    let n = attribute.len() as f64;
    let ps = sm.p_hat[s as usize];
    let mut first = 0.0;
    for (i, &si) in attribute.iter().enumerate() {
        if si == s {
            let z = pv.at(i, s);
            first += nf.m(i, 1, s_prime) * z + nf.m(i, 0, s_prime) * (1.0 - z);
        }
    }
    let mut second = 0.0;
    for i in 0..attribute.len() {
        let z = pv.at(i, s);
        let g1 = sm.gamma[i][1][s as usize];
        let g0 = sm.gamma[i][0][s as usize];
        second += match term {
            EnvySecondTerm::AsPrinted => g1 * z - g0 * (1.0 - z),
            EnvySecondTerm::WelfareForm => (g1 - g0) * z,
        };
    }
    first / (n * ps) - second / n
}

/// `E = A_n(1,0) + A_n(0,1)`.
pub fn counterfactual_envy(attribute: &[u8], nf: &NuisanceFit, sm: &ScoreMatrix, pv: &PolicyValues, term: EnvySecondTerm) -> f64 {
    envy_pair(attribute, nf, sm, pv, 1, 0, term) + envy_pair(attribute, nf, sm, pv, 0, 1, term)
}

pub fn envy_form(attribute: &[u8], nf: &NuisanceFit, sm: &ScoreMatrix, term: EnvySecondTerm) -> LinearForm {
    let n = attribute.len();
    let nf64 = n as f64;
    let mut f = LinearForm::zeros(n);
    for (s, s_prime) in [(1u8, 0u8), (0u8, 1u8)] {
        let ps = sm.p_hat[s as usize];
        for (i, &si) in attribute.iter().enumerate() {
            let mut coef = 0.0;
            if si == s {
                coef += (nf.m(i, 1, s_prime) - nf.m(i, 0, s_prime)) / (nf64 * ps);
                f.constant += nf.m(i, 0, s_prime) / (nf64 * ps);
            }
            let g1 = sm.gamma[i][1][s as usize];
            let g0 = sm.gamma[i][0][s as usize];
            match term {
                EnvySecondTerm::AsPrinted => {
                    coef -= (g1 + g0) / nf64;
                    f.constant += g0 / nf64;
                }
                EnvySecondTerm::WelfareForm => coef -= (g1 - g0) / nf64,
            }
            if s == 0 {
                f.c0[i] += coef;
            } else {
                f.c1[i] += coef;
            }
        }
    }
    f
}

/// Doubly-robust predictive parity for deterministic policies. When
/// `group_treat_prob` is absent the sample treatment rates are used.
pub fn predictive_parity(ds: &Dataset, nf: &NuisanceFit, pv: &PolicyValues, group_treat_prob: Option<[f64; 2]>) -> Result<f64> {
    let own = pv.own(ds.attributes());
    if own.iter().any(|&z| z != 0.0 && z != 1.0) {
        return Err(Error::NonDeterministicPolicy);
    }
    let n = ds.n() as f64;
    let p1 = ds.group_share(1);
    let p = [1.0 - p1, p1];
    let rates = match group_treat_prob {
        Some(r) => r,
        None => {
            let mut r = [0.0; 2];
            for (i, z) in own.iter().enumerate() {
                r[ds.s(i) as usize] += z;
            }
            [r[0] / (n * p[0]), r[1] / (n * p[1])]
        }
    };
    for s in 0..2u8 {
        if rates[s as usize] <= 0.0 {
            return Err(Error::ZeroTreatedGroup(s));
        }
    }
    let mut sums = [0.0; 2];
    for i in 0..ds.n() {
        let s = ds.s(i);
        let m1 = nf.m(i, 1, s);
        let score = (ds.y(i) - m1) * f64::from(ds.d(i)) / nf.propensity[i] + m1;
        sums[s as usize] += own[i] * score;
    }
    Ok((sums[1] / (n * p[1] * rates[1]) - sums[0] / (n * p[0] * rates[0])).abs())
}

impl UnfairnessMeasure {
    /// Value of the measure (its magnitude when `absolute`).
    pub fn evaluate(&self, inputs: &MeasureInputs<'_>, pv: &PolicyValues) -> Result<f64> {
        let v = match self.kind {
            MeasureKind::PredictionDisparity => prediction_disparity(pv, inputs.ds.attributes(), inputs.scores.p_hat[1]),
            MeasureKind::WelfareDisparity => welfare_disparity(inputs.scores, pv),
            MeasureKind::IncentiveCompatibility => incentive_compatibility(inputs.scores, pv),
            MeasureKind::CounterfactualEnvy => {
                counterfactual_envy(inputs.ds.attributes(), inputs.nuisance, inputs.scores, pv, self.envy_second_term)
            }
            MeasureKind::PredictiveParity => predictive_parity(inputs.ds, inputs.nuisance, pv, None)?,
        };
        Ok(if self.absolute { v.abs() } else { v })
    }

    /// Linear coefficients of the signed measure. The absolute value, if
    /// requested, is left to the optimizer (two-sided epigraph).
    pub fn linear_form(&self, inputs: &MeasureInputs<'_>) -> Result<LinearForm> {
        Ok(match self.kind {
            MeasureKind::PredictionDisparity => prediction_disparity_form(inputs.ds.attributes(), inputs.scores.p_hat[1]),
            MeasureKind::WelfareDisparity => welfare_disparity_form(inputs.scores),
            MeasureKind::IncentiveCompatibility => incentive_form(inputs.scores),
            MeasureKind::CounterfactualEnvy => envy_form(inputs.ds.attributes(), inputs.nuisance, inputs.scores, self.envy_second_term),
            MeasureKind::PredictiveParity => return Err(Error::NonLinearObjective(self.kind.name().into())),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nuisance::compute_scores;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fixture(n: usize, seed: u64) -> (Dataset, NuisanceFit, ScoreMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let d: Vec<u8> = (0..n).map(|i| ((i / 2) % 2) as u8).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..2.0)).collect();
        let ds = Dataset::new(y, d, s, x, 1).unwrap();
        let e = (0..n).map(|_| rng.random_range(0.2..0.8)).collect();
        let m = (0..n).map(|_| [[rng.random(), rng.random()], [rng.random(), rng.random()]]).collect();
        let nf = NuisanceFit::from_predictions(e, m, (0.01, 0.99)).unwrap();
        let sm = compute_scores(&ds, &nf).unwrap();
        (ds, nf, sm)
    }

    #[test]
    fn prediction_disparity_hand_value() {
        let pv = PolicyValues::blind(vec![1.0, 0.0, 1.0, 1.0]);
        let v = prediction_disparity(&pv, &[0, 0, 1, 1], 0.5);
        assert!((v - (-0.5)).abs() < 1e-15);
        assert_eq!(prediction_disparity(&PolicyValues::constant(4, 0.0), &[0, 0, 1, 1], 0.5), 0.0);
        assert!(prediction_disparity(&PolicyValues::constant(4, 1.0), &[0, 0, 1, 1], 0.5).abs() < 1e-15);
    }

    #[test]
    fn incentive_two_unit_hand_value() {
        // Unit 0 in group 0 with Delta 2, unit 1 in group 1 with Delta 3; n = 2.
        let sm = ScoreMatrix::new(vec![[[0.0, 0.0], [2.0, 0.0]], [[0.0, 0.0], [0.0, 3.0]]], [0.5, 0.5]);
        let pv = PolicyValues::new(vec![1.0, 0.0], vec![0.0, 1.0]);
        // I_1 = (3 * z0[1] - 3 * z1[1]) / 2 = -1.5; I_0 = (2 * z1[0] - 2 * z0[0]) / 2 = -1.
        assert!((incentive_compatibility(&sm, &pv) - (-2.5)).abs() < 1e-15);
        assert_eq!(incentive_compatibility(&sm, &PolicyValues::blind(vec![0.3, 0.9])), 0.0);
    }

    #[test]
    fn linear_forms_agree_with_definitions() {
        let (ds, nf, sm) = fixture(12, 5);
        let inputs = MeasureInputs { ds: &ds, nuisance: &nf, scores: &sm };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pv = PolicyValues::new((0..12).map(|_| rng.random()).collect(), (0..12).map(|_| rng.random()).collect());
        for kind in [MeasureKind::PredictionDisparity, MeasureKind::WelfareDisparity, MeasureKind::IncentiveCompatibility, MeasureKind::CounterfactualEnvy] {
            for term in [EnvySecondTerm::AsPrinted, EnvySecondTerm::WelfareForm] {
                let m = UnfairnessMeasure { kind, absolute: false, envy_second_term: term };
                let direct = m.evaluate(&inputs, &pv).unwrap();
                let lin = m.linear_form(&inputs).unwrap().evaluate(&pv);
                assert!((direct - lin).abs() < 1e-12, "{kind:?}: {direct} vs {lin}");
            }
        }
        assert!(UnfairnessMeasure::new(MeasureKind::PredictiveParity).linear_form(&inputs).is_err());
    }

    #[test]
    fn envy_all_treated_reduction() {
        let (ds, nf, sm) = fixture(10, 8);
        let pv = PolicyValues::constant(10, 1.0);
        for (s, sp) in [(1u8, 0u8), (0, 1)] {
            let a = envy_pair(ds.attributes(), &nf, &sm, &pv, s, sp, EnvySecondTerm::AsPrinted);
            let members: Vec<usize> = (0..10).filter(|&i| ds.s(i) == s).collect();
            let mean_m = members.iter().map(|&i| nf.m(i, 1, sp)).sum::<f64>() / members.len() as f64;
            let mean_g = (0..10).map(|i| sm.gamma[i][1][s as usize]).sum::<f64>() / 10.0;
            assert!((a - (mean_m - mean_g)).abs() < 1e-12);
        }
    }

    #[test]
    fn predictive_parity_cases() {
        let (ds, nf, _) = fixture(12, 2);
        let all = PolicyValues::constant(12, 1.0);
        let v = predictive_parity(&ds, &nf, &all, None).unwrap();
        let mut means = [0.0; 2];
        let mut counts = [0.0; 2];
        for i in 0..12 {
            let s = ds.s(i) as usize;
            let m1 = nf.m(i, 1, ds.s(i));
            means[s] += (ds.y(i) - m1) * f64::from(ds.d(i)) / nf.propensity[i] + m1;
            counts[s] += 1.0;
        }
        assert!((v - (means[1] / counts[1] - means[0] / counts[0]).abs()).abs() < 1e-12);

        let none_in_one = PolicyValues::blind((0..12).map(|i| f64::from(1 - ds.s(i))).collect());
        assert!(matches!(predictive_parity(&ds, &nf, &none_in_one, None), Err(Error::ZeroTreatedGroup(1))));
        assert!(matches!(predictive_parity(&ds, &nf, &PolicyValues::constant(12, 0.5), None), Err(Error::NonDeterministicPolicy)));
    }

    #[test]
    fn absolute_wrap_flips_sign_only() {
        let (ds, nf, sm) = fixture(8, 1);
        let inputs = MeasureInputs { ds: &ds, nuisance: &nf, scores: &sm };
        let pv = PolicyValues::blind(vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let m = UnfairnessMeasure::new(MeasureKind::PredictionDisparity);
        let signed = m.evaluate(&inputs, &pv).unwrap();
        assert_eq!(absolute_wrap(m).evaluate(&inputs, &pv).unwrap(), signed.abs());
        assert_eq!(absolute_wrap(m).evaluate(&inputs, &PolicyValues::constant(8, 0.0)).unwrap(), 0.0);
    }
}
