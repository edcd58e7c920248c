//! Brute-force references built from direct definitions. Nothing here calls
//! the estimator, frontier, solver or measure code it is used to check.

use crate::model::{Dataset, FinitePolicySet, PolicyValues};
use crate::nuisance::{NuisanceFit, ScoreMatrix};
use crate::unfairness::{EnvySecondTerm, MeasureKind, UnfairnessMeasure};

const SLACK_TOLERANCE: f64 = 1e-9;
const TIE: f64 = 1e-9;

fn z(pv: &PolicyValues, i: usize, s: usize) -> f64 {
    if s == 0 {
        pv.z0[i]
    } else {
        pv.z1[i]
    }
}

/// `(1/n) sum_i (Gamma_{1,s,i} - Gamma_{0,s,i}) pi(x_i, s)`, straight from the score array.
pub fn naive_welfare(sm: &ScoreMatrix, pv: &PolicyValues, s: usize) -> f64 {
    let n = sm.gamma.len();
    let mut total = 0.0;
    for i in 0..n {
        total += (sm.gamma[i][1][s] - sm.gamma[i][0][s]) * z(pv, i, s);
    }
    total / n as f64
}

/// Group-0 treatment rate minus group-1 treatment rate, each at the unit's own attribute.
pub fn naive_prediction_disparity(ds: &Dataset, pv: &PolicyValues) -> f64 {
    let mut rate = [0.0; 2];
    let mut count = [0.0; 2];
    for i in 0..ds.n() {
        let s = ds.s(i) as usize;
        rate[s] += z(pv, i, s);
        count[s] += 1.0;
    }
    rate[0] / count[0] - rate[1] / count[1]
}

pub fn naive_welfare_disparity(sm: &ScoreMatrix, pv: &PolicyValues) -> f64 {
    naive_welfare(sm, pv, 0) - naive_welfare(sm, pv, 1)
}

/// Welfare gain each group would obtain from the other group's treatment
/// rule, summed over the two groups.
pub fn naive_incentive(sm: &ScoreMatrix, pv: &PolicyValues) -> f64 {
    let n = sm.gamma.len();
    let mut total = 0.0;
    for s in 0..2 {
        let mut swapped = 0.0;
        for i in 0..n {
            swapped += (sm.gamma[i][1][s] - sm.gamma[i][0][s]) * z(pv, i, 1 - s);
        }
        total += swapped / n as f64 - naive_welfare(sm, pv, s);
    }
    total
}

/// Counterfactual envy summed over both ordered group pairs.
pub fn naive_envy(ds: &Dataset, nf: &NuisanceFit, sm: &ScoreMatrix, pv: &PolicyValues, term: EnvySecondTerm) -> f64 {
    let n = ds.n();
    let mut total = 0.0;
    for (s, other) in [(1usize, 0usize), (0, 1)] {
        let members: Vec<usize> = (0..n).filter(|&i| ds.s(i) as usize == s).collect();
        let share = members.len() as f64 / n as f64;
        let mut counterfactual = 0.0;
        for &i in &members {
            let zi = z(pv, i, s);
            let m = &nf.outcome[i];
            counterfactual += m[1][other] * zi + m[0][other] * (1.0 - zi);
        }
        let mut own = 0.0;
        for i in 0..n {
            let zi = z(pv, i, s);
            let (g1, g0) = (sm.gamma[i][1][s], sm.gamma[i][0][s]);
            own += match term {
                EnvySecondTerm::AsPrinted => g1 * zi - g0 * (1.0 - zi),
                EnvySecondTerm::WelfareForm => (g1 - g0) * zi,
            };
        }
        total += counterfactual / (n as f64 * share) - own / n as f64;
    }
    total
}

/// Any linear measure by its definition; predictive parity is not covered.
pub fn naive_measure(ds: &Dataset, nf: &NuisanceFit, sm: &ScoreMatrix, pv: &PolicyValues, measure: &UnfairnessMeasure) -> f64 {
    let v = match measure.kind {
        MeasureKind::PredictionDisparity => naive_prediction_disparity(ds, pv),
        MeasureKind::WelfareDisparity => naive_welfare_disparity(sm, pv),
        MeasureKind::IncentiveCompatibility => naive_incentive(sm, pv),
        MeasureKind::CounterfactualEnvy => naive_envy(ds, nf, sm, pv, measure.envy_second_term),
        MeasureKind::PredictiveParity => panic!("predictive parity has no naive oracle"),
    };
    if measure.absolute {
        v.abs()
    } else {
        v
    }
}

fn weighted(sm: &ScoreMatrix, pv: &PolicyValues, alpha: f64) -> f64 {
    alpha * naive_welfare(sm, pv, 1) + (1.0 - alpha) * naive_welfare(sm, pv, 0)
}

/// For each gridpoint, the members whose weighted welfare is within `slack`
/// of the best member's.
pub fn gridpoint_members(fs: &FinitePolicySet, sm: &ScoreMatrix, alphas: &[f64], slack: f64) -> Vec<Vec<usize>> {
    alphas
        .iter()
        .map(|&a| {
            let values: Vec<f64> = fs.policies.iter().map(|pv| weighted(sm, pv, a)).collect();
            let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (0..values.len()).filter(|&k| values[k] >= best - slack - SLACK_TOLERANCE).collect()
        })
        .collect()
}

/// Members attaining the gridpoint maximum for at least one gridpoint
/// (zero slack), in ascending order.
pub fn brute_force_frontier(fs: &FinitePolicySet, sm: &ScoreMatrix, alphas: &[f64]) -> Vec<usize> {
    brute_force_frontier_with_slack(fs, sm, alphas, 0.0)
}

pub fn brute_force_frontier_with_slack(fs: &FinitePolicySet, sm: &ScoreMatrix, alphas: &[f64], slack: f64) -> Vec<usize> {
    let mut all: Vec<usize> = gridpoint_members(fs, sm, alphas, slack).into_iter().flatten().collect();
    all.sort_unstable();
    all.dedup();
    all
}

#[derive(Debug, Clone, PartialEq)]
pub struct FairestMember {
    pub member: usize,
    pub alpha: f64,
    pub unfairness: f64,
}

/// Least unfair member of the approximate frontier. Each gridpoint proposes
/// its least unfair member; among near-equal proposals the largest alpha wins.
pub fn brute_force_fairest(
    fs: &FinitePolicySet,
    sm: &ScoreMatrix,
    alphas: &[f64],
    slack: f64,
    unfairness: impl Fn(&PolicyValues) -> f64,
) -> FairestMember {
    let values: Vec<f64> = fs.policies.iter().map(&unfairness).collect();
    let proposals: Vec<(usize, f64)> = gridpoint_members(fs, sm, alphas, slack)
        .into_iter()
        .map(|members| {
            let mut best = members[0];
            for &k in &members {
                if values[k] < values[best] {
                    best = k;
                }
            }
            (best, values[best])
        })
        .collect();
    let min = proposals.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let mut chosen = 0;
    for (j, p) in proposals.iter().enumerate() {
        if p.1 <= min + TIE {
            chosen = j;
        }
    }
    FairestMember { member: proposals[chosen].0, alpha: alphas[chosen], unfairness: proposals[chosen].1 }
}

/// Fairest frontier point of the two-group example with constant covariates,
/// group-specific effects `tau_s`, group-1 share `p1` and capacity `phi`:
/// returns `(beta0, beta1)` minimizing `|tau1 beta1 - tau0 beta0|` on the
/// segment `p0 beta0 + p1 beta1 = phi`, `beta_s in [0, 1]`.
pub fn two_group_fairest(tau0: f64, tau1: f64, p1: f64, phi: f64) -> (f64, f64) {
    let p0 = 1.0 - p1;
    let interior = (phi / p0) / (tau1 / tau0 + p1 / p0);
    let lo = ((phi - p0) / p1).max(0.0);
    let hi = (phi / p1).min(1.0);
    let beta1 = interior.clamp(lo, hi);
    let beta0 = ((phi - p1 * beta1) / p0).clamp(0.0, 1.0);
    (beta0, beta1)
}
