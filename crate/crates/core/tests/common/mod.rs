//! Instance generators and exhaustive references shared by the integration
//! tests.
#![allow(dead_code)]

use fair_targeting::milp::{LpModel, Relation, Sense};
use fair_targeting::model::{Dataset, FinitePolicySet, PolicyValues};
use fair_targeting::nuisance::{compute_scores, Estimates, NuisanceFit};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random dataset with every `(s, d)` cell populated and `p` covariates.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Dataset {
    assert!(n >= 8);
    let mut s: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < 0.4)).collect();
    let mut d: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < 0.5)).collect();
    for (i, (sv, dv)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
        s[i] = sv;
        d[i] = dv;
    }
    let y = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let x = (0..n * p).map(|_| rng.random_range(-1.0..1.0)).collect();
    Dataset::new(y, d, s, x, p).unwrap()
}

/// Random nuisances with scores built from them.
pub fn random_estimates(rng: &mut ChaCha8Rng, ds: &Dataset) -> Estimates {
    let e = (0..ds.n()).map(|_| rng.random_range(0.2..0.8)).collect();
    let m = (0..ds.n())
        .map(|_| {
            let mut v = [[0.0; 2]; 2];
            for row in v.iter_mut() {
                for c in row.iter_mut() {
                    *c = rng.random_range(-1.0..1.0);
                }
            }
            v
        })
        .collect();
    let nuisance = NuisanceFit::from_predictions(e, m, (0.01, 0.99)).unwrap();
    let scores = compute_scores(ds, &nuisance).unwrap();
    Estimates { nuisance, scores }
}

/// Members with values in `{0, 1/2, 1}` (or `{0, 1}` when deterministic);
/// a share of members is attribute blind.
pub fn random_finite_set(rng: &mut ChaCha8Rng, n: usize, k: usize, deterministic: bool) -> FinitePolicySet {
    let draw = |rng: &mut ChaCha8Rng| -> f64 {
        if deterministic {
            f64::from(u8::from(rng.random::<bool>()))
        } else {
            f64::from(rng.random_range(0..3u8)) / 2.0
        }
    };
    let policies = (0..k)
        .map(|_| {
            let z0: Vec<f64> = (0..n).map(|_| draw(rng)).collect();
            if rng.random::<f64>() < 0.25 {
                PolicyValues::blind(z0)
            } else {
                let z1 = (0..n).map(|_| draw(rng)).collect();
                PolicyValues::new(z0, z1)
            }
        })
        .collect();
    FinitePolicySet::new(policies).unwrap()
}

/// Random `max c'x, Ax <= b, x in {0,1}^k` with `b >= 0` (so zero is feasible)
/// and its optimum by enumerating all `2^k` points.
pub fn random_binary_program(rng: &mut ChaCha8Rng, k: usize, rows: usize) -> (LpModel, f64) {
    let mut model = LpModel::new(Sense::Maximize);
    let vars: Vec<usize> = (0..k).map(|j| model.add_binary(format!("x{j}"))).collect();
    let c: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..10.0)).collect();
    let a: Vec<Vec<f64>> = (0..rows).map(|_| (0..k).map(|_| rng.random_range(-2.0..6.0)).collect()).collect();
    let b: Vec<f64> = a.iter().map(|r| r.iter().filter(|v| **v > 0.0).sum::<f64>() * rng.random_range(0.2..0.6)).collect();
    for (row, &rhs) in a.iter().zip(&b) {
        model.add_constraint(vars.iter().zip(row).map(|(&v, &w)| (v, w)).collect(), Relation::Le, rhs);
    }
    model.set_objective(Sense::Maximize, &c, 0.0);
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1 << k) {
        let x: Vec<f64> = (0..k).map(|j| f64::from((mask >> j) & 1)).collect();
        let feasible = a.iter().zip(&b).all(|(row, &rhs)| row.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>() <= rhs + 1e-12);
        if feasible {
            best = best.max(c.iter().zip(&x).map(|(w, v)| w * v).sum());
        }
    }
    (model, best)
}

/// Dense LP `max c'x, Ax <= b, 0 <= x <= u` and its optimum by enumerating
/// every basis of the constraint system and keeping the feasible vertices.
pub struct DenseLp {
    pub c: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DenseLp {
    pub fn random(rng: &mut ChaCha8Rng, vars: usize, rows: usize) -> Self {
        DenseLp {
            c: (0..vars).map(|_| rng.random_range(-1.0..3.0)).collect(),
            a: (0..rows).map(|_| (0..vars).map(|_| rng.random_range(-1.0..4.0)).collect()).collect(),
            b: (0..rows).map(|_| rng.random_range(1.0..10.0)).collect(),
            upper: (0..vars).map(|_| rng.random_range(0.5..4.0)).collect(),
        }
    }

    pub fn model(&self) -> LpModel {
        let mut m = LpModel::new(Sense::Maximize);
        let vars: Vec<usize> = self.upper.iter().enumerate().map(|(j, &u)| m.add_var(format!("x{j}"), 0.0, u, false)).collect();
        for (row, &rhs) in self.a.iter().zip(&self.b) {
            m.add_constraint(vars.iter().zip(row).map(|(&v, &w)| (v, w)).collect(), Relation::Le, rhs);
        }
        m.set_objective(Sense::Maximize, &self.c, 0.0);
        m
    }

    /// All inequalities as `g'x <= h`, bounds included.
    fn halfspaces(&self) -> Vec<(Vec<f64>, f64)> {
        let k = self.c.len();
        let mut h: Vec<(Vec<f64>, f64)> = self.a.iter().cloned().zip(self.b.iter().copied()).collect();
        for j in 0..k {
            let mut e = vec![0.0; k];
            e[j] = -1.0;
            h.push((e.clone(), 0.0));
            e[j] = 1.0;
            h.push((e, self.upper[j]));
        }
        h
    }

    pub fn vertex_optimum(&self) -> f64 {
        let k = self.c.len();
        let hs = self.halfspaces();
        let mut best = f64::NEG_INFINITY;
        let mut pick: Vec<usize> = (0..k).collect();
        loop {
            let g = DMatrix::from_fn(k, k, |r, c| hs[pick[r]].0[c]);
            let h = DVector::from_iterator(k, pick.iter().map(|&r| hs[r].1));
            if let Some(x) = g.lu().solve(&h) {
                let feasible = hs.iter().all(|(gr, hr)| gr.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>() <= hr + 1e-9);
                if feasible && x.iter().all(|v| v.is_finite()) {
                    best = best.max(self.c.iter().zip(x.iter()).map(|(a, b)| a * b).sum());
                }
            }
            if !next_combination(&mut pick, hs.len()) {
                break;
            }
        }
        best
    }
}

/// Advances `pick` to the next `k`-subset of `0..n` in lexicographic order.
pub fn next_combination(pick: &mut [usize], n: usize) -> bool {
    let k = pick.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if pick[i] < n - k + i {
            pick[i] += 1;
            for j in i + 1..k {
                pick[j] = pick[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Every labeling of planar points realizable as `1{b0 + b'x >= 0}`, from
/// lines through each pair of points with all four assignments of the pair,
/// plus the two constant labelings. Assumes points in general position.
pub fn halfplane_labelings(points: &[[f64; 2]]) -> Vec<Vec<bool>> {
    let n = points.len();
    let mut out = vec![vec![false; n], vec![true; n]];
    for i in 0..n {
        for j in i + 1..n {
            let (pi, pj) = (points[i], points[j]);
            let normal = [pj[1] - pi[1], pi[0] - pj[0]];
            let side = |q: [f64; 2]| normal[0] * (q[0] - pi[0]) + normal[1] * (q[1] - pi[1]);
            for sign in [1.0, -1.0] {
                let base: Vec<bool> = points.iter().map(|&q| sign * side(q) > 0.0).collect();
                for (li, lj) in [(false, false), (false, true), (true, false), (true, true)] {
                    let mut lab = base.clone();
                    lab[i] = li;
                    lab[j] = lj;
                    out.push(lab);
                }
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

pub fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!((a - b).abs() <= tol, "{what}: {a} vs {b} (tol {tol})");
}

/// As [`random_dataset`] with exactly `n1` units in group 1.
pub fn random_dataset_with_groups(rng: &mut ChaCha8Rng, n: usize, n1: usize, p: usize) -> Dataset {
    use rand::seq::SliceRandom;
    assert!(n1 >= 2 && n - n1 >= 2);
    let mut s: Vec<u8> = (0..n).map(|i| u8::from(i < n1)).collect();
    s.shuffle(rng);
    let mut d: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<bool>())).collect();
    for g in 0..2u8 {
        let members: Vec<usize> = (0..n).filter(|&i| s[i] == g).collect();
        d[members[0]] = 0;
        d[members[1]] = 1;
    }
    let y = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let x = (0..n * p).map(|_| rng.random_range(-1.0..1.0)).collect();
    Dataset::new(y, d, s, x, p).unwrap()
}

/// FPT configuration over an explicit finite class.
pub fn finite_config(
    set: FinitePolicySet,
    measure: fair_targeting::unfairness::UnfairnessMeasure,
    grid: Option<usize>,
    lambda: Option<f64>,
) -> fair_targeting::estimator::FptConfig {
    use fair_targeting::model::{PolicyClass, PolicyKind};
    let mut cfg = fair_targeting::estimator::FptConfig::new(PolicyClass::new(PolicyKind::Finite(set)), measure);
    cfg.frontier.grid = grid;
    cfg.frontier.lambda = lambda;
    cfg
}

/// The six optimizable measures exercised against brute force: prediction
/// disparity, welfare disparity and incentive compatibility, signed and absolute.
pub fn oracle_measures() -> Vec<fair_targeting::unfairness::UnfairnessMeasure> {
    use fair_targeting::unfairness::{MeasureKind, UnfairnessMeasure};
    let mut out = Vec::new();
    for kind in [MeasureKind::PredictionDisparity, MeasureKind::WelfareDisparity, MeasureKind::IncentiveCompatibility] {
        for absolute in [false, true] {
            out.push(UnfairnessMeasure { absolute, ..UnfairnessMeasure::new(kind) });
        }
    }
    out
}

/// Two groups of twelve, half treated in each, constant covariate and
/// outcome `tau_s * D`.
pub fn two_group_dataset(tau0: f64, tau1: f64) -> Dataset {
    let n = 24;
    let s: Vec<u8> = (0..n).map(|i| u8::from(i >= 12)).collect();
    let d: Vec<u8> = (0..n).map(|i| u8::from(i % 2 == 1)).collect();
    let y = (0..n).map(|i| if d[i] == 1 { if s[i] == 1 { tau1 } else { tau0 } } else { 0.0 }).collect();
    Dataset::new(y, d, s, vec![1.0; n], 1).unwrap()
}

/// Mean in-sample treatment rate of each group at its own attribute.
pub fn group_rates(ds: &Dataset, pv: &PolicyValues) -> [f64; 2] {
    let mut sum = [0.0; 2];
    let mut count = [0.0; 2];
    for i in 0..ds.n() {
        let s = ds.s(i) as usize;
        sum[s] += pv.at(i, ds.s(i));
        count[s] += 1.0;
    }
    [sum[0] / count[0], sum[1] / count[1]]
}

/// Max-score instance: maximize `sum_i w_i 1{b0 + x_i'b >= 0}` over
/// attribute-blind threshold rules, returning (solver value, decoded value).
pub fn max_score(ds: &Dataset, w: &[f64]) -> (f64, f64) {
    use fair_targeting::milp::{encode_policy_class, solve_milp, SolveStatus, SolverLimits};
    use fair_targeting::model::{PolicyClass, PolicyKind};
    use fair_targeting::unfairness::LinearForm;
    let class = PolicyClass::new(PolicyKind::DeterministicLinear).with_attribute(false).with_b_max(Some(1.0));
    let mut enc = encode_policy_class(&class, ds).unwrap();
    let mut form = LinearForm::zeros(ds.n());
    for (i, &wi) in w.iter().enumerate() {
        if ds.s(i) == 0 {
            form.c0[i] = wi;
        } else {
            form.c1[i] = wi;
        }
    }
    let (obj, constant) = enc.objective_from_form(&form).unwrap();
    enc.model.set_objective(Sense::Maximize, &obj, constant);
    let sol = solve_milp(&enc.model, &SolverLimits::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    let pv = enc.decode(ds, &sol.values);
    (sol.objective_value, form.evaluate(&pv))
}
