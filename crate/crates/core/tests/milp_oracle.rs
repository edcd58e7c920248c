mod common;

use common::{assert_close, halfplane_labelings, max_score, random_binary_program, random_dataset, rng, DenseLp};
use fair_targeting::milp::{solve_lp, solve_milp, SolveStatus, SolverLimits};
use rand::Rng;

#[test]
fn lp_matches_vertex_enumeration() {
    let mut r = rng(101);
    for t in 0..5 {
        let lp = DenseLp::random(&mut r, 8, 6);
        let sol = solve_lp(&lp.model()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_close(sol.objective_value, lp.vertex_optimum(), 1e-7, &format!("instance {t}"));
        assert!(lp.model().max_violation(&sol.values) <= 1e-8);
    }
}

#[test]
fn binary_programs_match_enumeration() {
    let mut r = rng(202);
    for t in 0..12 {
        let k = r.random_range(4..=12);
        let rows = r.random_range(2..=5);
        let (model, best) = random_binary_program(&mut r, k, rows);
        let sol = solve_milp(&model, &SolverLimits::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal, "instance {t}");
        assert_close(sol.objective_value, best, 1e-9, &format!("instance {t} (k = {k})"));
    }
}

#[test]
fn max_score_matches_halfplane_enumeration() {
    let mut r = rng(303);
    for t in 0..10 {
        let ds = random_dataset(&mut r, 20, 2);
        let w: Vec<f64> = (0..20).map(|_| r.random_range(-1.0..1.0)).collect();
        let points: Vec<[f64; 2]> = (0..20).map(|i| [ds.x(i)[0], ds.x(i)[1]]).collect();
        let best = halfplane_labelings(&points)
            .iter()
            .map(|lab| lab.iter().zip(&w).filter(|(l, _)| **l).map(|(_, v)| v).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        let (solver, decoded) = max_score(&ds, &w);
        assert_close(solver, best, 1e-9, &format!("instance {t} solver"));
        assert_close(decoded, best, 1e-9, &format!("instance {t} decoded"));
    }
}

#[test]
fn labeling_count_matches_cover_formula() {
    let mut r = rng(404);
    let points: Vec<[f64; 2]> = (0..9).map(|_| [r.random::<f64>(), r.random::<f64>()]).collect();
    // Points in general position in the plane admit n^2 - n + 2 affine dichotomies.
    assert_eq!(halfplane_labelings(&points).len(), 9 * 9 - 9 + 2);
}
