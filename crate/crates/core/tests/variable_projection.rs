mod common;

use common::{dense_solve, dense_system, random_joint_system, rng};
use pwfwi::prox::RegularizerKind;
use pwfwi::subproblem::{solve_variable_projection, JointSystem};
use pwfwi::ModelGrid;

const TOL: f64 = 1e-8;

/// Relative errors of the stacked `(m₁, m₂)` and of the sum `m₁ + m₂`.
fn check(sys: &JointSystem) -> (f64, f64) {
    let n = sys.len();
    let (m1, m2) = solve_variable_projection(sys).unwrap();
    let (a, b) = dense_system(sys);
    let x = dense_solve(a, b);
    let sum: Vec<f64> = m1.iter().zip(&m2).map(|(a, b)| a + b).collect();
    let want_sum: Vec<f64> = (0..n).map(|i| x[i] + x[n + i]).collect();
    let got: Vec<f64> = m1.into_iter().chain(m2).collect();
    (common::rel_diff(&got, &x), common::rel_diff(&sum, &want_sum))
}

#[test]
fn matches_dense_block_solve() {
    let mut r = rng(2024);
    let grids = [
        ModelGrid::profile(8, 10.0).unwrap(),
        ModelGrid::profile(16, 10.0).unwrap(),
        ModelGrid::profile(64, 10.0).unwrap(),
        ModelGrid::new(4, 4, 10.0).unwrap(),
        ModelGrid::new(8, 8, 10.0).unwrap(),
    ];
    for k in 0..20 {
        let grid = grids[k % grids.len()];
        let kind = if k % 2 == 0 { RegularizerKind::Tt } else { RegularizerKind::Tgv };
        let sys = random_joint_system(grid, kind, k % 3 == 0, 1e-6, &mut r);
        let (e, _) = check(&sys);
        assert!(e < TOL, "instance {k} ({kind}, {} cells): relative error {e}", grid.len());
    }
}

/// With the default damping the split is only fixed up to `(a, −a)` for
/// affine `a` (condition ~1e10), but the model `m₁ + m₂` is well determined.
#[test]
fn model_sum_is_stable_at_default_damping() {
    let mut r = rng(99);
    for (k, nx) in [8, 16, 64].into_iter().enumerate() {
        let grid = ModelGrid::profile(nx, 10.0).unwrap();
        let kind = if k % 2 == 0 { RegularizerKind::Tt } else { RegularizerKind::Tgv };
        let sys = random_joint_system(grid, kind, false, 1e-8, &mut r);
        let (_, e_sum) = check(&sys);
        assert!(e_sum < TOL, "{kind}, {nx} cells: sum error {e_sum}");
    }
}

#[test]
fn solution_satisfies_block_equations() {
    let mut r = rng(7);
    let grid = ModelGrid::new(9, 7, 5.0).unwrap();
    for kind in [RegularizerKind::Tt, RegularizerKind::Tgv] {
        let sys = random_joint_system(grid, kind, true, 1e-6, &mut r);
        let (m1, m2) = solve_variable_projection(&sys).unwrap();
        assert!(sys.relative_residual(&m1, &m2) < 1e-10);
    }
}
