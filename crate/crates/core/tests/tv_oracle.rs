mod common;

use common::{rel_diff, rng};
use pwfwi::diff::{grad_adjoint, grad_forward, GradField, MultiField};
use pwfwi::prox::{eval_regularizer, shrink_isotropic, BoxBounds, RegularizerKind, RegularizerSpec};
use pwfwi::subproblem::{update_model, DataTerm, InnerState, Penalties};
use pwfwi::{ModelGrid, ScalarField};
use rand::Rng;

/// Blocky image plus noise.
fn noisy_blocks(grid: ModelGrid, seed: u64) -> ScalarField {
    let mut r = rng(seed);
    ScalarField::from_fn(grid, |ix, iz| {
        let block = if ix * 3 < grid.nx() { 1.0 } else if (ix + iz) % 7 < 3 { 2.0 } else { 1.5 };
        block + r.gen_range(-0.2..0.2)
    })
}

/// `argmin ‖∇m‖₂,₁ + γ/2‖m − y‖²` by Chambolle–Pock.
fn chambolle_pock(y: &ScalarField, gamma: f64, iterations: usize) -> ScalarField {
    let grid = y.grid;
    // ‖∇‖² ≤ 8 in 2D; τσ‖∇‖² < 1.
    let (tau, sigma) = (0.3, 0.3);
    let mut m = y.clone();
    let mut m_bar = y.clone();
    let mut p = GradField::zeros(grid);
    for _ in 0..iterations {
        let z = p.axpy(sigma, &grad_forward(&m_bar).unwrap());
        // Projection onto the unit balls via Moreau: z − shrink(z, 1).
        p = z.axpy(-1.0, &shrink_isotropic(&z, 1.0));
        let v = m.axpy(-tau, &grad_adjoint(&p).unwrap());
        let next = ScalarField::from_fn(grid, |ix, iz| {
            let i = grid.index(ix, iz);
            (v.values[i] + tau * gamma * y.values[i]) / (1.0 + tau * gamma)
        });
        m_bar = next.axpy(1.0, &next).axpy(-1.0, &m);
        m = next;
    }
    m
}

fn tv_objective(m: &ScalarField, y: &ScalarField, gamma: f64) -> f64 {
    let g = grad_forward(m).unwrap();
    let tv: f64 = (0..m.len()).map(|i| g.x.values[i].hypot(g.z.values[i])).sum();
    let misfit: f64 = m.values.iter().zip(&y.values).map(|(a, b)| (a - b) * (a - b)).sum();
    tv + 0.5 * gamma * misfit
}

fn admm_denoise(y: &ScalarField, gamma: f64, iterations: usize) -> ScalarField {
    let n = y.len();
    let data = DataTerm {
        weight: vec![1.0; n],
        rhs: y.values.clone(),
    };
    let spec = RegularizerSpec::new(RegularizerKind::Tv, 0.5).unwrap();
    let mut state = InnerState::new(y, spec, 1.0).unwrap();
    let pen = Penalties {
        gamma,
        zeta: 1.0,
        eta: 1.0,
        zeta2: 1.0,
        eps_rel: 0.0,
    };
    update_model(&data, &mut state, &BoxBounds::unbounded(n), &pen, iterations)
        .unwrap()
        .m
}

#[test]
fn tv_update_matches_chambolle_pock() {
    for (grid, gamma) in [
        (ModelGrid::profile(60, 1.0).unwrap(), 4.0),
        (ModelGrid::new(12, 10, 1.0).unwrap(), 6.0),
    ] {
        let y = noisy_blocks(grid, grid.len() as u64);
        let reference = chambolle_pock(&y, gamma, 200_000);
        let got = admm_denoise(&y, gamma, 20_000);
        let e = rel_diff(&got.values, &reference.values);
        assert!(e < 1e-6, "{}x{}: relative difference {e}", grid.nx(), grid.nz());
        let (fa, fb) = (tv_objective(&got, &y, gamma), tv_objective(&reference, &y, gamma));
        assert!((fa - fb).abs() <= 1e-9 * fb, "objectives {fa} vs {fb}");
    }
}

#[test]
fn tv_update_reduces_regularizer_and_keeps_mean() {
    let grid = ModelGrid::profile(80, 1.0).unwrap();
    let y = noisy_blocks(grid, 3);
    let spec = RegularizerSpec::new(RegularizerKind::Tv, 0.5).unwrap();
    let m = admm_denoise(&y, 2.0, 2_000);
    let before = eval_regularizer(&spec, &y, None).unwrap();
    let after = eval_regularizer(&spec, &m, None).unwrap();
    assert!(after < 0.5 * before, "{before} -> {after}");
    // The data term is the only non-shift-invariant part: means agree.
    assert!((m.mean() - y.mean()).abs() < 1e-8);
}
