#![allow(dead_code)]

use pwfwi::diff::{GradField, Hess2Field};
use pwfwi::linalg::CsrMatrix;
use pwfwi::prox::{RegularizerKind, RegularizerSpec};
use pwfwi::subproblem::{assemble_joint, DataTerm, InnerState, JointSystem, Penalties};
use pwfwi::{ModelGrid, ScalarField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_field(grid: ModelGrid, rng: &mut ChaCha8Rng) -> ScalarField {
    ScalarField::from_fn(grid, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn dense(a: &CsrMatrix<f64>) -> Vec<Vec<f64>> {
    let mut d = vec![vec![0.0; a.cols()]; a.rows()];
    for (r, row) in d.iter_mut().enumerate() {
        for (c, v) in a.row(r) {
            row[c] += v;
        }
    }
    d
}

/// Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            if f != 0.0 {
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    x
}

/// Minimizer of a convex function on `[lo, hi]` by golden-section search.
pub fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..200 {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        }
        if hi - lo < 1e-14 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
    }
    0.5 * (lo + hi)
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

/// argmin_z (1−α)(x−z)² + α|z| by golden section over a bracket that holds it.
pub fn brute_soft(x: f64, alpha: f64) -> f64 {
    let f = |z: f64| (1.0 - alpha) * (x - z).powi(2) + alpha * z.abs();
    let r = x.abs() + 1.0;
    golden_min(f, -r, r)
}

/// inf_z (1−α)(x−z)² + α|z|.
pub fn brute_huber(x: f64, alpha: f64) -> f64 {
    let z = brute_soft(x, alpha);
    (1.0 - alpha) * (x - z).powi(2) + alpha * z.abs()
}

/// argmin_p t‖p‖ + ½‖z − p‖² over the plane, searched in polar form:
/// a dense angle sweep, golden refinement of the best angle, golden search
/// in the radius for each angle.
pub fn brute_shrink(z: [f64; 2], t: f64) -> [f64; 2] {
    let f = |p: [f64; 2]| t * p[0].hypot(p[1]) + 0.5 * ((z[0] - p[0]).powi(2) + (z[1] - p[1]).powi(2));
    let rmax = z[0].hypot(z[1]) + 1.0;
    let along = |theta: f64| {
        let (s, c) = theta.sin_cos();
        let r = golden_min(|r| f([r * c, r * s]), 0.0, rmax);
        ([r * c, r * s], f([r * c, r * s]))
    };
    let steps = 720;
    let width = std::f64::consts::TAU / steps as f64;
    let best = (0..steps)
        .map(|k| k as f64 * width)
        .min_by(|a, b| along(*a).1.total_cmp(&along(*b).1))
        .unwrap();
    let theta = golden_min(|th| along(th).1, best - width, best + width);
    let (p, fp) = along(theta);
    if f([0.0, 0.0]) <= fp {
        [0.0, 0.0]
    } else {
        p
    }
}

/// Joint TT/TGV system from a randomized inner state and data term.
pub fn random_joint_system(grid: ModelGrid, kind: RegularizerKind, mixed: bool, eps_rel: f64, r: &mut ChaCha8Rng) -> JointSystem {
    let n = grid.len();
    let spec = RegularizerSpec::new(kind, r.gen_range(0.1..0.9)).unwrap().with_mixed_hessian(mixed);
    let m = ScalarField::from_fn(grid, |_, _| r.gen_range(0.5..1.5));
    let mut state = InnerState::new(&m, spec, 1.0).unwrap();
    state.m1 = random_field(grid, r);
    state.p = GradField { x: random_field(grid, r), z: random_field(grid, r) };
    state.p_dual = GradField { x: random_field(grid, r), z: random_field(grid, r) };
    state.q = random_field(grid, r);
    state.q_dual = random_field(grid, r);
    if kind == RegularizerKind::Tgv {
        let hess = |r: &mut ChaCha8Rng| Hess2Field {
            xx: random_field(grid, r),
            zz: random_field(grid, r),
            xz: mixed.then(|| random_field(grid, r)),
        };
        state.r = Some(hess(r));
        state.r_dual = Some(hess(r));
    }
    // Some cells see no wavefield energy at all.
    let data = DataTerm {
        weight: (0..n).map(|i| if i % 5 == 3 { 0.0 } else { r.gen_range(0.0..3.0) }).collect(),
        rhs: (0..n).map(|_| r.gen_range(-1.0..1.0)).collect(),
    };
    let pen = Penalties {
        gamma: r.gen_range(0.5..5.0),
        zeta: r.gen_range(0.1..2.0),
        eta: r.gen_range(0.1..2.0),
        zeta2: r.gen_range(0.1..2.0),
        eps_rel,
    };
    assemble_joint(&data, &state, &pen).unwrap()
}

/// The full 2n × 2n block matrix and right-hand side.
pub fn dense_system(sys: &JointSystem) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = sys.len();
    let (g11, g22) = (dense(&sys.g11), dense(&sys.g22));
    let mut a = vec![vec![0.0; 2 * n]; 2 * n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = g11[i][j];
            a[n + i][n + j] = g22[i][j];
        }
        a[i][n + i] = sys.g12[i];
        a[n + i][i] = sys.g12[i];
    }
    (a, sys.h1.iter().chain(&sys.h2).copied().collect())
}

