//! Independent oracles for the kernel, the integral operators, the flux
//! assembly and the time stepper.

use std::f64::consts::PI;

use boussinesq::fem::{assemble_flux_load, h1_norm, l2_norm};
use boussinesq::greens::{
    contraction_horizon, estimate_contraction, phi1, picard_solve, Kernel, PicardMap, PicardOptions,
};
use boussinesq::{CoefficientProfile, ForwardSolver, Mesh, SolverConfig, StatePair};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gaussian(center: f64, amp: f64) -> impl Fn(f64) -> f64 {
    move |x| amp * (-(x - center) * (x - center)).exp()
}

/// Value at `xi` of the finite-difference solution of
/// `g − ε² g'' = δ_s`, `g(0) = g(L) = 0`, on `cells` uniform cells.
fn fd_green(length: f64, beta: f64, xi: f64, s: f64, cells: usize) -> f64 {
    let h = length / cells as f64;
    let e2 = beta / 6.0 / (h * h);
    let m = cells - 1;
    let (diag, off) = (1.0 + 2.0 * e2, -e2);
    let mut rhs = vec![0.0; m];
    rhs[(s / h).round() as usize - 1] = 1.0 / h;
    // Thomas algorithm
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    c[0] = off / diag;
    d[0] = rhs[0] / diag;
    for i in 1..m {
        let denom = diag - off * c[i - 1];
        c[i] = off / denom;
        d[i] = (rhs[i] - off * d[i - 1]) / denom;
    }
    for i in (0..m - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    d[(xi / h).round() as usize - 1]
}

#[test]
fn green_function_matches_finite_difference_solve() {
    let kernel = Kernel::new(10.0, 0.6).unwrap();
    let coarse = fd_green(10.0, 0.6, 3.0, 5.0, 4000);
    let fine = fd_green(10.0, 0.6, 3.0, 5.0, 8000);
    let extrapolated = (4.0 * fine - coarse) / 3.0;
    let g = kernel.g(3.0, 5.0).unwrap();
    assert!((g - extrapolated).abs() <= 1e-6, "{g} vs {extrapolated}");
}

#[test]
fn phi1_inverts_the_bbm_operator_on_a_sine() {
    let (length, beta) = (10.0, 0.6);
    let kernel = Kernel::new(length, beta).unwrap();
    let exact_factor = 1.0 / (1.0 + beta / 6.0 * (PI / length).powi(2));
    let error = |n: usize| {
        let mesh = Mesh::new(0.0, length, n).unwrap();
        let phi: Vec<f64> = mesh
            .nodes()
            .iter()
            .map(|&x| (PI * x / length).sin())
            .collect();
        let u = phi1(&kernel, &mesh, &phi).unwrap();
        u.iter()
            .zip(&phi)
            .map(|(a, b)| (a - exact_factor * b).abs())
            .fold(0.0, f64::max)
    };
    let (e1, e2, e3) = (error(41), error(81), error(161));
    assert!(e3 < 1e-4, "{e3}");
    for (a, b) in [(e1, e2), (e2, e3)] {
        let ratio = a / b;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }
}

#[test]
fn phi1_gain_stays_below_the_operator_norm_estimate() {
    let mesh = Mesh::new(0.0, 10.0, 121).unwrap();
    let beta = 0.1;
    let kernel = Kernel::new(10.0, beta).unwrap();
    let est = estimate_contraction(
        &kernel,
        &mesh,
        &CoefficientProfile::Constant(1.0),
        0.0,
        1.0,
        0.0,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let n = mesh.n_nodes();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let mut phi: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        phi[0] = 0.0;
        phi[n - 1] = 0.0;
        let u = phi1(&kernel, &mesh, &phi).unwrap();
        worst = worst.max(h1_norm(&mesh, &u, beta).unwrap() / l2_norm(&mesh, &phi).unwrap());
    }
    assert!(worst <= est.c1 * (1.0 + 1e-6), "{worst} > {}", est.c1);
    assert!(worst <= est.c1_analytic, "{worst} > {}", est.c1_analytic);
}

/// Adaptive Simpson rule on `[a, b]`.
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn step(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    step(
        f,
        a,
        b,
        fa,
        fm,
        fb,
        (b - a) / 6.0 * (fa + 4.0 * fm + fb),
        tol,
        40,
    )
}

#[test]
fn flux_load_matches_adaptive_quadrature() {
    let mesh = Mesh::new(-20.0, 40.0, 1201).unwrap();
    let profile = CoefficientProfile::default_gauss_sine();
    let n = gaussian(8.0, 1.0);
    let f = |x: f64| profile.eval(x).unwrap() * n(x);
    let load = assemble_flux_load(&mesh, |_, _, x| f(x));
    let h = mesh.h();
    for (k, &got) in load.iter().enumerate() {
        let i = k + 1;
        let (xl, xi, xr) = (mesh.node(i - 1), mesh.node(i), mesh.node(i + 1));
        let expected =
            simpson(&|x| f(x) / h, xl, xi, 1e-15) - simpson(&|x| f(x) / h, xi, xr, 1e-15);
        assert!(
            (got - expected).abs() <= 1e-10,
            "node {i}: {got} vs {expected}"
        );
    }
}

#[test]
fn linear_step_matches_dense_theta_solve() {
    let mesh = Mesh::new(0.0, 10.0, 41).unwrap();
    let (beta, dt, theta) = (0.1, 0.05, 0.5);
    let cfg = SolverConfig::new(0.0, beta, dt, 1);
    let solver = ForwardSolver::new(mesh, &CoefficientProfile::Constant(1.0), cfg).unwrap();
    let x = StatePair::from_fn(&mesh, gaussian(5.0, 1.0), gaussian(4.0, 0.5));
    let (y, _) = solver.step(&x).unwrap();

    let m = mesh.n_interior();
    let h = mesh.h();
    let a = DMatrix::from_fn(m, m, |i, j| match i.abs_diff(j) {
        0 => 2.0 * h / 3.0 + beta / 6.0 * 2.0 / h,
        1 => h / 6.0 - beta / 6.0 / h,
        _ => 0.0,
    });
    // D[i][j] = ∫ φ_j φ_i′
    let d = DMatrix::from_fn(m, m, |i, j| {
        if j == i + 1 {
            -0.5
        } else if i == j + 1 {
            0.5
        } else {
            0.0
        }
    });
    let mut lhs = DMatrix::zeros(2 * m, 2 * m);
    let mut rhs = DMatrix::zeros(2 * m, 2 * m);
    for (r, c) in [(0, 0), (m, m)] {
        lhs.view_mut((r, c), (m, m)).copy_from(&a);
        rhs.view_mut((r, c), (m, m)).copy_from(&a);
    }
    for (r, c) in [(0, m), (m, 0)] {
        lhs.view_mut((r, c), (m, m))
            .copy_from(&(&d * (-dt * theta)));
        rhs.view_mut((r, c), (m, m))
            .copy_from(&(&d * (dt * (1.0 - theta))));
    }
    let x_vec = DVector::from_iterator(
        2 * m,
        x.elevation[1..=m].iter().chain(&x.velocity[1..=m]).copied(),
    );
    let y_dense = lhs.lu().solve(&(rhs * x_vec)).unwrap();
    for i in 0..m {
        assert!((y.elevation[i + 1] - y_dense[i]).abs() <= 1e-12);
        assert!((y.velocity[i + 1] - y_dense[m + i]).abs() <= 1e-12);
    }
}

#[test]
fn forward_differences_shrink_under_joint_refinement() {
    let profile = CoefficientProfile::default_gauss_sine();
    let mut mesh = Mesh::new(-20.0, 40.0, 241).unwrap();
    let mut cfg = SolverConfig::new(0.1, 0.1, 0.05, 20);
    let mut finals = Vec::new();
    for _ in 0..3 {
        let init = StatePair::from_fn(&mesh, gaussian(18.0, 1.0), gaussian(18.0, 1.0));
        let traj = ForwardSolver::new(mesh, &profile, cfg)
            .unwrap()
            .solve(&init)
            .unwrap();
        finals.push(traj.final_state().clone());
        mesh = mesh.refined();
        cfg.dt *= 0.5;
        cfg.n_steps *= 2;
    }
    let d1 = finals[1].restrict(2).max_abs_diff(&finals[0]);
    let d2 = finals[2].restrict(2).max_abs_diff(&finals[1]);
    assert!(d1 / d2 >= 3.0, "{d1} / {d2}");
}

#[test]
fn picard_limit_is_a_fixed_point() {
    let mesh = Mesh::new(0.0, 10.0, 81).unwrap();
    let kernel = Kernel::new(10.0, 0.1).unwrap();
    let profile = CoefficientProfile::default_gauss_sine();
    let init = StatePair::from_fn(&mesh, gaussian(5.0, 0.5), gaussian(5.0, 0.3));
    let tol = 1e-10;
    let options = PicardOptions {
        tol,
        ..PicardOptions::default()
    };
    let sol = picard_solve(&kernel, &mesh, &profile, 0.1, &init, 0.05, 5, options).unwrap();
    let map = PicardMap::new(&kernel, &mesh, &profile, 0.1, &init, 0.05, 5).unwrap();
    let residual = map.residual(&sol.trajectory.snapshots);
    assert!(residual <= 10.0 * tol, "{residual}");
}

#[test]
fn contraction_horizon_shrinks_with_radius_and_scales_with_dispersion() {
    let mesh = Mesh::new(0.0, 10.0, 81).unwrap();
    let kernel = Kernel::new(10.0, 0.1).unwrap();
    let profile = CoefficientProfile::default_gauss_sine();
    let t2: Vec<f64> = [0.5, 1.0, 2.0, 4.0]
        .iter()
        .map(|&r| {
            estimate_contraction(&kernel, &mesh, &profile, 0.1, r, 0.1)
                .unwrap()
                .t2
        })
        .collect();
    assert!(t2.windows(2).all(|w| w[1] < w[0]), "{t2:?}");

    let base = contraction_horizon(10.0, 0.1, 3.0);
    assert!((contraction_horizon(10.0, 0.4, 3.0) / base - 2.0).abs() < 1e-12);
    assert!((contraction_horizon(40.0, 0.1, 3.0) / base - 0.5).abs() < 1e-12);
}

proptest! {
    #[test]
    fn sup_norm_is_bounded_by_the_h1_norm(
        inner in proptest::collection::vec(-3.0f64..3.0, 30),
        beta in 0.01f64..2.0,
    ) {
        let mesh = Mesh::new(-1.0, 7.0, 32).unwrap();
        let mut f = vec![0.0];
        f.extend(inner);
        f.push(0.0);
        let sup = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let bound = mesh.length().sqrt() / (beta / 6.0).sqrt() * h1_norm(&mesh, &f, beta).unwrap();
        prop_assert!(sup <= bound * (1.0 + 1e-12));
    }
}
