use boussinesq::inverse::{InverseProblem, InverseSpec};
use boussinesq::{solve_forward, CoefficientProfile, Mesh, SolverConfig, StatePair};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gaussian(center: f64, amp: f64) -> impl Fn(f64) -> f64 {
    move |x| amp * (-(x - center) * (x - center)).exp()
}

fn random_packed(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn nonlinear_problem() -> (InverseProblem, StatePair) {
    let mesh = Mesh::new(0.0, 12.0, 64).unwrap();
    let profile = CoefficientProfile::default_gauss_sine();
    let cfg = SolverConfig::new(0.1, 0.1, 0.05, 10);
    let truth = StatePair::from_fn(&mesh, gaussian(5.0, 0.6), gaussian(7.0, 0.4));
    let observed = solve_forward(mesh, &profile, cfg, &truth)
        .unwrap()
        .final_state()
        .clone();
    let problem = InverseProblem::new(&InverseSpec::new(observed, cfg, mesh, profile)).unwrap();
    let trial = StatePair::from_fn(&mesh, gaussian(5.5, 0.4), gaussian(6.0, 0.2));
    (problem, trial)
}

#[test]
fn single_step_tangent_and_adjoint_are_transposes() {
    let (problem, trial) = nonlinear_problem();
    let lin = problem.linearize_step(&trial).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    let n = problem.n_controls();
    for _ in 0..5 {
        let p = random_packed(&mut rng, n);
        let q = random_packed(&mut rng, n);
        let lhs = dot(&lin.apply(&p), &q);
        let rhs = dot(&p, &lin.apply_transpose(&q));
        assert!(
            (lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()),
            "{lhs} vs {rhs}"
        );
    }
}

#[test]
fn gradient_matches_central_differences() {
    let (problem, trial) = nonlinear_problem();
    let x = trial.pack();
    let (_, grad) = problem.cost_and_gradient_packed(&x).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let p = random_packed(&mut rng, x.len());
        let exact = dot(&grad, &p);
        let best = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6]
            .iter()
            .map(|&eps| {
                let shift =
                    |s: f64| -> Vec<f64> { x.iter().zip(&p).map(|(a, b)| a + s * b).collect() };
                let fd = (problem.cost_packed(&shift(eps)).unwrap()
                    - problem.cost_packed(&shift(-eps)).unwrap())
                    / (2.0 * eps);
                (fd - exact).abs() / exact.abs()
            })
            .fold(f64::INFINITY, f64::min);
        assert!(best <= 1e-5, "relative error {best:e}");
    }
}

#[test]
fn cost_is_quadratic_near_the_truth() {
    let mesh = Mesh::new(0.0, 12.0, 64).unwrap();
    let profile = CoefficientProfile::default_gauss_sine();
    let cfg = SolverConfig::new(0.1, 0.1, 0.05, 10);
    let truth = StatePair::from_fn(&mesh, gaussian(5.0, 0.6), gaussian(7.0, 0.4));
    let observed = solve_forward(mesh, &profile, cfg, &truth)
        .unwrap()
        .final_state()
        .clone();
    let problem = InverseProblem::new(&InverseSpec::new(observed, cfg, mesh, profile)).unwrap();
    let phi = StatePair::from_fn(
        &mesh,
        |x| (x * 0.5).sin(),
        |x| (x * 0.25).cos() * x * (12.0 - x) / 36.0,
    );
    let x = truth.pack();
    let dir = phi.pack();
    let costs: Vec<f64> = [1e-2, 1e-3]
        .iter()
        .map(|e| {
            problem
                .cost_packed(
                    &x.iter()
                        .zip(&dir)
                        .map(|(a, b)| a + e * b)
                        .collect::<Vec<_>>(),
                )
                .unwrap()
        })
        .collect();
    let ratio = costs[0] / costs[1];
    assert!((ratio - 100.0).abs() < 1.0, "cost ratio {ratio}");
}

/// Dense interleaved `(A, D)` for constant unit coefficient and α = 0: the
/// flux is the centred difference `F_i = (u_{i−1} − u_{i+1}) / 2` of the
/// other field.
fn dense_linear_operators(
    m: usize,
    h: f64,
    beta: f64,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = 2 * m;
    let mut a = DMatrix::zeros(n, n);
    let mut mass = DMatrix::zeros(n, n);
    let mut d = DMatrix::zeros(n, n);
    for i in 0..m {
        for f in 0..2 {
            let r = 2 * i + f;
            mass[(r, r)] = 2.0 * h / 3.0;
            a[(r, r)] = 2.0 * h / 3.0 + beta / 6.0 * 2.0 / h;
            if i + 1 < m {
                mass[(r, r + 2)] = h / 6.0;
                mass[(r + 2, r)] = h / 6.0;
                a[(r, r + 2)] = h / 6.0 - beta / 6.0 / h;
                a[(r + 2, r)] = h / 6.0 - beta / 6.0 / h;
            }
            let other = 2 * i + 1 - f;
            if i >= 1 {
                d[(r, other - 2)] = 0.5;
            }
            if i + 1 < m {
                d[(r, other + 2)] = -0.5;
            }
        }
    }
    (a, mass, d)
}

#[test]
fn linear_gradient_matches_dense_normal_equations() {
    let n_nodes = 32;
    let mesh = Mesh::new(0.0, 8.0, n_nodes).unwrap();
    let (beta, dt, steps, theta) = (0.1, 0.04, 12, 0.5);
    let cfg = SolverConfig::new(0.0, beta, dt, steps);
    let truth = StatePair::from_fn(&mesh, gaussian(3.0, 1.0), gaussian(5.0, 0.5));
    let profile = CoefficientProfile::Constant(1.0);
    let observed = solve_forward(mesh, &profile, cfg, &truth)
        .unwrap()
        .final_state()
        .clone();
    let problem =
        InverseProblem::new(&InverseSpec::new(observed.clone(), cfg, mesh, profile)).unwrap();
    let trial = StatePair::from_fn(&mesh, gaussian(4.0, 0.3), |x| 0.1 * (x * 0.7).sin());
    let (_, grad) = problem.cost_and_gradient_packed(&trial.pack()).unwrap();

    let (a, mass, d) = dense_linear_operators(n_nodes - 2, mesh.h(), beta);
    let implicit = &a - &d * (dt * theta);
    let explicit = &a + &d * (dt * (1.0 - theta));
    let step = implicit.lu().solve(&explicit).unwrap();
    let mut prop = DMatrix::identity(a.nrows(), a.ncols());
    for _ in 0..steps {
        prop = &step * prop;
    }
    let x0 = DVector::from_vec(trial.pack());
    let obs = DVector::from_vec(observed.pack());
    let expect = prop.transpose() * &mass * (&prop * x0 - obs);
    let scale = expect.amax();
    let err = (DVector::from_vec(grad) - &expect).amax();
    assert!(
        err <= 1e-8 * scale.max(1.0),
        "gradient error {err:e} (scale {scale:e})"
    );
}
