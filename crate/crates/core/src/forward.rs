//! θ-scheme time stepping with Newton's method on the coupled banded system.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::banded::{BandedLu, BandedMatrix};
use crate::coefficients::CoefficientProfile;
use crate::error::{Error, Result};
use crate::mesh::{Mesh, StatePair};
use crate::model::{check_state, Discretization};
use crate::newton::{newton_solve, NewtonOutcome, NonlinearSystem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl SolverConfig {
    pub const DEFAULT_THETA: f64 = 0.5;
    pub const DEFAULT_NEWTON_TOL: f64 = 1e-12;
    pub const DEFAULT_NEWTON_MAX_ITER: usize = 25;

    pub fn new(alpha: f64, beta: f64, dt: f64, n_steps: usize) -> Self {
        Self {
            alpha,
            beta,
            theta: Self::DEFAULT_THETA,
            dt,
            n_steps,
            newton_tol: Self::DEFAULT_NEWTON_TOL,
            newton_max_iter: Self::DEFAULT_NEWTON_MAX_ITER,
        }
    }

    pub fn final_time(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::param(
                "alpha",
                format!("must be non-negative, got {}", self.alpha),
            ));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::param(
                "beta",
                format!("must be positive, got {}", self.beta),
            ));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::param(
                "theta",
                format!("must lie in (0, 1), got {}", self.theta),
            ));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::param(
                "dt",
                format!("must be positive, got {}", self.dt),
            ));
        }
        if self.n_steps == 0 {
            return Err(Error::param("n_steps", "must be at least 1"));
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::param("newton_tol", "must be positive"));
        }
        if self.newton_max_iter == 0 {
            return Err(Error::param("newton_max_iter", "must be at least 1"));
        }
        Ok(())
    }
}

/// Every time level of a forward run, kept in memory for the adjoint sweep.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<StatePair>,
    pub times: Vec<f64>,
    /// Newton iterations used by each step (empty for non-FEM trajectories).
    pub newton_iterations: Vec<usize>,
}

impl Trajectory {
    pub fn final_state(&self) -> &StatePair {
        self.snapshots
            .last()
            .expect("trajectory holds the initial state")
    }

    pub fn max_newton_iterations(&self) -> usize {
        self.newton_iterations.iter().copied().max().unwrap_or(0)
    }
}

/// Diagnostics for one accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub newton_iterations: usize,
    pub residual_norm: f64,
    pub used_fallback: bool,
}

/// Residual of one θ-step in the new level `y`:
/// `A (y − x) − Δt [θ F(y) + (1 − θ) F(x)]`.
pub(crate) struct ThetaStep<'a> {
    model: &'a Discretization,
    dt_theta: f64,
    /// `A x + Δt (1 − θ) F(x)`.
    fixed: Vec<f64>,
}

impl<'a> ThetaStep<'a> {
    pub(crate) fn new(
        model: &'a Discretization,
        theta: f64,
        dt: f64,
        old: &[f64],
        old_flux: &[f64],
    ) -> Self {
        let mut fixed = model.bbm_operator().matvec(old);
        for (f, g) in fixed.iter_mut().zip(old_flux) {
            *f += dt * (1.0 - theta) * g;
        }
        Self {
            model,
            dt_theta: dt * theta,
            fixed,
        }
    }
}

impl NonlinearSystem for ThetaStep<'_> {
    fn residual(&self, y: &[f64]) -> Vec<f64> {
        let mut r = self.model.bbm_operator().matvec(y);
        let f = self.model.flux(y);
        for i in 0..r.len() {
            r[i] -= self.dt_theta * f[i] + self.fixed[i];
        }
        r
    }

    fn jacobian(&self, y: &[f64]) -> BandedMatrix {
        self.model
            .bbm_operator()
            .add_scaled(-self.dt_theta, &self.model.flux_jacobian(y))
    }
}

/// Forward solver for one mesh, coefficient profile and configuration.
#[derive(Debug, Clone)]
pub struct ForwardSolver {
    model: Discretization,
    config: SolverConfig,
    bbm_lu: BandedLu,
}

impl ForwardSolver {
    pub fn new(mesh: Mesh, profile: &CoefficientProfile, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        let model = Discretization::new(mesh, profile, config.alpha, config.beta)?;
        Self::from_model(model, config)
    }

    pub fn from_model(model: Discretization, config: SolverConfig) -> Result<Self> {
        let bbm_lu = model.bbm_operator().lu()?;
        Ok(Self {
            model,
            config,
            bbm_lu,
        })
    }

    pub fn model(&self) -> &Discretization {
        &self.model
    }

    pub fn mesh(&self) -> &Mesh {
        self.model.mesh()
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// Advances `state` by one step of size `config.dt`.
    pub fn step(&self, state: &StatePair) -> Result<(StatePair, StepReport)> {
        self.step_with_dt(state, self.config.dt)
    }

    /// One step with an arbitrary (possibly negative) step size.
    pub fn step_with_dt(&self, state: &StatePair, dt: f64) -> Result<(StatePair, StepReport)> {
        check_state(self.mesh(), state)?;
        let x = state.pack();
        let fx = self.model.flux(&x);
        let (y, report) = self.step_packed(&x, &fx, dt)?;
        Ok((StatePair::unpack(&y), report))
    }

    pub(crate) fn step_packed(
        &self,
        x: &[f64],
        fx: &[f64],
        dt: f64,
    ) -> Result<(Vec<f64>, StepReport)> {
        let cfg = &self.config;
        let system = ThetaStep::new(&self.model, cfg.theta, dt, x, fx);
        let first = newton_solve(&system, x.to_vec(), cfg.newton_tol, cfg.newton_max_iter);
        let (outcome, used_fallback) = match first {
            Ok(out) => (out, false),
            Err(
                err @ (Error::NewtonFailed { .. }
                | Error::Divergence(_)
                | Error::SingularMatrix { .. }),
            ) => {
                debug!("Newton failed ({err}); retrying after Picard pre-iterations");
                let guess = self.picard_guess(x, fx, dt, 2);
                match newton_solve(&system, guess, cfg.newton_tol, cfg.newton_max_iter) {
                    Ok(out) => (out, true),
                    Err(_) => return Err(err),
                }
            }
            Err(err) => return Err(err),
        };
        let NewtonOutcome {
            solution,
            iterations,
            residual_norm,
        } = outcome;
        if solution.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence("step produced non-finite state".into()));
        }
        Ok((
            solution,
            StepReport {
                newton_iterations: iterations,
                residual_norm,
                used_fallback,
            },
        ))
    }

    /// Fixed-point sweeps `y ← x + A⁻¹ Δt [θ F(y) + (1 − θ) F(x)]`.
    fn picard_guess(&self, x: &[f64], fx: &[f64], dt: f64, sweeps: usize) -> Vec<f64> {
        let theta = self.config.theta;
        let mut y = x.to_vec();
        for _ in 0..sweeps {
            let fy = self.model.flux(&y);
            let mut incr: Vec<f64> = fy
                .iter()
                .zip(fx)
                .map(|(a, b)| dt * (theta * a + (1.0 - theta) * b))
                .collect();
            self.bbm_lu.solve_in_place(&mut incr);
            y = x.iter().zip(&incr).map(|(a, b)| a + b).collect();
        }
        y
    }

    /// Runs all `n_steps` steps from `initial`, keeping every level.
    pub fn solve(&self, initial: &StatePair) -> Result<Trajectory> {
        check_state(self.mesh(), initial)?;
        let n = self.config.n_steps;
        let dt = self.config.dt;
        let mut snapshots = Vec::with_capacity(n + 1);
        let mut times = Vec::with_capacity(n + 1);
        let mut iters = Vec::with_capacity(n);
        snapshots.push(initial.clone());
        times.push(0.0);
        let mut x = initial.pack();
        let mut fx = self.model.flux(&x);
        for k in 0..n {
            let (y, report) = self
                .step_packed(&x, &fx, dt)
                .map_err(|e| Error::StepFailed {
                    step: k + 1,
                    source: Box::new(e),
                })?;
            iters.push(report.newton_iterations);
            fx = self.model.flux(&y);
            snapshots.push(StatePair::unpack(&y));
            times.push((k + 1) as f64 * dt);
            x = y;
        }
        Ok(Trajectory {
            snapshots,
            times,
            newton_iterations: iters,
        })
    }
}

/// Convenience wrapper: build a solver and run it.
pub fn solve_forward(
    mesh: Mesh,
    profile: &CoefficientProfile,
    config: SolverConfig,
    initial: &StatePair,
) -> Result<Trajectory> {
    ForwardSolver::new(mesh, profile, config)?.solve(initial)
}
