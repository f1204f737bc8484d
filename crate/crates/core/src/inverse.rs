//! Recovery of the initial state from final-time observations.
//!
//! The cost is
//!
//! ```text
//! J(N₀, V₀) = ½ (d_Nᵀ M d_N + d_Vᵀ M d_V) + (γ/2) (‖N₀‖²_h1 + ‖V₀‖²_h1)
//! ```
//!
//! with `d` the misfit between the final state of the θ-scheme and the
//! observations. Gradients come from the exact adjoint of the discrete
//! stepper: each step solves `A y − Δt θ F(y) = A x + Δt (1 − θ) F(x)`,
//! so with `J_y = A − Δt θ F′(y)` and `B_x = A + Δt (1 − θ) F′(x)` the
//! sensitivity of a step is `J_y⁻¹ B_x` and the reverse sweep applies
//! `B_xᵀ J_y⁻ᵀ` level by level.

use serde::Serialize;

use crate::banded::{BandedLu, BandedMatrix};
use crate::coefficients::CoefficientProfile;
use crate::error::{Error, Result};
use crate::forward::{ForwardSolver, SolverConfig};
use crate::lbfgs::{lbfgs_minimize_observed, Bounds, LbfgsOptions, OptimizationTrace};
use crate::mesh::{Mesh, StatePair};
use crate::model::check_state;

/// Everything needed to pose one reconstruction.
#[derive(Debug, Clone)]
pub struct InverseSpec {
    pub observed: StatePair,
    pub config: SolverConfig,
    pub mesh: Mesh,
    pub profile: CoefficientProfile,
    /// Starting point of the optimizer; zero fields when `None`.
    pub initial_guess: Option<StatePair>,
    /// Box on the stacked interior unknowns `(N₁, V₁, N₂, V₂, ...)`.
    pub bounds: Option<Bounds>,
    pub tikhonov_gamma: f64,
}

impl InverseSpec {
    pub fn new(
        observed: StatePair,
        config: SolverConfig,
        mesh: Mesh,
        profile: CoefficientProfile,
    ) -> Self {
        Self {
            observed,
            config,
            mesh,
            profile,
            initial_guess: None,
            bounds: None,
            tikhonov_gamma: 0.0,
        }
    }

    /// Same scalar bounds on every interior value of both fields.
    pub fn uniform_bounds(&self, lower: f64, upper: f64) -> Result<Bounds> {
        Bounds::uniform(2 * self.mesh.n_interior(), lower, upper)
    }
}

/// Compiled inverse problem: solver, packed observations and weights.
#[derive(Debug, Clone)]
pub struct InverseProblem {
    solver: ForwardSolver,
    observed: Vec<f64>,
    gamma: f64,
}

/// Tangent map of one step about a computed pair of levels.
#[derive(Debug, Clone)]
pub struct StepLinearization {
    /// `A − Δt θ F′(y)`, factored.
    implicit: BandedLu,
    /// `A + Δt (1 − θ) F′(x)`.
    explicit: BandedMatrix,
}

impl StepLinearization {
    /// `δy = J_y⁻¹ B_x δx` on packed vectors.
    pub fn apply(&self, dx: &[f64]) -> Vec<f64> {
        let mut out = self.explicit.matvec(dx);
        self.implicit.solve_in_place(&mut out);
        out
    }

    /// `B_xᵀ J_y⁻ᵀ q` on packed vectors.
    pub fn apply_transpose(&self, q: &[f64]) -> Vec<f64> {
        let mut w = q.to_vec();
        self.implicit.solve_transpose_in_place(&mut w);
        self.explicit.matvec_transpose(&w)
    }
}

impl InverseProblem {
    pub fn new(spec: &InverseSpec) -> Result<Self> {
        if !(spec.tikhonov_gamma >= 0.0 && spec.tikhonov_gamma.is_finite()) {
            return Err(Error::param("gamma", "must be non-negative"));
        }
        check_state(&spec.mesh, &spec.observed)?;
        if let Some(guess) = &spec.initial_guess {
            check_state(&spec.mesh, guess)?;
        }
        let solver = ForwardSolver::new(spec.mesh, &spec.profile, spec.config)?;
        Ok(Self {
            solver,
            observed: spec.observed.pack(),
            gamma: spec.tikhonov_gamma,
        })
    }

    pub fn solver(&self) -> &ForwardSolver {
        &self.solver
    }

    pub fn n_controls(&self) -> usize {
        self.observed.len()
    }

    /// Packed levels `x₀ … x_N` of the forward run from a packed start.
    fn forward_levels(&self, x0: &[f64]) -> Result<Vec<Vec<f64>>> {
        let model = self.solver.model();
        let dt = self.solver.config().dt;
        let mut levels = Vec::with_capacity(self.solver.config().n_steps + 1);
        levels.push(x0.to_vec());
        let mut fx = model.flux(x0);
        for k in 0..self.solver.config().n_steps {
            let (y, _) =
                self.solver
                    .step_packed(&levels[k], &fx, dt)
                    .map_err(|e| Error::StepFailed {
                        step: k + 1,
                        source: Box::new(e),
                    })?;
            fx = model.flux(&y);
            levels.push(y);
        }
        Ok(levels)
    }

    fn misfit_cost(&self, x0: &[f64], x_final: &[f64]) -> (f64, Vec<f64>) {
        let model = self.solver.model();
        let d: Vec<f64> = x_final
            .iter()
            .zip(&self.observed)
            .map(|(a, b)| a - b)
            .collect();
        let mut j = 0.5 * model.mass_norm_sq(&d);
        if self.gamma > 0.0 {
            j += 0.5 * self.gamma * model.bbm_operator().bilinear(x0, x0);
        }
        (j, d)
    }

    /// Cost of a packed initial state.
    pub fn cost_packed(&self, x0: &[f64]) -> Result<f64> {
        self.check_controls(x0)?;
        let levels = self.forward_levels(x0)?;
        Ok(self
            .misfit_cost(x0, levels.last().expect("initial level"))
            .0)
    }

    pub fn cost(&self, trial: &StatePair) -> Result<f64> {
        check_state(self.solver.mesh(), trial)?;
        self.cost_packed(&trial.pack())
    }

    /// Cost and its exact gradient with respect to the packed initial state.
    pub fn cost_and_gradient_packed(&self, x0: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_controls(x0)?;
        let levels = self.forward_levels(x0)?;
        let (j, d) = self.misfit_cost(x0, levels.last().expect("initial level"));
        let model = self.solver.model();
        let mut grad = model.mass().matvec(&d);
        for k in (0..levels.len() - 1).rev() {
            grad = self
                .linearize_levels(&levels[k], &levels[k + 1])?
                .apply_transpose(&grad);
        }
        if self.gamma > 0.0 {
            let a = model.bbm_operator().matvec(x0);
            for (g, v) in grad.iter_mut().zip(&a) {
                *g += self.gamma * v;
            }
        }
        Ok((j, grad))
    }

    /// Cost and gradient as nodal fields; boundary entries are zero.
    pub fn cost_and_gradient(&self, trial: &StatePair) -> Result<(f64, StatePair)> {
        check_state(self.solver.mesh(), trial)?;
        let (j, g) = self.cost_and_gradient_packed(&trial.pack())?;
        Ok((j, StatePair::unpack(&g)))
    }

    /// Tangent map of the step taken from `state`.
    pub fn linearize_step(&self, state: &StatePair) -> Result<StepLinearization> {
        check_state(self.solver.mesh(), state)?;
        let x = state.pack();
        let fx = self.solver.model().flux(&x);
        let (y, _) = self.solver.step_packed(&x, &fx, self.solver.config().dt)?;
        self.linearize_levels(&x, &y)
    }

    fn linearize_levels(&self, x: &[f64], y: &[f64]) -> Result<StepLinearization> {
        let model = self.solver.model();
        let cfg = self.solver.config();
        let a = model.bbm_operator();
        let implicit = a
            .add_scaled(-cfg.dt * cfg.theta, &model.flux_jacobian(y))
            .lu()?;
        let explicit = a.add_scaled(cfg.dt * (1.0 - cfg.theta), &model.flux_jacobian(x));
        Ok(StepLinearization { implicit, explicit })
    }

    fn check_controls(&self, x0: &[f64]) -> Result<()> {
        if x0.len() != self.observed.len() {
            return Err(Error::Dimension {
                expected: self.observed.len(),
                actual: x0.len(),
            });
        }
        Ok(())
    }
}

/// Cost of `trial` for `spec`.
pub fn cost(spec: &InverseSpec, trial: &StatePair) -> Result<f64> {
    InverseProblem::new(spec)?.cost(trial)
}

/// Adjoint gradient `(∂J/∂N₀, ∂J/∂V₀)` at `trial`.
pub fn adjoint_gradient(spec: &InverseSpec, trial: &StatePair) -> Result<StatePair> {
    Ok(InverseProblem::new(spec)?.cost_and_gradient(trial)?.1)
}

#[derive(Debug, Clone)]
pub struct ReconstructOptions {
    pub optimizer: LbfgsOptions,
    /// Iterations whose iterates are kept.
    pub snapshot_iters: Vec<usize>,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self {
            optimizer: LbfgsOptions::default(),
            snapshot_iters: vec![1, 2, 3, 4],
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IterateSnapshot {
    pub iter: usize,
    pub cost: f64,
    #[serde(skip)]
    pub state: StatePair,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub recovered: StatePair,
    pub trace: OptimizationTrace,
    /// Requested iterates in iteration order; iterations never reached are absent.
    pub snapshots: Vec<IterateSnapshot>,
}

/// Minimizes the cost over the interior values of both initial fields.
pub fn reconstruct(spec: &InverseSpec, options: &ReconstructOptions) -> Result<Reconstruction> {
    let problem = InverseProblem::new(spec)?;
    let n = spec.mesh.n_nodes();
    let x0 = spec
        .initial_guess
        .clone()
        .unwrap_or_else(|| StatePair::zeros(n))
        .pack();
    let mut snapshots = Vec::new();
    let (x, trace) = lbfgs_minimize_observed(
        |x| problem.cost_and_gradient_packed(x),
        x0,
        spec.bounds.as_ref(),
        &options.optimizer,
        |record, x| {
            if options.snapshot_iters.contains(&record.iter) {
                snapshots.push(IterateSnapshot {
                    iter: record.iter,
                    cost: record.cost,
                    state: StatePair::unpack(x),
                });
            }
        },
    )?;
    Ok(Reconstruction {
        recovered: StatePair::unpack(&x),
        trace,
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(alpha: f64) -> (InverseSpec, StatePair) {
        let mesh = Mesh::new(0.0, 10.0, 33).unwrap();
        let profile = CoefficientProfile::default_gauss_sine();
        let cfg = SolverConfig::new(alpha, 0.1, 0.05, 6);
        let truth = StatePair::from_fn(
            &mesh,
            |x| 0.5 * (-(x - 4.0) * (x - 4.0)).exp(),
            |x| 0.3 * (-(x - 6.0) * (x - 6.0)).exp(),
        );
        let observed = crate::forward::solve_forward(mesh, &profile, cfg, &truth)
            .unwrap()
            .final_state()
            .clone();
        (InverseSpec::new(observed, cfg, mesh, profile), truth)
    }

    #[test]
    fn truth_has_zero_cost_and_gradient() {
        let (spec, truth) = small_spec(0.1);
        let p = InverseProblem::new(&spec).unwrap();
        let (j, g) = p.cost_and_gradient(&truth).unwrap();
        assert!(j < 1e-24, "{j}");
        assert!(g
            .elevation
            .iter()
            .chain(&g.velocity)
            .all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn zero_trial_costs_half_the_observed_mass_norm() {
        let (spec, _) = small_spec(0.1);
        let p = InverseProblem::new(&spec).unwrap();
        let obs = spec.observed.pack();
        let expect = 0.5 * p.solver().model().mass_norm_sq(&obs);
        let j = p.cost(&StatePair::zeros(33)).unwrap();
        assert!((j - expect).abs() <= 1e-14 * expect);
    }

    #[test]
    fn gradient_vanishes_on_the_boundary() {
        let (spec, _) = small_spec(0.1);
        let trial = StatePair::from_fn(&spec.mesh, |x| (x * 0.3).sin() * 0.1, |_| 0.05);
        let g = adjoint_gradient(&spec, &trial).unwrap();
        assert_eq!((g.elevation[0], g.elevation[32]), (0.0, 0.0));
        assert_eq!((g.velocity[0], g.velocity[32]), (0.0, 0.0));
        assert!(g.max_abs_diff(&StatePair::zeros(33)) > 0.0);
    }

    #[test]
    fn tikhonov_term_adds_gamma_times_h1_gram() {
        let (mut spec, _) = small_spec(0.0);
        let trial = StatePair::from_fn(&spec.mesh, |x| (x * 0.5).cos() * 0.1, |x| x * 0.01);
        let base = InverseProblem::new(&spec).unwrap();
        let (j0, g0) = base.cost_and_gradient_packed(&trial.pack()).unwrap();
        spec.tikhonov_gamma = 0.25;
        let reg = InverseProblem::new(&spec).unwrap();
        let (j1, g1) = reg.cost_and_gradient_packed(&trial.pack()).unwrap();
        let x = trial.pack();
        let a = base.solver().model().bbm_operator();
        assert!((j1 - j0 - 0.125 * a.bilinear(&x, &x)).abs() < 1e-14);
        let ax = a.matvec(&x);
        for i in 0..x.len() {
            assert!((g1[i] - g0[i] - 0.25 * ax[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_mismatched_or_invalid_inputs() {
        let (mut spec, _) = small_spec(0.1);
        spec.tikhonov_gamma = -1.0;
        assert!(InverseProblem::new(&spec).is_err());
        spec.tikhonov_gamma = 0.0;
        spec.observed.elevation[0] = 1.0;
        assert!(InverseProblem::new(&spec).is_err());
    }
}
