//! The four jobs behind the command-line interface.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::coefficients::CoefficientProfile;
use crate::config::RunConfig;
use crate::energy::{energy_series, max_relative_drift, EnergyRecord};
use crate::error::{Error, Result};
use crate::fem;
use crate::forward::{solve_forward, ForwardSolver, SolverConfig, Trajectory};
use crate::greens::{
    estimate_contraction, picard_solve, ContractionEstimate, Kernel, PicardOptions,
};
use crate::inverse::{reconstruct, InverseSpec, ReconstructOptions};
use crate::io::{field_csv, read_state_csv, records_csv, state_csv, Manifest, Staging};
use crate::lbfgs::{Bounds, StopReason};
use crate::mesh::{Mesh, StatePair};

/// Environment variable that supplies the base for relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "BOUSSINESQ_OUTPUT_ROOT";

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_OPTIMIZER: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Job {
    Forward,
    Inverse,
    Oracle,
    Energy,
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::Forward => "forward",
            Job::Inverse => "inverse",
            Job::Oracle => "oracle",
            Job::Energy => "energy",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Replaces `output.directory` from the configuration.
    pub output: Option<PathBuf>,
    pub overwrite: bool,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub directory: PathBuf,
    pub manifest: Manifest,
    pub exit_code: i32,
}

/// Exit status for a failed run.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonFiniteObjective { .. } => EXIT_OPTIMIZER,
        e if e.is_solver_failure() => EXIT_SOLVER,
        _ => EXIT_CONFIG,
    }
}

/// Final output directory: the explicit override, or `output.directory`
/// resolved against `$BOUSSINESQ_OUTPUT_ROOT` when it is relative.
pub fn output_directory(cfg: &RunConfig, opts: &RunOptions) -> PathBuf {
    if let Some(dir) = &opts.output {
        return dir.clone();
    }
    let dir = &cfg.output.directory;
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if dir.is_relative() => Path::new(&root).join(dir),
        _ => dir.clone(),
    }
}

pub fn run(job: Job, cfg: &RunConfig, opts: &RunOptions) -> Result<RunOutcome> {
    let target = output_directory(cfg, opts);
    if target.exists() && !opts.overwrite {
        return Err(Error::Config(format!(
            "output directory {} already exists",
            target.display()
        )));
    }
    let mesh = cfg.mesh()?;
    let profile = cfg.profile()?;
    profile.validate_for(&mesh)?;
    let solver_cfg = cfg.solver_config();
    solver_cfg.validate()?;
    let initial = cfg.initial_state(&mesh)?;
    let config_json = serde_json::to_value(cfg).expect("serializable configuration");
    let mut staging = Staging::begin(&target, opts.overwrite)?;
    let (summary, exit_code) = match job {
        Job::Forward => (
            forward_job(
                &mut staging,
                mesh,
                &profile,
                solver_cfg,
                &initial,
                cfg.output.snapshot_stride,
                true,
            )?,
            0,
        ),
        Job::Energy => (
            forward_job(&mut staging, mesh, &profile, solver_cfg, &initial, 0, false)?,
            0,
        ),
        Job::Oracle => (
            oracle_job(&mut staging, cfg, mesh, &profile, solver_cfg, &initial)?,
            0,
        ),
        Job::Inverse => inverse_job(&mut staging, cfg, mesh, &profile, solver_cfg, &initial)?,
    };
    let manifest = staging.publish(job.name(), config_json, summary)?;
    Ok(RunOutcome {
        directory: target,
        manifest,
        exit_code,
    })
}

fn energy_rows(records: &[EnergyRecord]) -> Result<String> {
    records_csv(records)
}

fn forward_job(
    staging: &mut Staging,
    mesh: Mesh,
    profile: &CoefficientProfile,
    cfg: SolverConfig,
    initial: &StatePair,
    stride: usize,
    snapshots: bool,
) -> Result<serde_json::Value> {
    let solver = ForwardSolver::new(mesh, profile, cfg)?;
    let traj = staging.time("forward", || solver.solve(initial))?;
    let coeffs = solver.model().coefficients();
    let series = staging.time("energy", || energy_series(&traj, &mesh, coeffs, cfg.alpha));
    staging.write("energy.csv", energy_rows(&series)?.as_bytes())?;
    if snapshots {
        write_snapshots(staging, &mesh, &traj, stride)?;
    }
    let last = series.last().expect("initial record");
    let min_factor = series
        .iter()
        .map(|r| r.min_coeff_factor)
        .fold(f64::INFINITY, f64::min);
    if min_factor <= 0.0 {
        staging.warn(format!(
            "1 + alpha c^2 N reached {min_factor:e}; energy is not a norm here"
        ));
    }
    Ok(json!({
        "n_nodes": mesh.n_nodes(),
        "n_steps": cfg.n_steps,
        "dt": cfg.dt,
        "final_time": cfg.final_time(),
        "max_newton_iterations": traj.max_newton_iterations(),
        "initial_energy": series[0].energy,
        "final_relative_drift": last.relative_drift,
        "max_relative_drift": max_relative_drift(&series),
        "min_coeff_factor": min_factor,
        "min_c": last.min_c,
    }))
}

fn write_snapshots(
    staging: &mut Staging,
    mesh: &Mesh,
    traj: &Trajectory,
    stride: usize,
) -> Result<()> {
    let last = traj.snapshots.len() - 1;
    for (k, state) in traj.snapshots.iter().enumerate() {
        if k % stride == 0 || k == last {
            staging.write(
                &format!("snapshots/step_{k:06}.csv"),
                state_csv(mesh, state).as_bytes(),
            )?;
        }
    }
    staging.write("final.csv", state_csv(mesh, traj.final_state()).as_bytes())
}

/// One level of the finite-element versus integral-equation comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RefinementLevel {
    pub level: usize,
    pub n_nodes: usize,
    pub n_steps: usize,
    pub h: f64,
    pub dt: f64,
    /// `‖u_fem(T) − u_picard(T)‖_{L²×L²}`
    pub l2_difference: f64,
    pub picard_sweeps: usize,
    /// `log₂` of the ratio to the previous level's difference.
    pub observed_order: Option<f64>,
}

/// Solves with both the finite-element stepper and the Picard oracle on
/// `levels` meshes, halving `h` and `Δt` each time.
pub fn refinement_study(
    base: Mesh,
    profile: &CoefficientProfile,
    cfg: SolverConfig,
    initial: impl Fn(&Mesh) -> Result<StatePair>,
    levels: usize,
    picard: PicardOptions,
) -> Result<Vec<RefinementLevel>> {
    let kernel = Kernel::new(base.length(), cfg.beta)?;
    let mut out: Vec<RefinementLevel> = Vec::with_capacity(levels);
    let mut mesh = base;
    let mut level_cfg = cfg;
    for level in 0..levels {
        let init = initial(&mesh)?;
        let fem_final = solve_forward(mesh, profile, level_cfg, &init)?
            .final_state()
            .clone();
        let pic = picard_solve(
            &kernel,
            &mesh,
            profile,
            cfg.alpha,
            &init,
            level_cfg.final_time(),
            level_cfg.n_steps,
            picard,
        )?;
        let d = fem_final.difference(pic.trajectory.final_state());
        let l2 = fem::l2_pair_norm(&mesh, &d.elevation, &d.velocity)?;
        let observed_order = out.last().map(|prev| (prev.l2_difference / l2).log2());
        out.push(RefinementLevel {
            level,
            n_nodes: mesh.n_nodes(),
            n_steps: level_cfg.n_steps,
            h: mesh.h(),
            dt: level_cfg.dt,
            l2_difference: l2,
            picard_sweeps: pic.sweeps,
            observed_order,
        });
        mesh = mesh.refined();
        level_cfg.dt *= 0.5;
        level_cfg.n_steps *= 2;
    }
    Ok(out)
}

/// `‖N₀‖_{H¹} + ‖V₀‖_{H¹}` with the `β`-weighted norm.
pub fn data_norm(mesh: &Mesh, state: &StatePair, beta: f64) -> Result<f64> {
    Ok(fem::h1_norm(mesh, &state.elevation, beta)? + fem::h1_norm(mesh, &state.velocity, beta)?)
}

fn oracle_job(
    staging: &mut Staging,
    cfg: &RunConfig,
    mesh: Mesh,
    profile: &CoefficientProfile,
    solver_cfg: SolverConfig,
    initial: &StatePair,
) -> Result<serde_json::Value> {
    let opts = cfg.oracle.unwrap_or_default();
    let kernel = Kernel::new(mesh.length(), solver_cfg.beta)?;
    let report = kernel.identity_report(50);
    staging.write_json("kernel.json", &report)?;
    let estimate: ContractionEstimate = staging.time("contraction", || {
        estimate_contraction(
            &kernel,
            &mesh,
            profile,
            solver_cfg.alpha,
            opts.radius,
            data_norm(&mesh, initial, solver_cfg.beta)?,
        )
    })?;
    staging.write_json("contraction.json", &estimate)?;
    let horizon = solver_cfg.final_time();
    if horizon > estimate.t0 {
        staging.warn(format!(
            "final time {horizon} exceeds the estimated contraction horizon T0 = {:e}",
            estimate.t0
        ));
    }
    let picard = PicardOptions {
        max_sweeps: opts.max_sweeps,
        tol: opts.tol,
        horizon: Some(estimate.t0),
    };
    let init_spec = cfg.initial.clone();
    let levels = staging.time("refinement", || {
        refinement_study(
            mesh,
            profile,
            solver_cfg,
            |m| {
                // file-based data only exists on the configured mesh
                if init_spec.path.is_some() && m.n_nodes() != mesh.n_nodes() {
                    Err(Error::Config(
                        "oracle refinement needs analytic initial data".into(),
                    ))
                } else {
                    init_spec.state(m)
                }
            },
            opts.levels,
            picard,
        )
    })?;
    staging.write("oracle.csv", records_csv(&levels)?.as_bytes())?;
    let finest = levels.last().expect("at least two levels");
    Ok(json!({
        "kernel": report,
        "t0": estimate.t0,
        "final_time": horizon,
        "exceeds_horizon": horizon > estimate.t0,
        "finest_l2_difference": finest.l2_difference,
        "observed_orders": levels.iter().filter_map(|l| l.observed_order).collect::<Vec<_>>(),
    }))
}

#[derive(Serialize)]
struct TraceRow {
    iter: usize,
    cost: f64,
    grad_norm: f64,
    step_norm: f64,
}

fn relative_l2(mesh: &Mesh, approx: &[f64], exact: &[f64]) -> Result<f64> {
    let diff: Vec<f64> = approx.iter().zip(exact).map(|(a, b)| a - b).collect();
    let norm = fem::l2_norm(mesh, exact)?;
    Ok(fem::l2_norm(mesh, &diff)? / norm.max(f64::MIN_POSITIVE))
}

fn inverse_job(
    staging: &mut Staging,
    cfg: &RunConfig,
    mesh: Mesh,
    profile: &CoefficientProfile,
    solver_cfg: SolverConfig,
    initial: &StatePair,
) -> Result<(serde_json::Value, i32)> {
    let inv = cfg
        .inverse
        .as_ref()
        .ok_or_else(|| Error::Config("the inverse job needs an [inverse] section".into()))?;
    let guess = inv
        .guess
        .as_deref()
        .map(|p| read_state_csv(p, &mesh))
        .transpose()?;
    let observed = match &inv.observed {
        Some(path) => read_state_csv(path, &mesh)?,
        None => {
            let obs = staging.time("twin_forward", || {
                solve_forward(mesh, profile, solver_cfg, initial)
            })?;
            let obs = obs.final_state().clone();
            staging.write("truth.csv", state_csv(&mesh, initial).as_bytes())?;
            staging.write("observed.csv", state_csv(&mesh, &obs).as_bytes())?;
            obs
        }
    };
    let n_controls = 2 * mesh.n_interior();
    let bounds = match (inv.lower, inv.upper) {
        (None, None) => None,
        (l, u) => Some(Bounds::uniform(
            n_controls,
            l.unwrap_or(f64::NEG_INFINITY),
            u.unwrap_or(f64::INFINITY),
        )?),
    };
    let spec = InverseSpec {
        observed,
        config: solver_cfg,
        mesh,
        profile: profile.clone(),
        initial_guess: guess,
        bounds,
        tikhonov_gamma: inv.gamma,
    };
    let options = ReconstructOptions {
        optimizer: inv.optimizer(),
        snapshot_iters: inv.snapshot_iters.clone(),
    };
    let rec = staging.time("reconstruct", || reconstruct(&spec, &options))?;
    let rows: Vec<TraceRow> = rec
        .trace
        .records
        .iter()
        .map(|r| TraceRow {
            iter: r.iter,
            cost: r.cost,
            grad_norm: r.grad_norm,
            step_norm: r.step_norm,
        })
        .collect();
    staging.write("trace.csv", records_csv(&rows)?.as_bytes())?;
    for snap in &rec.snapshots {
        staging.write(
            &format!("iterates/N_iter_{:04}.csv", snap.iter),
            field_csv(&mesh, "N", &snap.state.elevation).as_bytes(),
        )?;
        staging.write(
            &format!("iterates/V_iter_{:04}.csv", snap.iter),
            field_csv(&mesh, "V", &snap.state.velocity).as_bytes(),
        )?;
    }
    staging.write("recovered.csv", state_csv(&mesh, &rec.recovered).as_bytes())?;
    let mut summary = json!({
        "reason": rec.trace.reason.as_str(),
        "converged": rec.trace.converged,
        "iterations": rec.trace.iterations(),
        "initial_cost": rec.trace.records[0].cost,
        "final_cost": rec.trace.final_cost(),
        "active_bounds": rec.trace.active_bounds.len(),
        "snapshot_iters": rec.snapshots.iter().map(|s| s.iter).collect::<Vec<_>>(),
    });
    if inv.twin {
        summary["relative_error_N"] = json!(relative_l2(
            &mesh,
            &rec.recovered.elevation,
            &initial.elevation
        )?);
        summary["relative_error_V"] = json!(relative_l2(
            &mesh,
            &rec.recovered.velocity,
            &initial.velocity
        )?);
    }
    let exit = match rec.trace.reason {
        StopReason::LineSearchFailed => {
            staging.warn("line search failed; recovered fields are the last accepted iterate");
            EXIT_OPTIMIZER
        }
        StopReason::MaxIterations => {
            staging.warn("optimizer stopped at the iteration limit");
            0
        }
        _ => 0,
    };
    Ok((summary, exit))
}
