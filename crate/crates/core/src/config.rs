//! TOML run configuration.
//!
//! ```toml
//! [domain]
//! a = -20.0
//! b = 40.0
//! n_nodes = 3000
//!
//! [time]
//! T = 8.0            # or dt = ..., never both
//! n_steps = 3000
//!
//! [physics]
//! alpha = 0.1
//! beta = 0.1
//!
//! [coefficient]
//! kind = "gauss_sine"
//!
//! [initial]
//! N = { kind = "gaussian", center = 18.0, width = 1.0, amplitude = 1.0 }
//! V = { kind = "gaussian", center = 18.0, width = 1.0, amplitude = 1.0 }
//!
//! [output]
//! directory = "out/forward"
//! snapshot_stride = 300
//! ```
//!
//! Relative paths inside a configuration are resolved against the
//! directory of the file it was loaded from.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientProfile;
use crate::error::{Error, Result};
use crate::forward::SolverConfig;
use crate::io::read_state_csv;
use crate::lbfgs::LbfgsOptions;
use crate::mesh::{Mesh, StatePair};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainSection,
    pub time: TimeSection,
    pub physics: PhysicsSection,
    pub coefficient: CoefficientSection,
    pub initial: InitialSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverse: Option<InverseSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSection>,
    #[serde(default)]
    pub solver: SolverSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub a: f64,
    pub b: f64,
    pub n_nodes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub final_time: Option<f64>,
    pub n_steps: usize,
}

impl TimeSection {
    pub fn dt(&self) -> Result<f64> {
        match (self.dt, self.final_time) {
            (Some(_), Some(_)) => Err(Error::Config(
                "time: set either `dt` or `T`, not both".into(),
            )),
            (None, None) => Err(Error::Config("time: one of `dt` or `T` is required".into())),
            (Some(dt), None) => Ok(dt),
            (None, Some(t)) => Ok(t / self.n_steps as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSection {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
}

fn default_theta() -> f64 {
    SolverConfig::DEFAULT_THETA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientSection {
    /// Parameters default to the reference smooth profile.
    GaussSine {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        base: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        amp_sin: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        wavenumber: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        amp_gauss: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        width: Option<f64>,
    },
    /// Breakpoints and values default to the reference layered profile.
    Step {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        breakpoints: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        values: Option<Vec<f64>>,
    },
    Constant {
        value: f64,
    },
    Tabulated {
        path: PathBuf,
    },
}

impl CoefficientSection {
    pub fn profile(&self) -> Result<CoefficientProfile> {
        match self {
            CoefficientSection::GaussSine {
                base,
                amp_sin,
                wavenumber,
                amp_gauss,
                center,
                width,
            } => {
                let CoefficientProfile::GaussSine {
                    base: b0,
                    amp_sin: s0,
                    wavenumber: k0,
                    amp_gauss: g0,
                    center: c0,
                    width: w0,
                } = CoefficientProfile::default_gauss_sine()
                else {
                    unreachable!()
                };
                let p = CoefficientProfile::GaussSine {
                    base: base.unwrap_or(b0),
                    amp_sin: amp_sin.unwrap_or(s0),
                    wavenumber: wavenumber.unwrap_or(k0),
                    amp_gauss: amp_gauss.unwrap_or(g0),
                    center: center.unwrap_or(c0),
                    width: width.unwrap_or(w0),
                };
                p.validate()?;
                Ok(p)
            }
            CoefficientSection::Step {
                breakpoints,
                values,
            } => match (breakpoints, values) {
                (None, None) => Ok(CoefficientProfile::default_step()),
                (Some(b), Some(v)) => CoefficientProfile::step(b.clone(), v.clone()),
                _ => Err(Error::Config(
                    "coefficient: `breakpoints` and `values` must be given together".into(),
                )),
            },
            CoefficientSection::Constant { value } => {
                let p = CoefficientProfile::Constant(*value);
                p.validate()?;
                Ok(p)
            }
            CoefficientSection::Tabulated { path } => CoefficientProfile::from_csv(path),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    /// `amplitude · exp(−((ξ − center)/width)²)`
    Gaussian {
        center: f64,
        width: f64,
        amplitude: f64,
    },
    Zero,
}

impl FieldSpec {
    fn eval(&self, x: f64) -> f64 {
        match *self {
            FieldSpec::Gaussian {
                center,
                width,
                amplitude,
            } => amplitude * (-((x - center) / width).powi(2)).exp(),
            FieldSpec::Zero => 0.0,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if let FieldSpec::Gaussian { width, .. } = self {
            if !(*width > 0.0) {
                return Err(Error::Config(format!(
                    "initial.{name}: width must be positive"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    /// `xi,N,V` CSV; excludes `N` and `V`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub elevation: Option<FieldSpec>,
    #[serde(rename = "V", default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<FieldSpec>,
}

impl InitialSection {
    pub fn state(&self, mesh: &Mesh) -> Result<StatePair> {
        match (&self.path, self.elevation, self.velocity) {
            (Some(path), None, None) => read_state_csv(path, mesh),
            (None, Some(n), Some(v)) => Ok(StatePair::from_fn(mesh, |x| n.eval(x), |x| v.eval(x))),
            _ => Err(Error::Config(
                "initial: give either `path` or both `N` and `V`".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InverseSection {
    /// Final-time observations as an `xi,N,V` CSV.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed: Option<PathBuf>,
    /// Synthesize observations by running the forward model from `[initial]`.
    #[serde(default)]
    pub twin: bool,
    /// Starting point; zero fields when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guess: Option<PathBuf>,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_gtol")]
    pub gtol: f64,
    #[serde(default = "default_memory")]
    pub memory: usize,
    #[serde(default = "default_snapshot_iters")]
    pub snapshot_iters: Vec<usize>,
}

fn default_max_iter() -> usize {
    LbfgsOptions::default().max_iter
}

fn default_gtol() -> f64 {
    LbfgsOptions::default().gtol
}

fn default_memory() -> usize {
    LbfgsOptions::default().memory
}

fn default_snapshot_iters() -> Vec<usize> {
    vec![1, 2, 3, 4]
}

impl InverseSection {
    pub fn optimizer(&self) -> LbfgsOptions {
        LbfgsOptions {
            memory: self.memory,
            max_iter: self.max_iter,
            gtol: self.gtol,
            ..LbfgsOptions::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    /// Number of meshes in the refinement ladder (each halves h and Δt).
    #[serde(default = "default_levels")]
    pub levels: usize,
    /// Ball radius used for the contraction estimate.
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
    #[serde(default = "default_sweep_tol")]
    pub tol: f64,
}

fn default_levels() -> usize {
    3
}

fn default_radius() -> f64 {
    5.0
}

fn default_max_sweeps() -> usize {
    100
}

fn default_sweep_tol() -> f64 {
    1e-12
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            levels: default_levels(),
            radius: default_radius(),
            max_sweeps: default_max_sweeps(),
            tol: default_sweep_tol(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_newton_max_iter")]
    pub newton_max_iter: usize,
}

fn default_newton_tol() -> f64 {
    SolverConfig::DEFAULT_NEWTON_TOL
}

fn default_newton_max_iter() -> usize {
    SolverConfig::DEFAULT_NEWTON_MAX_ITER
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            newton_tol: default_newton_tol(),
            newton_max_iter: default_newton_max_iter(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
    /// Write every `snapshot_stride`-th time level (the final level always).
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
}

fn default_stride() -> usize {
    100
}

/// Parses and validates a configuration. Relative paths are kept as given.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    /// Loads a file, resolving relative input paths against its directory
    /// and checking that every referenced input exists.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = parse_config(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.check_inputs_exist()?;
        Ok(cfg)
    }

    /// Normalized TOML: defaults filled in, same key set as the input schema.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.domain;
        if !(d.a < d.b) || !d.a.is_finite() || !d.b.is_finite() {
            return Err(Error::Config(format!(
                "domain: need a < b, got [{}, {}]",
                d.a, d.b
            )));
        }
        if d.n_nodes < 3 {
            return Err(Error::Config("domain.n_nodes must be at least 3".into()));
        }
        if self.time.n_steps == 0 {
            return Err(Error::Config("time.n_steps must be at least 1".into()));
        }
        let dt = self.time.dt()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config("time step must be positive".into()));
        }
        let p = &self.physics;
        if !(p.alpha >= 0.0 && p.alpha.is_finite()) {
            return Err(Error::Config("physics.alpha must be non-negative".into()));
        }
        if !(p.beta > 0.0 && p.beta.is_finite()) {
            return Err(Error::Config("physics.beta must be positive".into()));
        }
        self.solver_config()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        let init = &self.initial;
        match (
            init.path.is_some(),
            init.elevation.is_some(),
            init.velocity.is_some(),
        ) {
            (true, false, false) | (false, true, true) => {}
            _ => {
                return Err(Error::Config(
                    "initial: give either `path` or both `N` and `V`".into(),
                ))
            }
        }
        if let Some(n) = self.initial.elevation {
            n.validate("N")?;
        }
        if let Some(v) = self.initial.velocity {
            v.validate("V")?;
        }
        if let Some(inv) = &self.inverse {
            if inv.twin == inv.observed.is_some() {
                return Err(Error::Config(
                    "inverse: set exactly one of `observed` or `twin = true`".into(),
                ));
            }
            if !(inv.gamma >= 0.0) {
                return Err(Error::Config("inverse.gamma must be non-negative".into()));
            }
            if let (Some(l), Some(u)) = (inv.lower, inv.upper) {
                if !(l <= u) {
                    return Err(Error::Config(
                        "inverse: lower bound exceeds upper bound".into(),
                    ));
                }
            }
            inv.optimizer()
                .validate()
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        if let Some(o) = &self.oracle {
            if o.levels < 2 {
                return Err(Error::Config("oracle.levels must be at least 2".into()));
            }
            if !(o.radius > 0.0) || !(o.tol > 0.0) || o.max_sweeps == 0 {
                return Err(Error::Config(
                    "oracle: radius, tol and max_sweeps must be positive".into(),
                ));
            }
        }
        if self.output.snapshot_stride == 0 {
            return Err(Error::Config(
                "output.snapshot_stride must be at least 1".into(),
            ));
        }
        // tabulated profiles are checked when the file is read
        if !matches!(self.coefficient, CoefficientSection::Tabulated { .. }) {
            self.coefficient
                .profile()
                .map_err(|e| Error::Config(format!("coefficient: {e}")))?;
        }
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let CoefficientSection::Tabulated { path } = &mut self.coefficient {
            fix(path);
        }
        if let Some(p) = &mut self.initial.path {
            fix(p);
        }
        if let Some(inv) = &mut self.inverse {
            if let Some(p) = &mut inv.observed {
                fix(p);
            }
            if let Some(p) = &mut inv.guess {
                fix(p);
            }
        }
    }

    /// Fails if any referenced input file is missing.
    pub fn check_inputs_exist(&self) -> Result<()> {
        let mut paths: Vec<&Path> = Vec::new();
        if let CoefficientSection::Tabulated { path } = &self.coefficient {
            paths.push(path);
        }
        if let Some(p) = &self.initial.path {
            paths.push(p);
        }
        if let Some(inv) = &self.inverse {
            paths.extend(inv.observed.as_deref());
            paths.extend(inv.guess.as_deref());
        }
        for p in paths {
            if !p.is_file() {
                return Err(Error::Config(format!(
                    "input file {} does not exist",
                    p.display()
                )));
            }
        }
        Ok(())
    }

    pub fn mesh(&self) -> Result<Mesh> {
        Mesh::new(self.domain.a, self.domain.b, self.domain.n_nodes)
    }

    pub fn profile(&self) -> Result<CoefficientProfile> {
        self.coefficient.profile()
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            alpha: self.physics.alpha,
            beta: self.physics.beta,
            theta: self.physics.theta,
            dt: self.time.dt().unwrap_or(f64::NAN),
            n_steps: self.time.n_steps,
            newton_tol: self.solver.newton_tol,
            newton_max_iter: self.solver.newton_max_iter,
        }
    }

    pub fn initial_state(&self, mesh: &Mesh) -> Result<StatePair> {
        self.initial.state(mesh)
    }
}
