//! Forward and inverse solvers for a 1-D Boussinesq system with variable
//! depth coefficient and BBM-type dispersion on a finite channel with
//! homogeneous Dirichlet data.

pub mod banded;
pub mod coefficients;
pub mod config;
pub mod energy;
pub mod error;
pub mod fem;
pub mod forward;
pub mod greens;
pub mod inverse;
pub mod io;
pub mod lbfgs;
pub mod mesh;
pub mod model;
pub mod newton;
pub mod runner;

pub use coefficients::{CoefficientProfile, QuadratureCache};
pub use error::{Error, Result};
pub use forward::{solve_forward, ForwardSolver, SolverConfig, Trajectory};
pub use mesh::{Mesh, StatePair};
pub use model::Discretization;
