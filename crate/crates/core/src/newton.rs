use crate::banded::BandedMatrix;
use crate::error::{Error, Result};

/// A square nonlinear system with a banded Jacobian.
pub trait NonlinearSystem {
    fn residual(&self, x: &[f64]) -> Vec<f64>;
    fn jacobian(&self, x: &[f64]) -> BandedMatrix;
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub solution: Vec<f64>,
    /// Number of Jacobian solves performed.
    pub iterations: usize,
    pub residual_norm: f64,
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| {
        if x.abs() > m || x.is_nan() {
            x.abs()
        } else {
            m
        }
    })
}

/// Newton's method stopping on the residual ∞-norm.
pub fn newton_solve<S: NonlinearSystem + ?Sized>(
    system: &S,
    initial: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<NewtonOutcome> {
    let mut x = initial;
    let mut r = system.residual(&x);
    let mut norm = inf_norm(&r);
    let mut iterations = 0;
    loop {
        if !norm.is_finite() {
            return Err(Error::Divergence(format!(
                "Newton residual after {iterations} iterations"
            )));
        }
        if norm <= tol {
            return Ok(NewtonOutcome {
                solution: x,
                iterations,
                residual_norm: norm,
            });
        }
        if iterations >= max_iter {
            return Err(Error::NewtonFailed {
                iterations,
                residual: norm,
            });
        }
        let lu = system.jacobian(&x).lu()?;
        lu.solve_in_place(&mut r);
        for (xi, dx) in x.iter_mut().zip(&r) {
            *xi -= dx;
        }
        iterations += 1;
        r = system.residual(&x);
        norm = inf_norm(&r);
    }
}
