//! The functional `E = ½ ∫ [(1 + α c² N) V² + c N²] dξ`, conserved by the
//! continuous system, and its drift along discrete trajectories.

use serde::Serialize;

use crate::coefficients::QuadratureCache;
use crate::forward::Trajectory;
use crate::mesh::{Mesh, StatePair, GAUSS_WEIGHTS};

/// Denominator floor for the relative drift.
pub const DRIFT_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyRecord {
    pub t: f64,
    pub energy: f64,
    pub drift: f64,
    pub relative_drift: f64,
    /// `min (1 + α c² N)` over the Gauss points of this snapshot.
    pub min_coeff_factor: f64,
    pub min_c: f64,
}

/// Energy of one state, with P1 interpolants of `N` and `V` and the cached
/// coefficient values at the Gauss points.
pub fn energy(mesh: &Mesh, coeffs: &QuadratureCache, alpha: f64, state: &StatePair) -> f64 {
    energy_and_factor(mesh, coeffs, alpha, state).0
}

fn energy_and_factor(
    mesh: &Mesh,
    coeffs: &QuadratureCache,
    alpha: f64,
    state: &StatePair,
) -> (f64, f64) {
    let h = mesh.h();
    let mut total = 0.0;
    let mut min_factor = f64::INFINITY;
    for e in 0..mesh.n_elements() {
        let n = mesh.interpolate(&state.elevation, e);
        let v = mesh.interpolate(&state.velocity, e);
        let mut acc = 0.0;
        for q in 0..3 {
            let factor = 1.0 + alpha * coeffs.c2[e][q] * n[q];
            min_factor = min_factor.min(factor);
            acc += GAUSS_WEIGHTS[q] * (factor * v[q] * v[q] + coeffs.c[e][q] * n[q] * n[q]);
        }
        total += acc;
    }
    (0.5 * h * total, min_factor)
}

/// One record per snapshot; the drift is measured against the first.
pub fn energy_series(
    trajectory: &Trajectory,
    mesh: &Mesh,
    coeffs: &QuadratureCache,
    alpha: f64,
) -> Vec<EnergyRecord> {
    let min_c = coeffs.min_c();
    let mut out = Vec::with_capacity(trajectory.snapshots.len());
    let mut e0 = 0.0;
    for (k, (state, &t)) in trajectory
        .snapshots
        .iter()
        .zip(&trajectory.times)
        .enumerate()
    {
        let (e, factor) = energy_and_factor(mesh, coeffs, alpha, state);
        if k == 0 {
            e0 = e;
        }
        let drift = if k == 0 { 0.0 } else { e - e0 };
        out.push(EnergyRecord {
            t,
            energy: e,
            drift,
            relative_drift: drift / e0.abs().max(DRIFT_FLOOR),
            min_coeff_factor: factor,
            min_c,
        });
    }
    out
}

/// Largest `|relative_drift|` in a series.
pub fn max_relative_drift(series: &[EnergyRecord]) -> f64 {
    series
        .iter()
        .map(|r| r.relative_drift.abs())
        .fold(0.0, f64::max)
}
