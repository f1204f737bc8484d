//! Semi-discrete Boussinesq operators on interleaved interior unknowns
//! `(N_1, V_1, N_2, V_2, ...)`.
//!
//! With `A = M + (β/6) S` the semi-discrete system reads `A N′ = F₁(N, V)`,
//! `A V′ = F₂(N, V)` where
//!
//! ```text
//! F₁(N,V)_i = ⟨(1 + α c² N) V, φ′_i⟩
//! F₂(N,V)_i = ⟨c N + ½ α c² V², φ′_i⟩
//! ```
//!
//! evaluated with 3-point Gauss quadrature per element.

use crate::banded::BandedMatrix;
use crate::coefficients::{CoefficientProfile, QuadratureCache};
use crate::error::{Error, Result};
use crate::fem;
use crate::mesh::{Mesh, StatePair, GAUSS_POINTS, GAUSS_WEIGHTS};

/// Half bandwidth of every interleaved operator.
pub const COUPLED_HALF_BANDWIDTH: usize = 3;

#[derive(Debug, Clone)]
pub struct Discretization {
    mesh: Mesh,
    coeffs: QuadratureCache,
    alpha: f64,
    beta: f64,
    /// `M + (β/6) S` acting on each field, interleaved.
    bbm_operator: BandedMatrix,
    /// Mass matrix acting on each field, interleaved.
    mass: BandedMatrix,
}

impl Discretization {
    pub fn new(mesh: Mesh, profile: &CoefficientProfile, alpha: f64, beta: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(Error::param(
                "alpha",
                format!("must be non-negative, got {alpha}"),
            ));
        }
        let coeffs = profile.sample_quadrature(&mesh)?;
        let a = fem::assemble_bbm_operator(&mesh, beta)?;
        let m = fem::assemble_mass(&mesh)?;
        Ok(Self {
            mesh,
            coeffs,
            alpha,
            beta,
            bbm_operator: interleave(&a),
            mass: interleave(&m),
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn coefficients(&self) -> &QuadratureCache {
        &self.coeffs
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Number of interleaved unknowns, `2 (n_nodes − 2)`.
    pub fn n_unknowns(&self) -> usize {
        2 * self.mesh.n_interior()
    }

    pub fn bbm_operator(&self) -> &BandedMatrix {
        &self.bbm_operator
    }

    pub fn mass(&self) -> &BandedMatrix {
        &self.mass
    }

    /// Interleaved flux vector `(F₁, F₂)` of a packed state.
    pub fn flux(&self, x: &[f64]) -> Vec<f64> {
        let m = self.mesh.n_interior();
        assert_eq!(x.len(), 2 * m);
        let mut out = vec![0.0; 2 * m];
        let alpha = self.alpha;
        for e in 0..self.mesh.n_elements() {
            let (nl, vl) = node_values(x, e);
            let (nr, vr) = node_values(x, e + 1);
            let mut f1 = 0.0;
            let mut f2 = 0.0;
            for q in 0..3 {
                let s = GAUSS_POINTS[q];
                let nq = nl * (1.0 - s) + nr * s;
                let vq = vl * (1.0 - s) + vr * s;
                let c = self.coeffs.c[e][q];
                let c2 = self.coeffs.c2[e][q];
                f1 += GAUSS_WEIGHTS[q] * (1.0 + alpha * c2 * nq) * vq;
                f2 += GAUSS_WEIGHTS[q] * (c * nq + 0.5 * alpha * c2 * vq * vq);
            }
            if e >= 1 {
                out[2 * (e - 1)] -= f1;
                out[2 * (e - 1) + 1] -= f2;
            }
            if e < m {
                out[2 * e] += f1;
                out[2 * e + 1] += f2;
            }
        }
        out
    }

    /// Derivative of [`Discretization::flux`] with respect to the packed state.
    pub fn flux_jacobian(&self, x: &[f64]) -> BandedMatrix {
        let m = self.mesh.n_interior();
        assert_eq!(x.len(), 2 * m);
        let mut jac = BandedMatrix::zeros(2 * m, COUPLED_HALF_BANDWIDTH);
        let alpha = self.alpha;
        for e in 0..self.mesh.n_elements() {
            let (nl, vl) = node_values(x, e);
            let (nr, vr) = node_values(x, e + 1);
            // local[row_field][col_field][col_node]: d(∫ f · w)/d(u_b)
            let mut local = [[[0.0f64; 2]; 2]; 2];
            for q in 0..3 {
                let s = GAUSS_POINTS[q];
                let phi = [1.0 - s, s];
                let nq = nl * (1.0 - s) + nr * s;
                let vq = vl * (1.0 - s) + vr * s;
                let c = self.coeffs.c[e][q];
                let c2 = self.coeffs.c2[e][q];
                let w = GAUSS_WEIGHTS[q];
                let df1_dn = alpha * c2 * vq;
                let df1_dv = 1.0 + alpha * c2 * nq;
                let df2_dn = c;
                let df2_dv = alpha * c2 * vq;
                for b in 0..2 {
                    local[0][0][b] += w * df1_dn * phi[b];
                    local[0][1][b] += w * df1_dv * phi[b];
                    local[1][0][b] += w * df2_dn * phi[b];
                    local[1][1][b] += w * df2_dv * phi[b];
                }
            }
            let nodes = [e, e + 1];
            for (a, &row_node) in nodes.iter().enumerate() {
                if row_node == 0 || row_node > m {
                    continue;
                }
                let sign = if a == 0 { -1.0 } else { 1.0 };
                for (b, &col_node) in nodes.iter().enumerate() {
                    if col_node == 0 || col_node > m {
                        continue;
                    }
                    for rf in 0..2 {
                        for cf in 0..2 {
                            jac.add(
                                2 * (row_node - 1) + rf,
                                2 * (col_node - 1) + cf,
                                sign * local[rf][cf][b],
                            );
                        }
                    }
                }
            }
        }
        jac
    }

    /// Mass-weighted squared misfit `dᵀ M d` of a packed difference.
    pub fn mass_norm_sq(&self, d: &[f64]) -> f64 {
        self.mass.bilinear(d, d)
    }
}

#[inline]
fn node_values(x: &[f64], node: usize) -> (f64, f64) {
    let m = x.len() / 2;
    if node == 0 || node > m {
        (0.0, 0.0)
    } else {
        (x[2 * (node - 1)], x[2 * (node - 1) + 1])
    }
}

/// Places a per-field operator on both interleaved fields.
fn interleave(a: &BandedMatrix) -> BandedMatrix {
    let m = a.order();
    let mut out = BandedMatrix::zeros(2 * m, COUPLED_HALF_BANDWIDTH);
    for i in 0..m {
        for j in i.saturating_sub(1)..=(i + 1).min(m - 1) {
            let v = a.get(i, j);
            out.set(2 * i, 2 * j, v);
            out.set(2 * i + 1, 2 * j + 1, v);
        }
    }
    out
}

/// Checks that a state is usable as solver input for `mesh`.
pub(crate) fn check_state(mesh: &Mesh, state: &StatePair) -> Result<()> {
    mesh.check_len(&state.elevation)?;
    mesh.check_len(&state.velocity)?;
    if !state.is_finite() {
        return Err(Error::Divergence("input state".into()));
    }
    if !state.satisfies_boundary() {
        return Err(Error::param(
            "state",
            "boundary values must be exactly zero",
        ));
    }
    Ok(())
}
