//! P1 finite-element assembly on a uniform mesh and the weighted norms
//! `‖f‖²_{H¹} = ‖f‖²_{L²} + (β/6)‖f′‖²_{L²}`.
//!
//! Matrices act on interior degrees of freedom only; the two Dirichlet
//! nodes are eliminated. Norms act on full nodal vectors.

use crate::banded::BandedMatrix;
use crate::error::{Error, Result};
use crate::mesh::{Mesh, GAUSS_WEIGHTS};

/// Consistent P1 mass matrix on interior nodes: `2h/3` on the diagonal and
/// `h/6` off it.
pub fn assemble_mass(mesh: &Mesh) -> Result<BandedMatrix> {
    let h = mesh.h();
    Ok(tridiagonal(mesh.n_interior(), 2.0 * h / 3.0, h / 6.0))
}

/// Unscaled P1 stiffness matrix on interior nodes: `2/h` and `-1/h`.
pub fn assemble_stiffness(mesh: &Mesh) -> Result<BandedMatrix> {
    let h = mesh.h();
    Ok(tridiagonal(mesh.n_interior(), 2.0 / h, -1.0 / h))
}

/// `M + (β/6) S`, the operator applied to time differences in the scheme.
pub fn assemble_bbm_operator(mesh: &Mesh, beta: f64) -> Result<BandedMatrix> {
    check_beta(beta)?;
    let m = assemble_mass(mesh)?;
    let s = assemble_stiffness(mesh)?;
    Ok(m.add_scaled(beta / 6.0, &s))
}

fn tridiagonal(order: usize, diag: f64, off: f64) -> BandedMatrix {
    let mut m = BandedMatrix::zeros(order, 1);
    for i in 0..order {
        m.set(i, i, diag);
        if i + 1 < order {
            m.set(i, i + 1, off);
            m.set(i + 1, i, off);
        }
    }
    m
}

/// Load vector `F_i = ∫ f(ξ) φ′_i(ξ) dξ` over interior nodes.
///
/// `integrand(e, q, xi)` supplies `f` at Gauss point `q` of element `e`,
/// located at physical coordinate `xi`. Elements are visited left to right,
/// so the result does not depend on evaluation order.
pub fn assemble_flux_load<F>(mesh: &Mesh, mut integrand: F) -> Vec<f64>
where
    F: FnMut(usize, usize, f64) -> f64,
{
    let n = mesh.n_nodes();
    let mut load = vec![0.0; n];
    for e in 0..mesh.n_elements() {
        let mut acc = 0.0;
        for q in 0..3 {
            acc += GAUSS_WEIGHTS[q] * integrand(e, q, mesh.gauss_point(e, q));
        }
        // h * (1/h) cancels: φ′ = ∓1/h on the element.
        load[e] -= acc;
        load[e + 1] += acc;
    }
    load[1..n - 1].to_vec()
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::param(
            "beta",
            format!("must be positive, got {beta}"),
        ));
    }
    Ok(())
}

/// `∫ f g dξ` for the P1 interpolants of two nodal vectors.
pub fn l2_inner(mesh: &Mesh, f: &[f64], g: &[f64]) -> Result<f64> {
    mesh.check_len(f)?;
    mesh.check_len(g)?;
    let h = mesh.h();
    let mut acc = 0.0;
    for e in 0..mesh.n_elements() {
        let (f0, f1, g0, g1) = (f[e], f[e + 1], g[e], g[e + 1]);
        acc += 2.0 * f0 * g0 + f0 * g1 + f1 * g0 + 2.0 * f1 * g1;
    }
    Ok(acc * h / 6.0)
}

pub fn l2_norm(mesh: &Mesh, f: &[f64]) -> Result<f64> {
    Ok(l2_inner(mesh, f, f)?.max(0.0).sqrt())
}

/// `‖f′‖_{L²}` of the P1 interpolant.
pub fn h1_seminorm(mesh: &Mesh, f: &[f64]) -> Result<f64> {
    mesh.check_len(f)?;
    let h = mesh.h();
    let sum: f64 = f.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    Ok((sum / h).sqrt())
}

/// `(‖f‖²_{L²} + (β/6)‖f′‖²_{L²})^{1/2}`.
pub fn h1_norm(mesh: &Mesh, f: &[f64], beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let l2 = l2_inner(mesh, f, f)?;
    let semi = h1_seminorm(mesh, f)?;
    Ok((l2 + beta / 6.0 * semi * semi).max(0.0).sqrt())
}

/// Combined norm `(‖N‖² + ‖V‖²)^{1/2}` of a state pair in `L²`.
pub fn l2_pair_norm(mesh: &Mesh, n: &[f64], v: &[f64]) -> Result<f64> {
    Ok((l2_inner(mesh, n, n)? + l2_inner(mesh, v, v)?).sqrt())
}

/// Combined norm `(‖N‖²_{H¹} + ‖V‖²_{H¹})^{1/2}`.
pub fn h1_pair_norm(mesh: &Mesh, n: &[f64], v: &[f64], beta: f64) -> Result<f64> {
    Ok((h1_norm(mesh, n, beta)?.powi(2) + h1_norm(mesh, v, beta)?.powi(2)).sqrt())
}
