//! Green's-function reformulation of the system on `[0, L]`.
//!
//! `G` inverts `P = I − (β/6) ∂²_ξ` with homogeneous Dirichlet data and
//! `K = ∂G/∂s`. Integrating the system in time gives
//!
//! ```text
//! N(ξ,t) = N₀(ξ) + ∫₀ᵗ ∫₀ᴸ K(ξ,s) (1 + α c² N) V ds dτ
//! V(ξ,t) = V₀(ξ) + ∫₀ᵗ ∫₀ᴸ K(ξ,s) [c N + ½ α c² V²] ds dτ
//! ```
//!
//! which [`picard_solve`] iterates to a fixed point. This path shares no
//! code with the finite-element stepper beyond the mesh, norms and the
//! cached coefficient values, so it can serve as an independent check.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::banded::BandedMatrix;
use crate::coefficients::{CoefficientProfile, QuadratureCache};
use crate::error::{Error, Result};
use crate::fem;
use crate::forward::Trajectory;
use crate::mesh::{Mesh, StatePair, GAUSS_POINTS, GAUSS_WEIGHTS};

/// Above this value of `L/√(β/6)` the hyperbolic ratios are evaluated in
/// exponentially scaled form.
const SCALED_THRESHOLD: f64 = 30.0;

/// Which one-sided limit of `K(ξ, s)` to take at `s = ξ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `s → ξ⁻`
    Below,
    /// `s → ξ⁺`
    Above,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    length: f64,
    beta: f64,
    /// `√(β/6)`
    eps: f64,
    /// `L / √(β/6)`
    scaled_length: f64,
}

impl Kernel {
    pub fn new(length: f64, beta: f64) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::param(
                "length",
                format!("must be positive, got {length}"),
            ));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::param(
                "beta",
                format!("must be positive, got {beta}"),
            ));
        }
        let eps = (beta / 6.0).sqrt();
        Ok(Self {
            length,
            beta,
            eps,
            scaled_length: length / eps,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `√(β/6)`, the dispersive length scale.
    pub fn dispersion_length(&self) -> f64 {
        self.eps
    }

    fn check(&self, x: f64) -> Result<()> {
        if !(0.0..=self.length).contains(&x) {
            return Err(Error::Domain {
                value: x,
                length: self.length,
            });
        }
        Ok(())
    }

    /// `cosh(a/ε) / sinh(L/ε)` for `|a| ≤ L`.
    fn cosh_ratio(&self, a: f64) -> f64 {
        let b = self.scaled_length;
        let a = a / self.eps;
        if b <= SCALED_THRESHOLD {
            a.cosh() / b.sinh()
        } else {
            let a = a.abs();
            ((a - b).exp() + (-a - b).exp()) / -(-2.0 * b).exp_m1()
        }
    }

    /// `sinh(a/ε) / sinh(L/ε)` for `|a| ≤ L`.
    fn sinh_ratio(&self, a: f64) -> f64 {
        let b = self.scaled_length;
        let a = a / self.eps;
        if b <= SCALED_THRESHOLD {
            a.sinh() / b.sinh()
        } else {
            let m = a.abs();
            a.signum() * ((m - b).exp() - (-m - b).exp()) / -(-2.0 * b).exp_m1()
        }
    }

    /// Green's function `G(ξ, s)`.
    pub fn g(&self, xi: f64, s: f64) -> Result<f64> {
        self.check(xi)?;
        self.check(s)?;
        Ok(self.g_unchecked(xi, s))
    }

    fn g_unchecked(&self, xi: f64, s: f64) -> f64 {
        let l = self.length;
        (self.cosh_ratio(l - (s - xi).abs()) - self.cosh_ratio(l - (xi + s))) / (2.0 * self.eps)
    }

    /// `K(ξ, s) = ∂G/∂s` for `ξ ≠ s`.
    pub fn k(&self, xi: f64, s: f64) -> Result<f64> {
        self.check(xi)?;
        self.check(s)?;
        if xi == s {
            return Err(Error::KernelAmbiguity(xi));
        }
        Ok(self.k_unchecked(xi, s))
    }

    /// One-sided limit of `K(ξ, s)` as `s → ξ` from the given side.
    pub fn k_limit(&self, xi: f64, side: Side) -> Result<f64> {
        self.check(xi)?;
        let sign = match side {
            Side::Below => 1.0,
            Side::Above => -1.0,
        };
        Ok(self.k_with_sign(xi, xi, sign))
    }

    fn k_unchecked(&self, xi: f64, s: f64) -> f64 {
        let sign = if xi > s { 1.0 } else { -1.0 };
        self.k_with_sign(xi, s, sign)
    }

    fn k_with_sign(&self, xi: f64, s: f64, sign: f64) -> f64 {
        let l = self.length;
        3.0 / self.beta * (self.sinh_ratio(l - xi - s) + sign * self.sinh_ratio(l - (xi - s).abs()))
    }

    /// `∂K/∂ξ` away from the diagonal.
    pub fn dk_dxi(&self, xi: f64, s: f64) -> f64 {
        let l = self.length;
        -3.0 / (self.beta * self.eps)
            * (self.cosh_ratio(l - xi - s) + self.cosh_ratio(l - (xi - s).abs()))
    }

    /// Size of the jump `K(ξ, ξ⁻) − K(ξ, ξ⁺)`, which is `6/β` at every
    /// interior point.
    pub fn jump(&self) -> f64 {
        6.0 / self.beta
    }

    fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if (mesh.length() - self.length).abs() > 1e-12 * self.length {
            return Err(Error::param(
                "kernel",
                format!(
                    "kernel length {} does not match mesh span {}",
                    self.length,
                    mesh.length()
                ),
            ));
        }
        Ok(())
    }
}

/// Worst-case deviations from the closed-form kernel identities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelReport {
    pub length: f64,
    pub beta: f64,
    pub points: usize,
    /// `max |G(0, s)|, |G(L, s)|`
    pub boundary_max: f64,
    /// `max |G(ξ, s) − G(s, ξ)|` on the `points × points` grid.
    pub symmetry_max: f64,
    /// `max |K(ξ, ξ⁻) − K(ξ, ξ⁺) − 6/β| / (6/β)`
    pub jump_relative_error: f64,
}

impl Kernel {
    /// Checks the identities on `points` equally spaced interior points.
    pub fn identity_report(&self, points: usize) -> KernelReport {
        let l = self.length;
        let xs: Vec<f64> = (1..=points)
            .map(|i| l * i as f64 / (points + 1) as f64)
            .collect();
        let mut boundary_max: f64 = 0.0;
        let mut symmetry_max: f64 = 0.0;
        let mut jump_relative_error: f64 = 0.0;
        for &x in &xs {
            boundary_max = boundary_max
                .max(self.g_unchecked(0.0, x).abs())
                .max(self.g_unchecked(l, x).abs());
            for &s in &xs {
                symmetry_max =
                    symmetry_max.max((self.g_unchecked(x, s) - self.g_unchecked(s, x)).abs());
            }
            let jump = self.k_with_sign(x, x, 1.0) - self.k_with_sign(x, x, -1.0);
            jump_relative_error = jump_relative_error.max((jump - self.jump()).abs() / self.jump());
        }
        KernelReport {
            length: l,
            beta: self.beta,
            points,
            boundary_max,
            symmetry_max,
            jump_relative_error,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    G,
    K,
}

/// `φ ↦ ∫₀ᴸ kernel(ξ_i, s) φ(s) ds` at every node, by 3-point Gauss
/// quadrature on each element. Nodes coincide with element ends, so the
/// kernel's diagonal singularity always falls on an element boundary.
#[derive(Debug, Clone)]
pub struct IntegralOperator {
    mesh: Mesh,
    n_quad: usize,
    /// Row-major `n_nodes × (3 n_elements)` quadrature weights times kernel.
    weights: Vec<f64>,
}

impl IntegralOperator {
    pub fn new(kernel: &Kernel, mesh: &Mesh, kind: KernelKind) -> Result<Self> {
        kernel.check_mesh(mesh)?;
        let n = mesh.n_nodes();
        let ne = mesh.n_elements();
        let n_quad = 3 * ne;
        let h = mesh.h();
        let local = |i: usize| i as f64 * kernel.length / (n - 1) as f64;
        let mut weights = vec![0.0; n * n_quad];
        for i in 0..n {
            let xi = local(i);
            let row = &mut weights[i * n_quad..(i + 1) * n_quad];
            for e in 0..ne {
                let left = local(e);
                for q in 0..3 {
                    let s = left + GAUSS_POINTS[q] * h;
                    let k = match kind {
                        KernelKind::G => kernel.g_unchecked(xi, s),
                        KernelKind::K => kernel.k_unchecked(xi, s),
                    };
                    row[3 * e + q] = GAUSS_WEIGHTS[q] * h * k;
                }
            }
        }
        Ok(Self {
            mesh: *mesh,
            n_quad,
            weights,
        })
    }

    /// Applies the operator to values given at every Gauss point
    /// (element-major, `3 e + q`).
    pub fn apply_quadrature(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.n_quad);
        self.weights
            .chunks_exact(self.n_quad)
            .map(|row| row.iter().zip(values).map(|(w, v)| w * v).sum())
            .collect()
    }

    /// Applies the operator to the P1 interpolant of a nodal field.
    pub fn apply(&self, phi: &[f64]) -> Vec<f64> {
        self.apply_quadrature(&p1_at_gauss(&self.mesh, phi))
    }

    /// Dense nodal matrix `Φ_ij` with `(Φ φ)_i = Σ_j Φ_ij φ_j`.
    pub fn nodal_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.mesh.n_nodes();
        (0..n)
            .map(|i| {
                let row = &self.weights[i * self.n_quad..(i + 1) * self.n_quad];
                let mut out = vec![0.0; n];
                for e in 0..self.mesh.n_elements() {
                    for q in 0..3 {
                        let w = row[3 * e + q];
                        out[e] += w * (1.0 - GAUSS_POINTS[q]);
                        out[e + 1] += w * GAUSS_POINTS[q];
                    }
                }
                out
            })
            .collect()
    }
}

fn p1_at_gauss(mesh: &Mesh, phi: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(3 * mesh.n_elements());
    for e in 0..mesh.n_elements() {
        out.extend(mesh.interpolate(phi, e));
    }
    out
}

/// `Φ₁(φ)(ξ_i) = ∫ G(ξ_i, s) φ(s) ds` at every node.
pub fn phi1(kernel: &Kernel, mesh: &Mesh, phi: &[f64]) -> Result<Vec<f64>> {
    mesh.check_len(phi)?;
    Ok(IntegralOperator::new(kernel, mesh, KernelKind::G)?.apply(phi))
}

/// `Φ₂(φ)(ξ_i) = ∫ K(ξ_i, s) φ(s) ds` at every node.
pub fn phi2(kernel: &Kernel, mesh: &Mesh, phi: &[f64]) -> Result<Vec<f64>> {
    mesh.check_len(phi)?;
    Ok(IntegralOperator::new(kernel, mesh, KernelKind::K)?.apply(phi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOptions {
    pub max_sweeps: usize,
    /// Stop when `max_t ‖u^{k+1}(t) − u^k(t)‖_{H¹×H¹}` falls below this.
    pub tol: f64,
    /// Estimated contraction horizon; exceeding it only logs a warning.
    pub horizon: Option<f64>,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 100,
            tol: 1e-10,
            horizon: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PicardSolution {
    pub trajectory: Trajectory,
    pub sweeps: usize,
    /// Sweep-to-sweep differences, one per sweep.
    pub differences: Vec<f64>,
    pub exceeds_horizon: bool,
}

impl PicardSolution {
    /// Ratios of consecutive sweep differences.
    pub fn contraction_ratios(&self) -> Vec<f64> {
        self.differences
            .windows(2)
            .filter(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .collect()
    }
}

/// The time-discrete fixed-point map: trapezoidal rule in time on a uniform
/// grid, Gauss quadrature in space.
pub struct PicardMap {
    mesh: Mesh,
    beta: f64,
    alpha: f64,
    coeffs: QuadratureCache,
    operator: IntegralOperator,
    initial: StatePair,
    dt: f64,
    n_time: usize,
}

impl PicardMap {
    pub fn new(
        kernel: &Kernel,
        mesh: &Mesh,
        profile: &CoefficientProfile,
        alpha: f64,
        initial: &StatePair,
        final_time: f64,
        n_time: usize,
    ) -> Result<Self> {
        mesh.check_len(&initial.elevation)?;
        mesh.check_len(&initial.velocity)?;
        if n_time == 0 {
            return Err(Error::param("n_time", "must be at least 1"));
        }
        if !(final_time > 0.0 && final_time.is_finite()) {
            return Err(Error::param("final_time", "must be positive"));
        }
        Ok(Self {
            mesh: *mesh,
            beta: kernel.beta,
            alpha,
            coeffs: profile.sample_quadrature(mesh)?,
            operator: IntegralOperator::new(kernel, mesh, KernelKind::K)?,
            initial: initial.clone(),
            dt: final_time / n_time as f64,
            n_time,
        })
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_time).map(|k| k as f64 * self.dt).collect()
    }

    /// Time-constant initial iterate.
    pub fn initial_iterate(&self) -> Vec<StatePair> {
        vec![self.initial.clone(); self.n_time + 1]
    }

    fn integrands(&self, state: &StatePair) -> (Vec<f64>, Vec<f64>) {
        let ne = self.mesh.n_elements();
        let mut f1 = Vec::with_capacity(3 * ne);
        let mut f2 = Vec::with_capacity(3 * ne);
        let a = self.alpha;
        for e in 0..ne {
            let n = self.mesh.interpolate(&state.elevation, e);
            let v = self.mesh.interpolate(&state.velocity, e);
            for q in 0..3 {
                let c = self.coeffs.c[e][q];
                let c2 = self.coeffs.c2[e][q];
                f1.push((1.0 + a * c2 * n[q]) * v[q]);
                f2.push(c * n[q] + 0.5 * a * c2 * v[q] * v[q]);
            }
        }
        (f1, f2)
    }

    /// One application of the fixed-point map to a full space-time iterate.
    pub fn apply(&self, levels: &[StatePair]) -> Vec<StatePair> {
        assert_eq!(levels.len(), self.n_time + 1);
        let rates: Vec<(Vec<f64>, Vec<f64>)> = levels
            .iter()
            .map(|s| {
                let (f1, f2) = self.integrands(s);
                (
                    self.operator.apply_quadrature(&f1),
                    self.operator.apply_quadrature(&f2),
                )
            })
            .collect();
        let n = self.mesh.n_nodes();
        let mut out = Vec::with_capacity(levels.len());
        let mut acc_n = vec![0.0; n];
        let mut acc_v = vec![0.0; n];
        out.push(self.initial.clone());
        for k in 1..=self.n_time {
            for i in 0..n {
                acc_n[i] += 0.5 * self.dt * (rates[k - 1].0[i] + rates[k].0[i]);
                acc_v[i] += 0.5 * self.dt * (rates[k - 1].1[i] + rates[k].1[i]);
            }
            let elevation = self
                .initial
                .elevation
                .iter()
                .zip(&acc_n)
                .map(|(a, b)| a + b)
                .collect();
            let velocity = self
                .initial
                .velocity
                .iter()
                .zip(&acc_v)
                .map(|(a, b)| a + b)
                .collect();
            out.push(StatePair::new(elevation, velocity).expect("mesh-sized fields"));
        }
        out
    }

    /// `max_t ‖a(t) − b(t)‖_{H¹×H¹}`.
    pub fn distance(&self, a: &[StatePair], b: &[StatePair]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                let d = x.difference(y);
                fem::h1_pair_norm(&self.mesh, &d.elevation, &d.velocity, self.beta)
                    .expect("mesh-sized fields")
            })
            .fold(0.0, f64::max)
    }

    /// Distance between an iterate and its image under the map.
    pub fn residual(&self, levels: &[StatePair]) -> f64 {
        self.distance(&self.apply(levels), levels)
    }
}

/// Number of consecutive growing sweep differences that marks the
/// iteration as non-contracting.
pub const DIVERGENCE_STREAK: usize = 3;

/// Picard iteration of the integral equations on `[0, final_time]` with
/// `n_time` uniform time intervals.
#[allow(clippy::too_many_arguments)]
pub fn picard_solve(
    kernel: &Kernel,
    mesh: &Mesh,
    profile: &CoefficientProfile,
    alpha: f64,
    initial: &StatePair,
    final_time: f64,
    n_time: usize,
    options: PicardOptions,
) -> Result<PicardSolution> {
    let map = PicardMap::new(kernel, mesh, profile, alpha, initial, final_time, n_time)?;
    let exceeds_horizon = options.horizon.is_some_and(|t0| final_time > t0);
    if exceeds_horizon {
        warn!(
            "Picard horizon {final_time} exceeds estimated contraction time {}",
            options.horizon.unwrap_or(f64::NAN)
        );
    }
    let mut iterate = map.initial_iterate();
    let mut differences = Vec::new();
    let mut streak = 0;
    for sweep in 1..=options.max_sweeps {
        let next = map.apply(&iterate);
        let diff = map.distance(&next, &iterate);
        if !diff.is_finite() {
            return Err(Error::Divergence(format!("Picard sweep {sweep}")));
        }
        if let Some(&prev) = differences.last() {
            if diff > prev {
                streak += 1;
            } else {
                streak = 0;
            }
        }
        differences.push(diff);
        iterate = next;
        if diff <= options.tol {
            return Ok(PicardSolution {
                trajectory: Trajectory {
                    snapshots: iterate,
                    times: map.times(),
                    newton_iterations: Vec::new(),
                },
                sweeps: sweep,
                differences,
                exceeds_horizon,
            });
        }
        if streak >= DIVERGENCE_STREAK {
            return Err(Error::PicardDivergence {
                consecutive: streak,
                last: diff,
            });
        }
    }
    Err(Error::PicardNotConverged {
        sweeps: options.max_sweeps,
        last: differences.last().copied().unwrap_or(f64::NAN),
    })
}

/// Operator-norm constants and the resulting existence horizons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractionEstimate {
    /// Empirical `‖Φ₁‖_{L²→H¹}`.
    pub c1: f64,
    /// Empirical `‖Φ₂‖_{L²→H¹}`.
    pub c2: f64,
    /// Cauchy–Schwarz bound on `‖Φ₁‖_{L²→H¹}` from kernel norms.
    pub c1_analytic: f64,
    /// Cauchy–Schwarz bound on `‖Φ₂‖_{L²→H¹}` from kernel norms.
    pub c2_analytic: f64,
    pub radius: f64,
    pub data_norm: f64,
    pub length: f64,
    pub beta: f64,
    pub alpha: f64,
    /// `‖c‖_{L²}`
    pub c_norm: f64,
    /// `‖c²‖_{L²}`
    pub c_sq_norm: f64,
    /// Self-mapping horizon: the ball of radius `radius` is invariant up to `t1`.
    pub t1: f64,
    /// Contraction horizon: the map contracts for `T < t2`.
    pub t2: f64,
    pub t0: f64,
}

impl ContractionEstimate {
    fn sup_factor(&self) -> f64 {
        self.length.sqrt() / (self.beta / 6.0).sqrt()
    }

    /// `C₁ (L^{1/2} + ‖c‖) + α C₂ ‖c²‖ (2‖V‖ + ‖Ñ‖ + ‖Ṽ‖)`, the rate entering
    /// the continuous-dependence estimate. Used as a stand-in for the
    /// constant left unspecified in that estimate.
    pub fn dependence_rate(&self, v_norm: f64, n_tilde_norm: f64, v_tilde_norm: f64) -> f64 {
        self.c1 * (self.length.sqrt() + self.c_norm)
            + self.alpha * self.c2 * self.c_sq_norm * (2.0 * v_norm + n_tilde_norm + v_tilde_norm)
    }

    /// `T₀^{1/2} exp(L^{1/2}/(β/6)^{1/2} · rate · T₀)`: the factor multiplying
    /// the data difference in the continuous-dependence bound.
    pub fn dependence_factor(&self, rate: f64) -> f64 {
        self.t0.sqrt() * (self.sup_factor() * rate * self.t0).exp()
    }

    /// Bracket of the contraction condition for a given ball radius.
    pub fn contraction_bracket(&self, radius: f64) -> f64 {
        self.c1 * (self.length.sqrt() + self.c_norm)
            + self.alpha * self.c2 * self.c_sq_norm * (1.0 + 2.0 * radius)
    }
}

/// Largest `T₂` with `L^{1/2} T₂ / (β/6)^{1/2} · bracket < 1` (supremum).
pub fn contraction_horizon(length: f64, beta: f64, bracket: f64) -> f64 {
    (beta / 6.0).sqrt() / (length.sqrt() * bracket)
}

/// Root `T₁` of the self-mapping condition taken with equality:
/// `T^{1/2} [d + (L^{1/2}/ε) (C₁ (L^{1/2} + ‖c‖) + 3 α C₂ ‖c²‖ L^{1/2} T^{1/2} R / (2ε)) T^{1/2} R] = R`.
#[allow(clippy::too_many_arguments)]
pub fn self_map_horizon(
    length: f64,
    beta: f64,
    alpha: f64,
    c1: f64,
    c2: f64,
    c_norm: f64,
    c_sq_norm: f64,
    radius: f64,
    data_norm: f64,
) -> f64 {
    let eps = (beta / 6.0).sqrt();
    let p = length.sqrt() / eps * c1 * (length.sqrt() + c_norm);
    let q = 3.0 * alpha * c2 * c_sq_norm * length / (2.0 * eps * eps);
    let f = |x: f64| q * radius * radius * x.powi(3) + p * radius * x * x + data_norm * x - radius;
    // f is increasing on x ≥ 0 with f(0) = −R < 0
    let mut hi = 1.0;
    while f(hi) < 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    x * x
}

/// Estimates `C₁`, `C₂` by power iteration on the discrete `L² → H¹`
/// operators and returns the horizons `T₁`, `T₂`, `T₀ = min(T₁, T₂)`.
pub fn estimate_contraction(
    kernel: &Kernel,
    mesh: &Mesh,
    profile: &CoefficientProfile,
    alpha: f64,
    radius: f64,
    data_norm: f64,
) -> Result<ContractionEstimate> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::param(
            "radius",
            format!("must be positive, got {radius}"),
        ));
    }
    if !(data_norm >= 0.0 && data_norm.is_finite()) {
        return Err(Error::param("data_norm", "must be non-negative"));
    }
    let beta = kernel.beta;
    let c1 = operator_norm(kernel, mesh, KernelKind::G, 0x5eed_0001)?;
    let c2 = operator_norm(kernel, mesh, KernelKind::K, 0x5eed_0002)?;
    let (c1_analytic, c2_analytic) = analytic_bounds(kernel, 240);
    let coeffs = profile.sample_quadrature(mesh)?;
    let (c_norm, c_sq_norm) = coeffs.l2_norms(mesh);
    let length = kernel.length;
    let mut est = ContractionEstimate {
        c1,
        c2,
        c1_analytic,
        c2_analytic,
        radius,
        data_norm,
        length,
        beta,
        alpha,
        c_norm,
        c_sq_norm,
        t1: 0.0,
        t2: 0.0,
        t0: 0.0,
    };
    est.t2 = contraction_horizon(length, beta, est.contraction_bracket(radius));
    est.t1 = self_map_horizon(
        length, beta, alpha, c1, c2, c_norm, c_sq_norm, radius, data_norm,
    );
    est.t0 = est.t1.min(est.t2);
    Ok(est)
}

/// Full-node P1 mass matrix and `M + (β/6) S`, boundary nodes included.
fn full_gram(mesh: &Mesh, beta: f64) -> (BandedMatrix, BandedMatrix) {
    let n = mesh.n_nodes();
    let h = mesh.h();
    let mut m = BandedMatrix::zeros(n, 1);
    let mut s = BandedMatrix::zeros(n, 1);
    for e in 0..mesh.n_elements() {
        for (a, b, mv, sv) in [
            (e, e, 2.0, 1.0),
            (e + 1, e + 1, 2.0, 1.0),
            (e, e + 1, 1.0, -1.0),
            (e + 1, e, 1.0, -1.0),
        ] {
            m.add(a, b, mv * h / 6.0);
            s.add(a, b, sv / h);
        }
    }
    let hm = m.add_scaled(beta / 6.0, &s);
    (m, hm)
}

/// `sup ‖Φ φ‖_{H¹} / ‖φ‖_{L²}` over P1 fields, by power iteration on
/// `M⁻¹ Φᵀ H Φ` from a random start.
fn operator_norm(kernel: &Kernel, mesh: &Mesh, kind: KernelKind, seed: u64) -> Result<f64> {
    let op = IntegralOperator::new(kernel, mesh, kind)?;
    let phi = op.nodal_matrix();
    let n = mesh.n_nodes();
    let (m, h) = full_gram(mesh, kernel.beta);
    let m_lu = m.lu()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let apply = |x: &[f64]| -> Vec<f64> {
        phi.iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    };
    let apply_t = |y: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (row, yi) in phi.iter().zip(y) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * yi;
            }
        }
        out
    };
    let mut lambda = 0.0;
    for _ in 0..500 {
        let norm = m.bilinear(&x, &x).sqrt();
        x.iter_mut().for_each(|v| *v /= norm);
        let y = apply(&x);
        let hy = h.matvec(&y);
        let next_lambda: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
        let mut z = apply_t(&hy);
        m_lu.solve_in_place(&mut z);
        x = z;
        let done = (next_lambda - lambda).abs() <= 1e-12 * next_lambda;
        lambda = next_lambda;
        if done {
            break;
        }
    }
    Ok(lambda.sqrt())
}

/// Hilbert–Schmidt bounds `(‖G‖² + ε²‖K‖²)^{1/2}` and
/// `(‖K‖² + 2ε² [(6/β)² + ‖∂_ξK‖²])^{1/2}` by tensor Gauss quadrature on a
/// `cells × cells` grid.
fn analytic_bounds(kernel: &Kernel, cells: usize) -> (f64, f64) {
    let l = kernel.length;
    let h = l / cells as f64;
    let pts: Vec<(f64, f64)> = (0..cells)
        .flat_map(|c| (0..3).map(move |q| ((c as f64 + GAUSS_POINTS[q]) * h, GAUSS_WEIGHTS[q] * h)))
        .collect();
    let (mut g2, mut k2, mut dk2) = (0.0, 0.0, 0.0);
    for &(x, wx) in &pts {
        for &(s, ws) in &pts {
            let w = wx * ws;
            let g = kernel.g_unchecked(x, s);
            let k = kernel.k_unchecked(x, s);
            let dk = kernel.dk_dxi(x, s);
            g2 += w * g * g;
            k2 += w * k * k;
            dk2 += w * dk * dk;
        }
    }
    let eps2 = kernel.beta / 6.0;
    let jump = 6.0 / kernel.beta;
    (
        (g2 + eps2 * k2).sqrt(),
        (k2 + 2.0 * eps2 * (jump * jump + dk2)).sqrt(),
    )
}
