//! The depth coefficient `c(ξ)`.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::Mesh;

#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientProfile {
    /// `base + amp_sin·sin(wavenumber·ξ) + amp_gauss·exp(−((ξ − center)/width)²)`.
    GaussSine {
        base: f64,
        amp_sin: f64,
        wavenumber: f64,
        amp_gauss: f64,
        center: f64,
        width: f64,
    },
    /// Piecewise constant: `values[k]` on `(breakpoints[k-1], breakpoints[k]]`,
    /// `values[0]` up to and including the first breakpoint and the last value
    /// beyond the final one.
    Step {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
    /// Piecewise-linear interpolation of `(ξ, c)` samples, clamped outside.
    Tabulated {
        xi: Vec<f64>,
        c: Vec<f64>,
    },
    Constant(f64),
}

impl CoefficientProfile {
    /// `1 + 0.3 sin(πξ/5) + 0.6 exp(−(ξ − 8)²)`: smooth oscillation plus a bump.
    pub fn default_gauss_sine() -> Self {
        CoefficientProfile::GaussSine {
            base: 1.0,
            amp_sin: 0.3,
            wavenumber: PI / 5.0,
            amp_gauss: 0.6,
            center: 8.0,
            width: 1.0,
        }
    }

    /// Seven-plateau layered bottom with jumps between ξ = 20 and ξ = 32.
    pub fn default_step() -> Self {
        CoefficientProfile::Step {
            breakpoints: vec![20.0, 22.0, 27.0, 28.0, 30.0, 32.0],
            values: vec![0.8, 1.5, 2.0, 1.8, 1.3, 1.6, 0.9],
        }
    }

    pub fn step(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let p = CoefficientProfile::Step {
            breakpoints,
            values,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn tabulated(xi: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        let p = CoefficientProfile::Tabulated { xi, c };
        p.validate()?;
        Ok(p)
    }

    /// Reads a two-column `(xi, c)` CSV with a header row.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let display = path.display().to_string();
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Csv {
            path: display.clone(),
            message: e.to_string(),
        })?;
        let (mut xi, mut c) = (Vec::new(), Vec::new());
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::Csv {
                path: display.clone(),
                message: e.to_string(),
            })?;
            if rec.len() != 2 {
                return Err(Error::Csv {
                    path: display.clone(),
                    message: format!("row {}: expected 2 columns, got {}", line + 2, rec.len()),
                });
            }
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|e| Error::Csv {
                    path: display.clone(),
                    message: format!("row {}: {e}", line + 2),
                })
            };
            xi.push(parse(&rec[0])?);
            c.push(parse(&rec[1])?);
        }
        Self::tabulated(xi, c)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CoefficientProfile::GaussSine {
                base,
                amp_sin,
                wavenumber,
                amp_gauss,
                center,
                width,
            } => {
                let all = [base, amp_sin, wavenumber, amp_gauss, center, width];
                if all.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidProfile(
                        "non-finite gauss_sine parameter".into(),
                    ));
                }
                if *width <= 0.0 {
                    return Err(Error::InvalidProfile(
                        "gauss_sine width must be positive".into(),
                    ));
                }
            }
            CoefficientProfile::Step {
                breakpoints,
                values,
            } => {
                if values.len() != breakpoints.len() + 1 {
                    return Err(Error::InvalidProfile(format!(
                        "step profile needs one more value than breakpoints ({} vs {})",
                        values.len(),
                        breakpoints.len()
                    )));
                }
                if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidProfile(
                        "step breakpoints must be strictly increasing".into(),
                    ));
                }
                if breakpoints.iter().chain(values).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidProfile("non-finite step entry".into()));
                }
            }
            CoefficientProfile::Tabulated { xi, c } => {
                if xi.is_empty() {
                    return Err(Error::InvalidProfile("tabulated profile is empty".into()));
                }
                if xi.len() != c.len() {
                    return Err(Error::InvalidProfile(
                        "tabulated columns differ in length".into(),
                    ));
                }
                if xi.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidProfile(
                        "tabulated abscissae must be strictly increasing".into(),
                    ));
                }
                if xi.iter().chain(c).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidProfile("non-finite tabulated entry".into()));
                }
            }
            CoefficientProfile::Constant(v) => {
                if !v.is_finite() {
                    return Err(Error::InvalidProfile("non-finite constant".into()));
                }
            }
        }
        Ok(())
    }

    /// Checks that a tabulated profile spans the mesh interval.
    pub fn validate_for(&self, mesh: &Mesh) -> Result<()> {
        self.validate()?;
        if let CoefficientProfile::Tabulated { xi, .. } = self {
            let tol = 1e-9 * mesh.length();
            if xi[0] > mesh.a() + tol || xi[xi.len() - 1] < mesh.b() - tol {
                return Err(Error::InvalidProfile(format!(
                    "tabulated profile spans [{}, {}] but the mesh is [{}, {}]",
                    xi[0],
                    xi[xi.len() - 1],
                    mesh.a(),
                    mesh.b()
                )));
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        match self {
            CoefficientProfile::Tabulated { xi, .. } if xi.is_empty() => {
                Err(Error::InvalidProfile("tabulated profile is empty".into()))
            }
            _ => Ok(self.eval_unchecked(x)),
        }
    }

    fn eval_unchecked(&self, x: f64) -> f64 {
        match self {
            CoefficientProfile::GaussSine {
                base,
                amp_sin,
                wavenumber,
                amp_gauss,
                center,
                width,
            } => {
                let z = (x - center) / width;
                base + amp_sin * (wavenumber * x).sin() + amp_gauss * (-z * z).exp()
            }
            CoefficientProfile::Step {
                breakpoints,
                values,
            } => {
                // first breakpoint ≥ x closes the interval containing x
                let k = breakpoints.partition_point(|&bp| bp < x);
                values[k]
            }
            CoefficientProfile::Tabulated { xi, c } => {
                let n = xi.len();
                if x <= xi[0] {
                    return c[0];
                }
                if x >= xi[n - 1] {
                    return c[n - 1];
                }
                let k = xi.partition_point(|&v| v <= x);
                let (x0, x1) = (xi[k - 1], xi[k]);
                let t = (x - x0) / (x1 - x0);
                c[k - 1] * (1.0 - t) + c[k] * t
            }
            CoefficientProfile::Constant(v) => *v,
        }
    }

    /// Evaluates `c` and `c²` at every Gauss point of `mesh`.
    pub fn sample_quadrature(&self, mesh: &Mesh) -> Result<QuadratureCache> {
        self.validate_for(mesh)?;
        let ne = mesh.n_elements();
        let mut c = Vec::with_capacity(ne);
        let mut c2 = Vec::with_capacity(ne);
        for e in 0..ne {
            let vals: [f64; 3] =
                std::array::from_fn(|q| self.eval_unchecked(mesh.gauss_point(e, q)));
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidProfile(format!(
                    "non-finite value in element {e}"
                )));
            }
            c.push(vals);
            c2.push(vals.map(|v| v * v));
        }
        Ok(QuadratureCache { c, c2 })
    }
}

/// `c` and `c²` at the Gauss points, shared by assembly, energy and the
/// adjoint so all of them see identical coefficient values.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureCache {
    pub c: Vec<[f64; 3]>,
    pub c2: Vec<[f64; 3]>,
}

impl QuadratureCache {
    pub fn min_c(&self) -> f64 {
        self.c
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// `‖c‖_{L²}` and `‖c²‖_{L²}` by the cached quadrature.
    pub fn l2_norms(&self, mesh: &Mesh) -> (f64, f64) {
        let h = mesh.h();
        let mut c_sq = 0.0;
        let mut c2_sq = 0.0;
        for e in 0..self.c.len() {
            for q in 0..3 {
                let w = crate::mesh::GAUSS_WEIGHTS[q] * h;
                c_sq += w * self.c2[e][q];
                c2_sq += w * self.c2[e][q] * self.c2[e][q];
            }
        }
        (c_sq.sqrt(), c2_sq.sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_sine_matches_closed_form_at_bump_center() {
        let c = CoefficientProfile::default_gauss_sine();
        let expect = 1.6 + 0.3 * (8.0 * PI / 5.0).sin();
        assert!((c.eval(8.0).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn step_profile_uses_right_closed_intervals() {
        let c = CoefficientProfile::default_step();
        assert_eq!(c.eval(25.0).unwrap(), 2.0);
        assert_eq!(c.eval(20.0).unwrap(), 0.8);
        assert_eq!(c.eval(22.0).unwrap(), 1.5);
        assert_eq!(c.eval(22.000001).unwrap(), 2.0);
        assert_eq!(c.eval(32.0).unwrap(), 1.6);
        assert_eq!(c.eval(35.0).unwrap(), 0.9);
        assert_eq!(c.eval(-20.0).unwrap(), 0.8);
    }

    #[test]
    fn step_profile_has_seven_plateaus() {
        let c = CoefficientProfile::default_step();
        let mut plateaus: Vec<f64> = Vec::new();
        for i in 0..=6000 {
            let v = c.eval(-20.0 + i as f64 * 0.01).unwrap();
            if plateaus.last() != Some(&v) {
                plateaus.push(v);
            }
        }
        assert_eq!(plateaus, vec![0.8, 1.5, 2.0, 1.8, 1.3, 1.6, 0.9]);
    }

    #[test]
    fn constant_profile_is_constant() {
        let c = CoefficientProfile::Constant(1.0);
        assert_eq!(c.eval(-123.0).unwrap(), 1.0);
        let mesh = Mesh::new(0.0, 1.0, 6).unwrap();
        let q = c.sample_quadrature(&mesh).unwrap();
        assert!(q.c.iter().flatten().all(|&v| v == 1.0));
    }

    #[test]
    fn invalid_profiles_are_rejected() {
        assert!(CoefficientProfile::step(vec![1.0, 1.0], vec![0.0; 3]).is_err());
        assert!(CoefficientProfile::step(vec![1.0], vec![0.0; 3]).is_err());
        assert!(CoefficientProfile::tabulated(vec![], vec![]).is_err());
        assert!(CoefficientProfile::tabulated(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        let empty = CoefficientProfile::Tabulated {
            xi: vec![],
            c: vec![],
        };
        assert!(matches!(empty.eval(0.0), Err(Error::InvalidProfile(_))));
    }

    #[test]
    fn tabulated_interpolates_and_clamps() {
        let c = CoefficientProfile::tabulated(vec![0.0, 1.0, 3.0], vec![1.0, 2.0, 0.0]).unwrap();
        assert_eq!(c.eval(-1.0).unwrap(), 1.0);
        assert_eq!(c.eval(0.5).unwrap(), 1.5);
        assert_eq!(c.eval(2.0).unwrap(), 1.0);
        assert_eq!(c.eval(9.0).unwrap(), 0.0);
        let short = Mesh::new(0.0, 5.0, 11).unwrap();
        assert!(c.sample_quadrature(&short).is_err());
    }

    #[test]
    fn cache_matches_pointwise_evaluation() {
        let mesh = Mesh::new(-20.0, 40.0, 301).unwrap();
        for p in [
            CoefficientProfile::default_gauss_sine(),
            CoefficientProfile::default_step(),
        ] {
            let cache = p.sample_quadrature(&mesh).unwrap();
            for e in 0..mesh.n_elements() {
                for q in 0..3 {
                    let v = p.eval(mesh.gauss_point(e, q)).unwrap();
                    assert_eq!(cache.c[e][q], v);
                    assert_eq!(cache.c2[e][q], v * v);
                }
            }
        }
    }

    #[test]
    fn step_jump_inside_element_splits_gauss_values() {
        // node spacing 0.3 puts ξ = 20 strictly inside element [19.9, 20.2]
        let mesh = Mesh::new(-20.0, 40.0, 201).unwrap();
        let e = (0..mesh.n_elements())
            .find(|&e| mesh.node(e) < 20.0 && mesh.node(e + 1) > 20.0)
            .unwrap();
        let cache = CoefficientProfile::default_step()
            .sample_quadrature(&mesh)
            .unwrap();
        let direct: Vec<f64> = (0..3)
            .map(|q| {
                if mesh.gauss_point(e, q) <= 20.0 {
                    0.8
                } else {
                    1.5
                }
            })
            .collect();
        assert_eq!(cache.c[e].to_vec(), direct);
        assert!(cache.c[e][0] != cache.c[e][2]);
    }
}
