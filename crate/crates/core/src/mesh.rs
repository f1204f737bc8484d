//! Uniform 1-D mesh, nodal state storage and the element quadrature rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Abscissae of the 3-point Gauss–Legendre rule mapped to the reference
/// element `[0, 1]`.
pub const GAUSS_POINTS: [f64; 3] = [
    0.5 - 0.387_298_334_620_741_7,
    0.5,
    0.5 + 0.387_298_334_620_741_7,
];

/// Weights matching [`GAUSS_POINTS`] on `[0, 1]`; they sum to one.
pub const GAUSS_WEIGHTS: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];

/// Uniform partition of `[a, b]` carrying P1 nodal basis functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    a: f64,
    b: f64,
    n_nodes: usize,
    h: f64,
}

impl Mesh {
    pub fn new(a: f64, b: f64, n_nodes: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(Error::InvalidMesh(format!(
                "need finite a < b, got [{a}, {b}]"
            )));
        }
        if n_nodes < 3 {
            return Err(Error::InvalidMesh(format!(
                "need at least 3 nodes, got {n_nodes}"
            )));
        }
        Ok(Self {
            a,
            b,
            n_nodes,
            h: (b - a) / (n_nodes - 1) as f64,
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_elements(&self) -> usize {
        self.n_nodes - 1
    }

    /// Unconstrained degrees of freedom per field.
    pub fn n_interior(&self) -> usize {
        self.n_nodes - 2
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Coordinate of node `i`, computed directly rather than by accumulation.
    pub fn node(&self, i: usize) -> f64 {
        self.a + i as f64 * (self.b - self.a) / (self.n_nodes - 1) as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_nodes).map(|i| self.node(i)).collect()
    }

    /// Physical coordinate of Gauss point `q` in element `e`.
    pub fn gauss_point(&self, e: usize, q: usize) -> f64 {
        let left = self.node(e);
        left + GAUSS_POINTS[q] * (self.node(e + 1) - left)
    }

    /// P1 interpolant of a nodal field at the three Gauss points of element `e`.
    #[inline]
    pub fn interpolate(&self, field: &[f64], e: usize) -> [f64; 3] {
        let (l, r) = (field[e], field[e + 1]);
        GAUSS_POINTS.map(|s| l * (1.0 - s) + r * s)
    }

    /// Mesh with the same span and `2 * (n_nodes - 1) + 1` nodes; every old
    /// node is node `2 i` of the refined mesh.
    pub fn refined(&self) -> Mesh {
        Mesh::new(self.a, self.b, 2 * self.n_nodes - 1).expect("refinement of a valid mesh")
    }

    pub fn check_len(&self, field: &[f64]) -> Result<()> {
        if field.len() != self.n_nodes {
            return Err(Error::Dimension {
                expected: self.n_nodes,
                actual: field.len(),
            });
        }
        Ok(())
    }
}

/// Nodal elevation and velocity at one time level.
///
/// Both ends carry homogeneous Dirichlet data; every constructor and
/// solver output pins them to exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePair {
    pub elevation: Vec<f64>,
    pub velocity: Vec<f64>,
}

impl StatePair {
    pub fn zeros(n_nodes: usize) -> Self {
        Self {
            elevation: vec![0.0; n_nodes],
            velocity: vec![0.0; n_nodes],
        }
    }

    /// Builds a state from two nodal vectors, zeroing the boundary values.
    pub fn new(mut elevation: Vec<f64>, mut velocity: Vec<f64>) -> Result<Self> {
        if elevation.len() != velocity.len() {
            return Err(Error::Dimension {
                expected: elevation.len(),
                actual: velocity.len(),
            });
        }
        if elevation.len() < 3 {
            return Err(Error::InvalidMesh("state needs at least 3 nodes".into()));
        }
        pin_boundary(&mut elevation);
        pin_boundary(&mut velocity);
        Ok(Self {
            elevation,
            velocity,
        })
    }

    /// Samples two functions at the mesh nodes.
    pub fn from_fn(
        mesh: &Mesh,
        elevation: impl Fn(f64) -> f64,
        velocity: impl Fn(f64) -> f64,
    ) -> Self {
        let xs = mesh.nodes();
        Self::new(
            xs.iter().map(|&x| elevation(x)).collect(),
            xs.iter().map(|&x| velocity(x)).collect(),
        )
        .expect("mesh has at least three nodes")
    }

    pub fn n_nodes(&self) -> usize {
        self.elevation.len()
    }

    pub fn satisfies_boundary(&self) -> bool {
        let last = self.n_nodes() - 1;
        self.elevation[0] == 0.0
            && self.elevation[last] == 0.0
            && self.velocity[0] == 0.0
            && self.velocity[last] == 0.0
    }

    pub fn is_finite(&self) -> bool {
        self.elevation
            .iter()
            .chain(&self.velocity)
            .all(|x| x.is_finite())
    }

    /// Interior values interleaved as `(N_1, V_1, N_2, V_2, ...)`.
    pub fn pack(&self) -> Vec<f64> {
        let m = self.n_nodes() - 2;
        let mut x = Vec::with_capacity(2 * m);
        for i in 1..=m {
            x.push(self.elevation[i]);
            x.push(self.velocity[i]);
        }
        x
    }

    /// Inverse of [`StatePair::pack`]; boundary values are zero.
    pub fn unpack(x: &[f64]) -> Self {
        assert!(
            x.len().is_multiple_of(2),
            "interleaved vector must have even length"
        );
        let m = x.len() / 2;
        let mut s = Self::zeros(m + 2);
        for k in 0..m {
            s.elevation[k + 1] = x[2 * k];
            s.velocity[k + 1] = x[2 * k + 1];
        }
        s
    }

    pub fn max_abs_diff(&self, other: &StatePair) -> f64 {
        self.elevation
            .iter()
            .zip(&other.elevation)
            .chain(self.velocity.iter().zip(&other.velocity))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn difference(&self, other: &StatePair) -> StatePair {
        StatePair {
            elevation: sub(&self.elevation, &other.elevation),
            velocity: sub(&self.velocity, &other.velocity),
        }
    }

    /// Values at every `stride`-th node, used to compare nested meshes.
    pub fn restrict(&self, stride: usize) -> StatePair {
        let pick = |f: &[f64]| f.iter().step_by(stride).copied().collect::<Vec<_>>();
        StatePair {
            elevation: pick(&self.elevation),
            velocity: pick(&self.velocity),
        }
    }
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub(crate) fn pin_boundary(field: &mut [f64]) {
    if let Some(first) = field.first_mut() {
        *first = 0.0;
    }
    if let Some(last) = field.last_mut() {
        *last = 0.0;
    }
}
