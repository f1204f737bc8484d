//! Square banded matrices with equal lower and upper bandwidth, and an LU
//! factorization with partial pivoting in the LINPACK `gbfa`/`gbsl` layout.

use crate::error::{Error, Result};

/// Square matrix whose nonzeros satisfy `|i - j| <= half_bandwidth`.
///
/// Entries are kept in band storage: row `i` holds columns
/// `i - p ..= i + p` contiguously, where `p` is the half bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    order: usize,
    half_bandwidth: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(order: usize, half_bandwidth: usize) -> Self {
        Self {
            order,
            half_bandwidth,
            data: vec![0.0; order * (2 * half_bandwidth + 1)],
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn half_bandwidth(&self) -> usize {
        self.half_bandwidth
    }

    fn width(&self) -> usize {
        2 * self.half_bandwidth + 1
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.order && j < self.order && i.abs_diff(j) <= self.half_bandwidth
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        i * self.width() + (j + self.half_bandwidth - i)
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.index(i, j)]
        } else {
            0.0
        }
    }

    /// Adds `value` to entry `(i, j)`.
    ///
    /// Panics if `(i, j)` lies outside the band.
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        assert!(
            self.in_band(i, j),
            "entry ({i}, {j}) outside band of half-width {}",
            self.half_bandwidth
        );
        let k = self.index(i, j);
        self.data[k] += value;
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let k = self.index(i, j);
        self.data[k] = value;
    }

    /// Column range of row `i` that may hold nonzeros.
    fn row_span(&self, i: usize) -> std::ops::RangeInclusive<usize> {
        let p = self.half_bandwidth;
        i.saturating_sub(p)..=(i + p).min(self.order - 1)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.order);
        (0..self.order)
            .map(|i| self.row_span(i).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.order);
        let mut y = vec![0.0; self.order];
        for i in 0..self.order {
            for j in self.row_span(i) {
                y[j] += self.get(i, j) * x[i];
            }
        }
        y
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        self.matvec(y).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// `self + scale * other`; both operands must share order and bandwidth.
    pub fn add_scaled(&self, scale: f64, other: &BandedMatrix) -> BandedMatrix {
        assert_eq!(self.order, other.order);
        assert_eq!(self.half_bandwidth, other.half_bandwidth);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + scale * b)
            .collect();
        BandedMatrix {
            order: self.order,
            half_bandwidth: self.half_bandwidth,
            data,
        }
    }

    pub fn transpose(&self) -> BandedMatrix {
        let mut t = BandedMatrix::zeros(self.order, self.half_bandwidth);
        for i in 0..self.order {
            for j in self.row_span(i) {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.order {
            for j in self.row_span(i) {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Row-major dense copy, mostly for diagnostics and tests.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.order)
            .map(|i| (0..self.order).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn lu(&self) -> Result<BandedLu> {
        BandedLu::factor(self)
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let lu = self.lu()?;
        let mut x = rhs.to_vec();
        lu.solve_in_place(&mut x);
        Ok(x)
    }
}

/// Banded LU factors. Row interchanges only touch columns to the right of
/// the current pivot, so multipliers stay in place and the permutation is
/// replayed step by step during the solves.
#[derive(Debug, Clone)]
pub struct BandedLu {
    order: usize,
    lower: usize,
    upper: usize,
    data: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    fn width(&self) -> usize {
        2 * self.lower + self.upper + 1
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width() + (j + self.lower - i)
    }

    fn factor(m: &BandedMatrix) -> Result<Self> {
        let n = m.order;
        let p = m.half_bandwidth;
        let mut lu = BandedLu {
            order: n,
            lower: p,
            upper: p,
            data: vec![0.0; n * (3 * p + 1)],
            pivots: vec![0; n],
        };
        for i in 0..n {
            for j in m.row_span(i) {
                let k = lu.idx(i, j);
                lu.data[k] = m.get(i, j);
            }
        }
        let (kl, ku) = (lu.lower, lu.upper);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + kl + ku).min(n - 1);
            let mut piv = k;
            let mut best = lu.data[lu.idx(k, k)].abs();
            for i in k + 1..=last_row {
                let v = lu.data[lu.idx(i, k)].abs();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::SingularMatrix { row: k });
            }
            lu.pivots[k] = piv;
            if piv != k {
                for j in k..=last_col {
                    let (a, b) = (lu.idx(k, j), lu.idx(piv, j));
                    lu.data.swap(a, b);
                }
            }
            let pivot = lu.data[lu.idx(k, k)];
            for i in k + 1..=last_row {
                let ik = lu.idx(i, k);
                let factor = lu.data[ik] / pivot;
                lu.data[ik] = factor;
                if factor != 0.0 {
                    for j in k + 1..=last_col {
                        let kj = lu.data[lu.idx(k, j)];
                        let ij = lu.idx(i, j);
                        lu.data[ij] -= factor * kj;
                    }
                }
            }
        }
        Ok(lu)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Solves `A x = b`, overwriting `b` with `x`.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.order;
        assert_eq!(b.len(), n);
        let (kl, ku) = (self.lower, self.upper);
        for k in 0..n {
            b.swap(k, self.pivots[k]);
            let bk = b[k];
            for i in k + 1..=(k + kl).min(n - 1) {
                b[i] -= self.data[self.idx(i, k)] * bk;
            }
        }
        for k in (0..n).rev() {
            let mut acc = b[k];
            for j in k + 1..=(k + kl + ku).min(n - 1) {
                acc -= self.data[self.idx(k, j)] * b[j];
            }
            b[k] = acc / self.data[self.idx(k, k)];
        }
    }

    /// Solves `A^T x = b`, overwriting `b` with `x`.
    pub fn solve_transpose_in_place(&self, b: &mut [f64]) {
        let n = self.order;
        assert_eq!(b.len(), n);
        let (kl, ku) = (self.lower, self.upper);
        // U^T y = b
        for k in 0..n {
            let mut acc = b[k];
            for j in k.saturating_sub(kl + ku)..k {
                acc -= self.data[self.idx(j, k)] * b[j];
            }
            b[k] = acc / self.data[self.idx(k, k)];
        }
        for k in (0..n).rev() {
            let mut acc = b[k];
            for i in k + 1..=(k + kl).min(n - 1) {
                acc -= self.data[self.idx(i, k)] * b[i];
            }
            b[k] = acc;
            b.swap(k, self.pivots[k]);
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_transpose_in_place(&mut x);
        x
    }
}
