//! Dense real third-order tensors.
//!
//! Storage is frontal-slice-major and column-major inside each slice, so the
//! element `(i, j, k)` (0-based) lives at `k*m*n + j*m + i`. With that layout a
//! single lateral slice `m x 1 x p` is already its own unfolding.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DMatrixView};

use crate::error::{Axis, Error, Result};

/// Default cap on the number of entries of a materialized block-circulant matrix.
pub const BCIRC_CAP: usize = 4_000_000;

/// A real `m x n x p` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor3 {
    m: usize,
    n: usize,
    p: usize,
    data: Vec<f64>,
}

/// A `1 x 1 x p` tensor.
pub type Tube = DenseTensor3;

/// An `m x 1 x p` tensor.
pub type LateralSlice = DenseTensor3;

impl DenseTensor3 {
    pub fn zeros(m: usize, n: usize, p: usize) -> Self {
        assert!(m > 0 && n > 0 && p > 0, "tensor dimensions must be positive");
        DenseTensor3 { m, n, p, data: vec![0.0; m * n * p] }
    }

    /// Builds a tensor from storage-ordered values.
    pub fn from_vec(m: usize, n: usize, p: usize, data: Vec<f64>) -> Result<Self> {
        if m == 0 || n == 0 || p == 0 {
            return Err(Error::Shape(format!("dimensions {m}x{n}x{p} must be positive")));
        }
        if data.len() != m * n * p {
            return Err(Error::Shape(format!(
                "{} values supplied for a {m}x{n}x{p} tensor",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(DenseTensor3 { m, n, p, data })
    }

    /// Builds a tensor from a function of the 0-based index triple.
    ///
    /// Panics if the function produces a non-finite value.
    pub fn from_fn(m: usize, n: usize, p: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(m, n, p);
        for k in 0..p {
            for j in 0..n {
                for i in 0..m {
                    let v = f(i, j, k);
                    assert!(v.is_finite(), "non-finite entry at ({i}, {j}, {k})");
                    t.data[k * m * n + j * m + i] = v;
                }
            }
        }
        t
    }

    /// Stacks matrices as frontal slices.
    pub fn from_frontal_slices(slices: &[DMatrix<f64>]) -> Result<Self> {
        let first = slices.first().ok_or_else(|| Error::Shape("no frontal slices".into()))?;
        let (m, n) = first.shape();
        let mut data = Vec::with_capacity(m * n * slices.len());
        for (k, s) in slices.iter().enumerate() {
            if s.shape() != (m, n) {
                return Err(Error::Shape(format!(
                    "frontal slice {k} is {}x{}, expected {m}x{n}",
                    s.nrows(),
                    s.ncols()
                )));
            }
            data.extend_from_slice(s.as_slice());
        }
        Self::from_vec(m, n, slices.len(), data)
    }

    /// A tube holding the given values.
    pub fn tube(values: &[f64]) -> Result<Tube> {
        Self::from_vec(1, 1, values.len(), values.to_vec())
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.m, self.n, self.p)
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    pub fn depth(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        k * self.m * self.n + j * self.m + i
    }

    /// Element at the 0-based index triple.
    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        assert!(i < self.m && j < self.n && k < self.p, "index ({i}, {j}, {k}) out of range");
        self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub(crate) fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let o = self.offset(i, j, k);
        self.data[o] = v;
    }

    /// Storage-ordered values. This is also `vec` of the tensor.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_tube(&self) -> bool {
        self.m == 1 && self.n == 1
    }

    // ----- slices -----

    /// Frontal slice `k` as a borrowed `m x n` matrix.
    pub fn frontal(&self, k: usize) -> Result<DMatrixView<'_, f64>> {
        if k >= self.p {
            return Err(Error::Bounds { axis: Axis::Frontal, index: k, extent: self.p });
        }
        let mn = self.m * self.n;
        Ok(DMatrixView::from_slice(&self.data[k * mn..(k + 1) * mn], self.m, self.n))
    }

    /// Horizontal slice `i`, shape `1 x n x p`.
    pub fn horizontal(&self, i: usize) -> Result<DenseTensor3> {
        if i >= self.m {
            return Err(Error::Bounds { axis: Axis::Horizontal, index: i, extent: self.m });
        }
        Ok(Self::from_fn(1, self.n, self.p, |_, j, k| self.get(i, j, k)))
    }

    /// Lateral slice `j`, shape `m x 1 x p`.
    pub fn lateral(&self, j: usize) -> Result<LateralSlice> {
        if j >= self.n {
            return Err(Error::Bounds { axis: Axis::Lateral, index: j, extent: self.n });
        }
        Ok(Self::from_fn(self.m, 1, self.p, |i, _, k| self.get(i, j, k)))
    }

    /// Tube `(i, j, :)`.
    pub fn tube_at(&self, i: usize, j: usize) -> Tube {
        Self::from_fn(1, 1, self.p, |_, _, k| self.get(i, j, k))
    }

    /// Reassembles lateral slices side by side.
    pub fn from_lateral_slices(slices: &[LateralSlice]) -> Result<Self> {
        let first = slices.first().ok_or_else(|| Error::Shape("no lateral slices".into()))?;
        let (m, _, p) = first.shape();
        for (j, s) in slices.iter().enumerate() {
            if s.shape() != (m, 1, p) {
                return Err(Error::Shape(format!("lateral slice {j} has shape {:?}, expected ({m}, 1, {p})", s.shape())));
            }
        }
        Ok(Self::from_fn(m, slices.len(), p, |i, j, k| slices[j].get(i, 0, k)))
    }

    /// Reassembles horizontal slices top to bottom.
    pub fn from_horizontal_slices(slices: &[DenseTensor3]) -> Result<Self> {
        let first = slices.first().ok_or_else(|| Error::Shape("no horizontal slices".into()))?;
        let (_, n, p) = first.shape();
        for (i, s) in slices.iter().enumerate() {
            if s.shape() != (1, n, p) {
                return Err(Error::Shape(format!("horizontal slice {i} has shape {:?}, expected (1, {n}, {p})", s.shape())));
            }
        }
        Ok(Self::from_fn(slices.len(), n, p, |i, j, k| slices[i].get(0, j, k)))
    }

    /// Rows `r0..r1` and columns `c0..c1` of every frontal slice.
    pub fn sub_block(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> Result<DenseTensor3> {
        if r0 >= r1 || c0 >= c1 || r1 > self.m || c1 > self.n {
            return Err(Error::Shape(format!(
                "block rows {r0}..{r1}, cols {c0}..{c1} outside {}x{}",
                self.m, self.n
            )));
        }
        Ok(Self::from_fn(r1 - r0, c1 - c0, self.p, |i, j, k| self.get(r0 + i, c0 + j, k)))
    }

    /// Stacks `self` above `other`.
    pub fn vstack(&self, other: &DenseTensor3) -> Result<DenseTensor3> {
        if self.n != other.n || self.p != other.p {
            return Err(Error::Shape(format!("cannot stack {:?} above {:?}", self.shape(), other.shape())));
        }
        let m = self.m;
        Ok(Self::from_fn(m + other.m, self.n, self.p, |i, j, k| {
            if i < m { self.get(i, j, k) } else { other.get(i - m, j, k) }
        }))
    }

    /// Places `other` to the right of `self`.
    pub fn hstack(&self, other: &DenseTensor3) -> Result<DenseTensor3> {
        if self.m != other.m || self.p != other.p {
            return Err(Error::Shape(format!("cannot place {:?} beside {:?}", other.shape(), self.shape())));
        }
        let n = self.n;
        Ok(Self::from_fn(self.m, n + other.n, self.p, |i, j, k| {
            if j < n { self.get(i, j, k) } else { other.get(i, j - n, k) }
        }))
    }

    /// Assembles `[[a, b], [c, d]]` from four blocks.
    pub fn block2x2(a: &DenseTensor3, b: &DenseTensor3, c: &DenseTensor3, d: &DenseTensor3) -> Result<DenseTensor3> {
        a.hstack(b)?.vstack(&c.hstack(d)?)
    }

    // ----- reshaping -----

    /// Stacks the frontal slices vertically into an `mp x n` matrix.
    pub fn unfold(&self) -> DMatrix<f64> {
        let (m, n) = (self.m, self.n);
        DMatrix::from_fn(m * self.p, n, |r, j| self.get(r % m, j, r / m))
    }

    /// Inverse of [`unfold`](Self::unfold) for a tensor with `p` frontal slices of `m` rows.
    pub fn fold(mat: &DMatrix<f64>, m: usize, p: usize) -> Result<DenseTensor3> {
        if m == 0 || p == 0 || mat.nrows() != m * p {
            return Err(Error::Shape(format!(
                "cannot fold a {}x{} matrix into {m} rows by {p} slices",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let n = mat.ncols();
        let t = Self::from_fn(m, n, p, |i, j, k| mat[(k * m + i, j)]);
        Ok(t)
    }

    /// Column-major concatenation across frontal slices, equal to the storage order.
    pub fn vec(&self) -> &[f64] {
        &self.data
    }

    /// Turns an `m x n` matrix into an `m x 1 x n` lateral slice.
    pub fn twist(mat: &DMatrix<f64>) -> LateralSlice {
        let (m, n) = mat.shape();
        DenseTensor3 { m, n: 1, p: n, data: mat.as_slice().to_vec() }
    }

    /// Inverse of [`twist`](Self::twist).
    pub fn squeeze(&self) -> Result<DMatrix<f64>> {
        if self.n != 1 {
            return Err(Error::Shape(format!("squeeze needs a lateral slice, got {:?}", self.shape())));
        }
        Ok(DMatrix::from_column_slice(self.m, self.p, &self.data))
    }

    /// Block-circulant expansion, guarded by [`BCIRC_CAP`].
    pub fn bcirc(&self) -> Result<DMatrix<f64>> {
        self.bcirc_with_cap(BCIRC_CAP)
    }

    /// Block-circulant expansion: block `(r, c)` is frontal slice `(r - c) mod p`.
    pub fn bcirc_with_cap(&self, cap: usize) -> Result<DMatrix<f64>> {
        let (m, n, p) = self.shape();
        let (rows, cols) = (m * p, n * p);
        if rows.saturating_mul(cols) > cap {
            return Err(Error::Capacity { rows, cols, cap });
        }
        Ok(DMatrix::from_fn(rows, cols, |r, c| {
            let k = (r / m + p - c / n) % p;
            self.get(r % m, c % n, k)
        }))
    }

    // ----- norms -----

    pub fn fnorm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&self, s: f64) -> DenseTensor3 {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseTensor3 {
        DenseTensor3 { m: self.m, n: self.n, p: self.p, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    fn zip_with(&self, other: &DenseTensor3, f: impl Fn(f64, f64) -> f64) -> DenseTensor3 {
        assert_eq!(self.shape(), other.shape(), "elementwise operation on mismatched shapes");
        DenseTensor3 {
            m: self.m,
            n: self.n,
            p: self.p,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &DenseTensor3) -> f64 {
        assert_eq!(self.shape(), other.shape(), "inner product on mismatched shapes");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }
}

/// Mean squared difference `||x1 - x2||_F^2 / (m n p)`.
pub fn mse(x1: &DenseTensor3, x2: &DenseTensor3) -> Result<f64> {
    if x1.shape() != x2.shape() {
        return Err(Error::Shape(format!("mse of {:?} and {:?}", x1.shape(), x2.shape())));
    }
    let total: f64 = x1.data.iter().zip(&x2.data).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(total / x1.data.len() as f64)
}

impl Add for &DenseTensor3 {
    type Output = DenseTensor3;
    fn add(self, rhs: &DenseTensor3) -> DenseTensor3 {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &DenseTensor3 {
    type Output = DenseTensor3;
    fn sub(self, rhs: &DenseTensor3) -> DenseTensor3 {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Neg for &DenseTensor3 {
    type Output = DenseTensor3;
    fn neg(self) -> DenseTensor3 {
        self.map(|v| -v)
    }
}

impl Mul<f64> for &DenseTensor3 {
    type Output = DenseTensor3;
    fn mul(self, s: f64) -> DenseTensor3 {
        self.scale(s)
    }
}
