//! Mode-3 Fourier representation of a tensor.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::tensor::DenseTensor3;

/// Relative threshold on the imaginary part discarded by [`from_spectral`].
pub const IMAG_RESIDUE_TOL: f64 = 1e-9;

/// The `p` complex frontal slices of the mode-3 transform.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTensor3 {
    m: usize,
    n: usize,
    slices: Vec<DMatrix<Complex64>>,
}

impl SpectralTensor3 {
    pub fn from_slices(slices: Vec<DMatrix<Complex64>>) -> Result<Self> {
        let first = slices.first().ok_or_else(|| Error::Shape("no spectral slices".into()))?;
        let (m, n) = first.shape();
        if slices.iter().any(|s| s.shape() != (m, n)) {
            return Err(Error::Shape("spectral slices differ in shape".into()));
        }
        Ok(SpectralTensor3 { m, n, slices })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.m, self.n, self.slices.len())
    }

    pub fn depth(&self) -> usize {
        self.slices.len()
    }

    pub fn slice(&self, i: usize) -> &DMatrix<Complex64> {
        &self.slices[i]
    }

    pub fn slices(&self) -> &[DMatrix<Complex64>] {
        &self.slices
    }

    pub fn into_slices(self) -> Vec<DMatrix<Complex64>> {
        self.slices
    }

    /// Largest relative deviation from `slice[i] = conj(slice[p - i])`.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        let p = self.depth();
        (1..p)
            .map(|i| {
                let a = &self.slices[i];
                let b = self.slices[p - i].map(|z| z.conj());
                let scale = a.norm().max(f64::MIN_POSITIVE);
                (a - b).norm() / scale
            })
            .fold(0.0, f64::max)
    }

    /// Per-slice conjugate transpose, the transform of the tensor transpose.
    pub fn adjoint(&self) -> SpectralTensor3 {
        SpectralTensor3 { m: self.n, n: self.m, slices: self.slices.iter().map(|s| s.adjoint()).collect() }
    }
}

/// Transforms every tube `(i, j, :)` with a length-`p` DFT.
pub fn to_spectral(a: &DenseTensor3) -> SpectralTensor3 {
    let (m, n, p) = a.shape();
    let mut slices = vec![DMatrix::<Complex64>::zeros(m, n); p];
    let fft = FftPlanner::<f64>::new().plan_fft_forward(p);
    let mut tube = vec![Complex64::new(0.0, 0.0); p];
    for j in 0..n {
        for i in 0..m {
            for (k, z) in tube.iter_mut().enumerate() {
                *z = Complex64::new(a.get(i, j, k), 0.0);
            }
            fft.process(&mut tube);
            for (k, z) in tube.iter().enumerate() {
                slices[k][(i, j)] = *z;
            }
        }
    }
    SpectralTensor3 { m, n, slices }
}

/// Inverse transform; fails if the result carries a non-negligible imaginary part.
pub fn from_spectral(s: &SpectralTensor3) -> Result<DenseTensor3> {
    let (m, n, p) = s.shape();
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(p);
    let mut tube = vec![Complex64::new(0.0, 0.0); p];
    let mut out = DenseTensor3::zeros(m, n, p);
    let mut imag2 = 0.0;
    let scale = 1.0 / p as f64;
    for j in 0..n {
        for i in 0..m {
            for (k, z) in tube.iter_mut().enumerate() {
                *z = s.slices[k][(i, j)];
            }
            ifft.process(&mut tube);
            for (k, z) in tube.iter().enumerate() {
                out.set(i, j, k, z.re * scale);
                imag2 += (z.im * scale).powi(2);
            }
        }
    }
    let residue = imag2.sqrt();
    let threshold = IMAG_RESIDUE_TOL * out.fnorm().max(f64::MIN_POSITIVE);
    if residue > threshold {
        return Err(Error::NotRealSpectral { residue, threshold });
    }
    if out.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(out.as_slice().iter().position(|v| !v.is_finite()).unwrap()));
    }
    Ok(out)
}

/// Number of slices that determine a conjugate-symmetric spectrum.
pub fn half_len(p: usize) -> usize {
    p / 2 + 1
}

/// Evaluates `f` on slices `0..=p/2` and fills the rest by conjugation.
///
/// Only valid when the full output is known to be conjugate symmetric, i.e.
/// when `f` maps conjugate inputs to conjugate outputs.
pub fn map_half<F>(p: usize, f: F) -> Vec<DMatrix<Complex64>>
where
    F: Fn(usize) -> DMatrix<Complex64> + Sync,
{
    use rayon::prelude::*;
    let head: Vec<DMatrix<Complex64>> = (0..half_len(p).min(p)).into_par_iter().map(&f).collect();
    let mut out = Vec::with_capacity(p);
    out.extend(head.iter().cloned());
    for i in out.len()..p {
        out.push(head[p - i].map(|z| z.conj()));
    }
    out
}

/// Copies a real matrix into a complex one.
pub fn complexify(a: &DMatrix<f64>) -> DMatrix<Complex64> {
    a.map(|v| Complex64::new(v, 0.0))
}
