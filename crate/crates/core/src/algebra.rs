//! T-product algebra.
//!
//! Every operation here works slice by slice in the mode-3 Fourier domain.
//! Because all public tensors are real, only slices `0..=p/2` are computed and
//! the remaining ones are filled by conjugation.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{from_spectral, half_len, map_half, to_spectral, SpectralTensor3};
use crate::tensor::{DenseTensor3, Tube};

/// Spectral factors of [`tsvd`], assembled back into real tensors.
#[derive(Debug, Clone)]
pub struct TSvdFactors {
    /// `m x m x p`, orthogonal under the T-product.
    pub u: DenseTensor3,
    /// `m x n x p`, f-diagonal.
    pub s: DenseTensor3,
    /// `n x n x p`, orthogonal under the T-product.
    pub v: DenseTensor3,
}

/// Singular values at or below this bound are treated as zero.
pub fn rank_tolerance(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * sigma_max
}

fn check_inner(a: &DenseTensor3, b: &DenseTensor3) -> Result<()> {
    let (_, n, p) = a.shape();
    let (n2, _, p2) = b.shape();
    if n != n2 || p != p2 {
        return Err(Error::Shape(format!(
            "T-product of {:?} and {:?}: inner dimension or depth differs",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// The T-product `a * b` computed with the FFT along mode 3.
pub fn tprod(a: &DenseTensor3, b: &DenseTensor3) -> Result<DenseTensor3> {
    check_inner(a, b)?;
    let (sa, sb) = (to_spectral(a), to_spectral(b));
    let slices = map_half(a.depth(), |i| sa.slice(i) * sb.slice(i));
    from_spectral(&SpectralTensor3::from_slices(slices)?)
}

/// Product of several tensors, evaluated left to right.
pub fn tprod_chain(factors: &[&DenseTensor3]) -> Result<DenseTensor3> {
    let (first, rest) = factors.split_first().ok_or_else(|| Error::Invalid("empty product".into()))?;
    rest.iter().try_fold((*first).clone(), |acc, f| tprod(&acc, f))
}

/// Tensor transpose: transpose each frontal slice and reverse slices `2..p`.
pub fn ttranspose(a: &DenseTensor3) -> DenseTensor3 {
    let (m, n, p) = a.shape();
    DenseTensor3::from_fn(n, m, p, |i, j, k| a.get(j, i, (p - k) % p))
}

/// Conjugate transpose. Public tensors are real, so this equals [`ttranspose`];
/// the complex case lives on [`SpectralTensor3::adjoint`].
pub fn tconj_transpose(a: &DenseTensor3) -> DenseTensor3 {
    ttranspose(a)
}

/// Identity tensor: the first frontal slice is `I_n`, the rest are zero.
pub fn identity_tensor(n: usize, p: usize) -> DenseTensor3 {
    DenseTensor3::from_fn(n, n, p, |i, j, k| if k == 0 && i == j { 1.0 } else { 0.0 })
}

fn is_real(a: &DMatrix<Complex64>) -> bool {
    a.iter().all(|z| z.im == 0.0)
}

/// Full SVD of one spectral slice: `(U, sigma, V)` with `a = U diag(sigma) V^H`,
/// sigma nonincreasing and the first nonzero entry of every column of `U` real
/// and nonnegative.
///
/// Backed by faer; the dynamic-size SVD in nalgebra 0.35 returns a wrong
/// factorization for some rank-deficient inputs.
pub(crate) fn slice_svd(a: &DMatrix<Complex64>) -> Result<(DMatrix<Complex64>, Vec<f64>, DMatrix<Complex64>)> {
    let (m, n) = a.shape();
    let failed = |_| Error::SvdNoConvergence { rows: m, cols: n };
    let (u, sigma, v) = if is_real(a) {
        let svd = faer::Mat::<f64>::from_fn(m, n, |i, j| a[(i, j)].re).svd().map_err(failed)?;
        let (u, v) = (svd.U(), svd.V());
        (
            DMatrix::from_fn(m, m, |i, j| Complex64::new(u[(i, j)], 0.0)),
            svd.S().column_vector().iter().copied().collect::<Vec<f64>>(),
            DMatrix::from_fn(n, n, |i, j| Complex64::new(v[(i, j)], 0.0)),
        )
    } else {
        let svd = faer::Mat::<Complex64>::from_fn(m, n, |i, j| a[(i, j)]).svd().map_err(failed)?;
        let (u, v) = (svd.U(), svd.V());
        (
            DMatrix::from_fn(m, m, |i, j| u[(i, j)]),
            svd.S().column_vector().iter().map(|z| z.re).collect::<Vec<f64>>(),
            DMatrix::from_fn(n, n, |i, j| v[(i, j)]),
        )
    };
    let (mut u, mut v) = (u, v);
    for d in 0..sigma.len() {
        let pivot = u.column(d).iter().copied().find(|z| z.norm() > 1e-12).unwrap_or(Complex64::new(1.0, 0.0));
        let phase = pivot.conj() / pivot.norm();
        for mut col in [u.column_mut(d), v.column_mut(d)] {
            col *= phase;
        }
    }
    Ok((u, sigma, v))
}

/// Singular values of every spectral slice, each list nonincreasing.
pub fn spectral_singular_values(a: &DenseTensor3) -> Vec<Vec<f64>> {
    let s = to_spectral(a);
    s.slices()
        .iter()
        .map(|sl| {
            let mut v: Vec<f64> = sl.singular_values().iter().copied().collect();
            v.sort_by(|x, y| y.total_cmp(x));
            v
        })
        .collect()
}

/// T-SVD `a = U * S * V^T`.
pub fn tsvd(a: &DenseTensor3) -> Result<TSvdFactors> {
    let (m, n, p) = a.shape();
    let sa = to_spectral(a);
    let parts: Vec<_> = {
        use rayon::prelude::*;
        (0..crate::spectral::half_len(p).min(p)).into_par_iter().map(|i| slice_svd(sa.slice(i))).collect::<Result<_>>()?
    };
    let mut us = Vec::with_capacity(p);
    let mut ss = Vec::with_capacity(p);
    let mut vs = Vec::with_capacity(p);
    for i in 0..p {
        let (src, conj) = if i < parts.len() { (i, false) } else { (p - i, true) };
        let (u, sigma, v) = &parts[src];
        let mut s = DMatrix::<Complex64>::zeros(m, n);
        for (d, &val) in sigma.iter().enumerate() {
            s[(d, d)] = Complex64::new(val, 0.0);
        }
        if conj {
            us.push(u.map(|z| z.conj()));
            vs.push(v.map(|z| z.conj()));
        } else {
            us.push(u.clone());
            vs.push(v.clone());
        }
        ss.push(s);
    }
    Ok(TSvdFactors {
        u: from_spectral(&SpectralTensor3::from_slices(us)?)?,
        s: from_spectral(&SpectralTensor3::from_slices(ss)?)?,
        v: from_spectral(&SpectralTensor3::from_slices(vs)?)?,
    })
}

fn slice_pinv(a: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let (m, n) = a.shape();
    let (u, sigma, v) = slice_svd(a)?;
    let smax = sigma.first().copied().unwrap_or(0.0);
    let tol = rank_tolerance(m, n, smax);
    let mut out = DMatrix::<Complex64>::zeros(n, m);
    for (d, &s) in sigma.iter().enumerate() {
        if s > tol {
            out += v.column(d) * u.column(d).adjoint() * Complex64::new(1.0 / s, 0.0);
        }
    }
    Ok(out)
}

/// Moore-Penrose inverse, computed per spectral slice with the rank tolerance.
pub fn tpinv(a: &DenseTensor3) -> Result<DenseTensor3> {
    let sa = to_spectral(a);
    let p = a.depth();
    let half = (0..half_len(p).min(p)).map(|i| slice_pinv(sa.slice(i))).collect::<Result<Vec<_>>>()?;
    let slices = map_half(p, |i| half[i].clone());
    from_spectral(&SpectralTensor3::from_slices(slices)?)
}

/// Inverse of a frontal-square tensor.
pub fn tinv(a: &DenseTensor3) -> Result<DenseTensor3> {
    let (m, n, p) = a.shape();
    if m != n {
        return Err(Error::Shape(format!("tinv needs frontal-square slices, got {m}x{n}")));
    }
    let sa = to_spectral(a);
    for i in 0..crate::spectral::half_len(p).min(p) {
        let sv = sa.slice(i).singular_values();
        let smax = sv.max();
        let smin = sv.min();
        if smin <= rank_tolerance(m, n, smax) || smax == 0.0 {
            return Err(Error::Singular { slice: i, sigma_min: smin });
        }
    }
    let slices = map_half(p, |i| sa.slice(i).clone().try_inverse().expect("slice checked nonsingular"));
    from_spectral(&SpectralTensor3::from_slices(slices)?)
}

fn expect_tube(t: &DenseTensor3) -> Result<()> {
    if !t.is_tube() {
        return Err(Error::Shape(format!("expected a 1x1xp tube, got {:?}", t.shape())));
    }
    Ok(())
}

/// Inverse of a tube under the T-product.
pub fn tube_inv(t: &Tube) -> Result<Tube> {
    expect_tube(t)?;
    let st = to_spectral(t);
    let values: Vec<Complex64> = st.slices().iter().map(|s| s[(0, 0)]).collect();
    let vmax = values.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let tol = rank_tolerance(1, 1, vmax);
    if let Some((i, z)) = values.iter().enumerate().find(|(_, z)| z.norm() <= tol || vmax == 0.0) {
        return Err(Error::Singular { slice: i, sigma_min: z.norm() });
    }
    let slices = values.iter().map(|z| DMatrix::from_element(1, 1, z.inv())).collect();
    from_spectral(&SpectralTensor3::from_slices(slices)?)
}

/// Tube product, the T-product restricted to tubes.
pub fn tube_mul(a: &Tube, b: &Tube) -> Result<Tube> {
    expect_tube(a)?;
    expect_tube(b)?;
    tprod(a, b)
}

/// `t (x) I_m`: the `m x m x p` tensor whose spectral slices are `t_i I_m`.
pub fn tube_kron_identity(t: &Tube, m: usize) -> Result<DenseTensor3> {
    expect_tube(t)?;
    Ok(DenseTensor3::from_fn(m, m, t.depth(), |i, j, k| if i == j { t.get(0, 0, k) } else { 0.0 }))
}
