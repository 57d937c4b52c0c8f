//! Fixed-point quantities written directly with T-products.
//!
//! These are the reference forms. The iterations evaluate the same
//! expressions slice-wise in the Fourier domain.

use crate::algebra::{identity_tensor, tprod, tprod_chain, ttranspose, tube_inv, tube_kron_identity};
use crate::error::{Error, Result};
use crate::tensor::{DenseTensor3, LateralSlice, Tube};

use super::MuMode;

/// The multiplier `mu`, either a tube or a scalar.
#[derive(Debug, Clone, PartialEq)]
pub enum Multiplier {
    Scalar(f64),
    Tube(Tube),
}

impl Multiplier {
    /// `mu * t`.
    pub fn apply(&self, t: &Tube) -> Result<Tube> {
        match self {
            Multiplier::Scalar(s) => Ok(t.scale(*s)),
            Multiplier::Tube(mu) => tprod(mu, t),
        }
    }

    /// The scalar, or the leading entry of the tube (the mean of its spectrum).
    pub fn leading(&self) -> f64 {
        match self {
            Multiplier::Scalar(s) => *s,
            Multiplier::Tube(t) => t.get(0, 0, 0),
        }
    }

    /// As a tube of depth `p`; a scalar becomes `s * I`.
    pub fn to_tube(&self, p: usize) -> Tube {
        match self {
            Multiplier::Scalar(s) => identity_tensor(1, p).scale(*s),
            Multiplier::Tube(t) => t.clone(),
        }
    }
}

/// `R = (B - A*X) * (I + X^T*X)^{-1}`.
pub fn residual_slice(a: &DenseTensor3, b: &LateralSlice, x: &LateralSlice) -> Result<LateralSlice> {
    let p = a.depth();
    let gram = &identity_tensor(1, p) + &tprod(&ttranspose(x), x)?;
    let inv = tube_inv(&gram).map_err(|e| Error::Invalid(format!("I + X^T*X is not invertible: {e}")))?;
    tprod(&(b - &tprod(a, x)?), &inv)
}

fn kx_gram(k: &DenseTensor3, x: &LateralSlice) -> Result<Tube> {
    let kx = tprod(k, x)?;
    tprod(&ttranspose(&kx), &kx)
}

/// Fits `mu` to `mu * X^T*K^T*K*X = B^T*R - R^T*R`.
///
/// Returns the multiplier and whether the tubewise mode fell back to the
/// scalar fit.
pub fn update_multiplier(
    x: &LateralSlice,
    r: &LateralSlice,
    b: &LateralSlice,
    k: &DenseTensor3,
    mode: MuMode,
) -> Result<(Multiplier, bool)> {
    let t = kx_gram(k, x)?;
    let rhs = &tprod(&ttranspose(b), r)? - &tprod(&ttranspose(r), r)?;
    let scalar = || {
        let denom = t.dot(&t);
        Multiplier::Scalar(if denom > 0.0 { rhs.dot(&t) / denom } else { 0.0 })
    };
    match mode {
        MuMode::ScalarProjection => Ok((scalar(), false)),
        MuMode::Tubewise => match tube_inv(&t) {
            Ok(inv) => Ok((Multiplier::Tube(tprod(&rhs, &inv)?), false)),
            Err(Error::Singular { .. }) => Ok((scalar(), true)),
            Err(e) => Err(e),
        },
    }
}

/// `(lambda_I, lambda_K)` for the current iterate.
///
/// `lambda_I = mu*X^T*K^T*K*X - R^T*R*X^T*X - R^T*B` and
/// `lambda_K = mu*(I + X^T*X)`.
pub fn update_lambdas(
    x: &LateralSlice,
    r: &LateralSlice,
    b: &LateralSlice,
    k: &DenseTensor3,
    mu: &Multiplier,
) -> Result<(Tube, Tube)> {
    let p = x.depth();
    let xtx = tprod(&ttranspose(x), x)?;
    let t = kx_gram(k, x)?;
    let rtr = tprod(&ttranspose(r), r)?;
    let lambda_i = &(&mu.apply(&t)? - &tprod(&rtr, &xtx)?) - &tprod(&ttranspose(r), b)?;
    let lambda_k = mu.apply(&(&identity_tensor(1, p) + &xtx))?;
    Ok((lambda_i, lambda_k))
}

/// The `(n+1) x (n+1) x p` block tensor
/// `[[A^T*A + K^T*K*(lambda_K (x) I), A^T*B], [B^T*A, -lambda_K*X^T*K^T*K*X + B^T*B]]`.
pub fn build_psi(
    a: &DenseTensor3,
    b: &LateralSlice,
    k: &DenseTensor3,
    x: &LateralSlice,
    lambda_k: &Tube,
) -> Result<DenseTensor3> {
    let n = a.cols();
    let (at, bt, kt) = (ttranspose(a), ttranspose(b), ttranspose(k));
    let top_left = &tprod(&at, a)? + &tprod_chain(&[&kt, k, &tube_kron_identity(lambda_k, n)?])?;
    let top_right = tprod(&at, b)?;
    let bottom_left = tprod(&bt, a)?;
    let bottom_right = &tprod(&bt, b)? - &tprod(lambda_k, &kx_gram(k, x)?)?;
    DenseTensor3::block2x2(&top_left, &top_right, &bottom_left, &bottom_right)
}

/// `[X; -I]`.
pub(crate) fn extended(x: &LateralSlice) -> Result<DenseTensor3> {
    x.vstack(&identity_tensor(1, x.depth()).scale(-1.0))
}

/// `||Psi*[X; -I] + [X; -I]*lambda_I||_F`.
pub fn eigen_residual(psi: &DenseTensor3, x: &LateralSlice, lambda_i: &Tube) -> Result<f64> {
    let v = extended(x)?;
    Ok((&tprod(psi, &v)? + &tprod(&v, lambda_i)?).fnorm())
}

/// `||(A^T*A + lambda_I (x) I + K^T*K*(lambda_K (x) I))*X - A^T*B||_F`.
pub fn normal_equation_residual(
    a: &DenseTensor3,
    b: &LateralSlice,
    k: &DenseTensor3,
    x: &LateralSlice,
    lambda_i: &Tube,
    lambda_k: &Tube,
) -> Result<f64> {
    let n = a.cols();
    let (at, kt) = (ttranspose(a), ttranspose(k));
    let op = &(&tprod(&at, a)? + &tube_kron_identity(lambda_i, n)?)
        + &tprod_chain(&[&kt, k, &tube_kron_identity(lambda_k, n)?])?;
    Ok((&tprod(&op, x)? - &tprod(&at, b)?).fnorm())
}
