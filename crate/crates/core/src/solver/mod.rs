//! Tensor regularized total least squares.
//!
//! The problem is `min ||[E_A, E_B]||_F` subject to `(A + E_A) * X = B + E_B`
//! and `||K * X||_F <= delta`, for a lateral slice `X`. Its stationary points
//! satisfy a nonlinear eigenproblem in the block tensor `Psi(X)`; the two
//! schemes here iterate on it, one slice-wise in the Fourier domain and one on
//! the unfolded block-circulant matrices.

mod matrix_scheme;
mod multi;
mod quantities;
mod spectral_problem;
mod tensor_scheme;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor3, LateralSlice, Tube};

pub use matrix_scheme::{build_gamma_lambda, iterate_matrix};
pub use multi::{solve_multi, MultiSolution, SliceStatus};
pub use quantities::{
    build_psi, eigen_residual, normal_equation_residual, residual_slice, update_lambdas, update_multiplier, Multiplier,
};
pub use tensor_scheme::iterate_tensor;

/// Which of the two iterations to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Per-spectral-slice iteration on `Psi`.
    Tensor,
    /// Inverse iteration on the unfolded `Gamma` / `Lambda` matrices.
    Matrix,
}

/// Update applied to `[X; -I]` by the tensor scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorStep {
    /// `Psi * [X; -I]`.
    Power,
    /// Solve `Psi * Y = [X; -I]`.
    Inverse,
}

/// How the trailing block of the updated vector is turned back into `-I`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide by the single entry `Y(n+1, 1, 1)`.
    ScalarEntry,
    /// Right-multiply by the T-inverse of the trailing tube.
    Tube,
}

/// How the multiplier `mu` is fitted to its steady-state tube equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuMode {
    /// Solve the tube equation exactly; falls back to `ScalarProjection`
    /// when `X^T*K^T*K*X` is spectrally singular.
    Tubewise,
    /// Least-squares scalar fit of the tube equation.
    ScalarProjection,
}

/// Initial iterate derived from `A^T * B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartRule {
    /// `A^T * B` scaled to unit Frobenius norm.
    UnitNorm,
    /// `A^T * B` scaled by `c` minimizing `||c A*(A^T*B) - B||_F`.
    LeastSquaresScaled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iter: usize,
    /// Relative-change threshold, also used as the threshold on `rho`.
    pub tol: f64,
    pub scheme: Scheme,
    pub step: TensorStep,
    /// Adds `lambda_I` to the diagonal of the system solved by inverse steps.
    pub shifted: bool,
    pub normalization: Normalization,
    pub mu_mode: MuMode,
    pub start: StartRule,
    /// Bound on `||K*X||_F`; reported against, never enforced.
    pub constraint_bound: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iter: 500,
            tol: 1e-8,
            scheme: Scheme::Tensor,
            step: TensorStep::Inverse,
            shifted: false,
            normalization: Normalization::Tube,
            mu_mode: MuMode::ScalarProjection,
            start: StartRule::LeastSquaresScaled,
            constraint_bound: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Invalid(format!("tolerance must be positive, got {}", self.tol)));
        }
        if let Some(d) = self.constraint_bound {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Invalid(format!("constraint bound must be positive, got {d}")));
            }
        }
        Ok(())
    }
}

/// Solver iterate and the quantities derived from it.
#[derive(Debug, Clone)]
pub struct RtlsState {
    pub x: LateralSlice,
    pub r: LateralSlice,
    pub lambda_i: Tube,
    pub lambda_k: Tube,
    pub mu: Multiplier,
    pub rho: f64,
    pub iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    #[serde(with = "crate::json_float")]
    pub final_relative_change: f64,
    #[serde(with = "crate::json_float")]
    pub final_rho: f64,
    #[serde(with = "crate::json_float")]
    pub wall_time_s: f64,
    /// Tubewise `mu` fell back to the scalar fit at least once.
    pub mu_fallback: bool,
    /// A linear solve fell back to least squares at least once.
    pub solve_fallback: bool,
    /// `||(A^T*A + lambda_I (x) I + K^T*K*(lambda_K (x) I))*X - A^T*B||_F / ||A^T*B||_F`.
    #[serde(with = "crate::json_float")]
    pub normal_equation_residual: f64,
    /// `||K*X||_F`.
    #[serde(with = "crate::json_float")]
    pub constraint_norm: f64,
    pub constraint_bound: Option<f64>,
    /// [`Multiplier::leading`] of the final `mu`; the smallest over slices
    /// when aggregated. Near zero the solution is effectively unregularized.
    #[serde(with = "crate::json_float")]
    pub final_mu: f64,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: LateralSlice,
    pub state: RtlsState,
    pub report: SolveReport,
}

pub(crate) fn check_problem(a: &DenseTensor3, b: &LateralSlice, k: &DenseTensor3) -> Result<()> {
    let (m, n, p) = a.shape();
    if b.shape() != (m, 1, p) {
        return Err(Error::Shape(format!("observation {:?} does not match operator {:?}", b.shape(), a.shape())));
    }
    if k.cols() != n || k.depth() != p {
        return Err(Error::Shape(format!("regularizer {:?} does not match operator {:?}", k.shape(), a.shape())));
    }
    Ok(())
}

/// Dispatches on [`SolverConfig::scheme`].
pub fn solve(a: &DenseTensor3, b: &LateralSlice, k: &DenseTensor3, config: &SolverConfig) -> Result<Solution> {
    match config.scheme {
        Scheme::Tensor => iterate_tensor(a, b, k, config),
        Scheme::Matrix => iterate_matrix(a, b, k, config),
    }
}
