//! Blur simulation and restoration experiments.
//!
//! An `N x N` image becomes the lateral slice `twist(image)` of depth `N`, a
//! video of `s` frames becomes an `N x s x N` tensor, and the blur operator is
//! the `N x N x N` tensor whose frontal slice `i` is `A(i, 1) * A` for a banded
//! Gaussian Toeplitz matrix `A`.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::algebra::{identity_tensor, spectral_singular_values, tprod};
use crate::error::{Error, Result};
use crate::solver::{solve_multi, SliceStatus, SolveReport, SolverConfig};
use crate::tensor::{mse, DenseTensor3};

/// Regularization operator choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegKind {
    /// Second difference, `(m-2) x m`.
    K1,
    /// First difference, `(m-1) x m`.
    K2,
    Identity,
}

impl std::str::FromStr for RegKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "k1" => Ok(RegKind::K1),
            "k2" => Ok(RegKind::K2),
            "identity" => Ok(RegKind::Identity),
            other => Err(Error::Invalid(format!("unknown regularizer {other:?}"))),
        }
    }
}

impl std::fmt::Display for RegKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RegKind::K1 => "k1",
            RegKind::K2 => "k2",
            RegKind::Identity => "identity",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub sigma: f64,
    pub band: usize,
    pub eta: f64,
    pub regularizer: RegKind,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 256,
            sigma: 4.0,
            band: 7,
            eta: 1e-3,
            regularizer: RegKind::K1,
            seed: 1,
            solver: SolverConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.band == 0 || self.band > self.n {
            return Err(Error::Invalid(format!("band {} must lie in 1..={}", self.band, self.n)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Invalid(format!("eta must be nonnegative, got {}", self.eta)));
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    #[serde(with = "crate::json_float")]
    pub blurred_mse: f64,
    #[serde(with = "crate::json_float")]
    pub deblurred_mse: f64,
    #[serde(with = "crate::json_float")]
    pub restoring_proportion: f64,
    #[serde(with = "crate::json_float")]
    pub constraint_norm: f64,
    pub report: SolveReport,
    /// How `blurred_mse` was measured.
    pub blurred_mse_convention: String,
}

/// Tensors produced by [`simulate`].
#[derive(Debug, Clone)]
pub struct Simulation {
    pub a_true: DenseTensor3,
    pub a_observed: DenseTensor3,
    pub b_true: DenseTensor3,
    pub b_observed: DenseTensor3,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub result: ExperimentResult,
    pub simulation: Simulation,
    pub restored: DenseTensor3,
    pub statuses: Vec<SliceStatus>,
}

pub const BLURRED_MSE_CONVENTION: &str = "mse(B_observed, X_true)";

/// The banded symmetric Toeplitz matrix `toeplitz(z) / (sigma sqrt(2 pi))` with
/// `z = [exp(-d^2 / (2 sigma^2)) for d < band, then zeros]`.
pub fn gaussian_blur_matrix(n: usize, sigma: f64, band: usize) -> Result<DMatrix<f64>> {
    if band == 0 || band > n {
        return Err(Error::Invalid(format!("band {band} must lie in 1..={n}")));
    }
    let scale = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let z: Vec<f64> = (0..band).map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let d = i.abs_diff(j);
        if d < band { z[d] * scale } else { 0.0 }
    }))
}

/// Blur tensor whose frontal slice `i` is `A(i, 1) * A`.
pub fn gaussian_blur_tensor(n: usize, sigma: f64, band: usize) -> Result<DenseTensor3> {
    let a = gaussian_blur_matrix(n, sigma, band)?;
    let slices: Vec<DMatrix<f64>> = (0..n).map(|i| &a * a[(i, 0)]).collect();
    DenseTensor3::from_frontal_slices(&slices)
}

/// Condition number of every spectral slice (`inf` for singular slices).
pub fn spectral_condition_numbers(a: &DenseTensor3) -> Vec<f64> {
    spectral_singular_values(a)
        .into_iter()
        .map(|sv| {
            let smax = sv.first().copied().unwrap_or(0.0);
            let smin = sv.last().copied().unwrap_or(0.0);
            if smin > 0.0 { smax / smin } else { f64::INFINITY }
        })
        .collect()
}

/// Derives an independent seed from `seed` for stream `tag`.
pub fn sub_seed(seed: u64, tag: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX - tag);
    rng.next_u64()
}

/// Adds `eta * ||T_j||_F * E_j / ||E_j||_F` to every frontal slice `T_j`, with
/// `E_j` standard normal drawn from stream `j` of a generator seeded by `seed`.
pub fn add_noise(t: &DenseTensor3, eta: f64, seed: u64) -> DenseTensor3 {
    if eta == 0.0 {
        return t.clone();
    }
    let (m, n, p) = t.shape();
    let mn = m * n;
    let mut out = t.clone();
    let data = out.as_mut_slice();
    for j in 0..p {
        let slice = &mut data[j * mn..(j + 1) * mn];
        let norm = slice.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        let e: Vec<f64> = (0..mn).map(|_| StandardNormal.sample(&mut rng)).collect();
        let enorm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        let factor = eta * norm / enorm;
        for (v, ev) in slice.iter_mut().zip(&e) {
            *v += factor * ev;
        }
    }
    out
}

/// Regularization operator of depth `depth`; only its first frontal slice is nonzero.
pub fn reg_operator(kind: RegKind, m: usize, depth: usize) -> Result<DenseTensor3> {
    let (rows, stencil): (usize, &[f64]) = match kind {
        RegKind::K1 if m >= 3 => (m - 2, &[-0.25, 0.5, -0.25]),
        RegKind::K2 if m >= 2 => (m - 1, &[0.5, -0.5]),
        RegKind::Identity => return Ok(identity_tensor(m, depth)),
        _ => return Err(Error::Shape(format!("{kind} needs more than {m} columns"))),
    };
    Ok(DenseTensor3::from_fn(rows, m, depth, |i, j, k| {
        if k == 0 && j >= i && j - i < stencil.len() { stencil[j - i] } else { 0.0 }
    }))
}

pub fn restoring_proportion(blurred_mse: f64, deblurred_mse: f64) -> f64 {
    1.0 - deblurred_mse / blurred_mse
}

/// Builds the true and perturbed operator and observation for `x_true`.
pub fn simulate(x_true: &DenseTensor3, config: &ExperimentConfig) -> Result<Simulation> {
    config.validate()?;
    let (rows, _, depth) = x_true.shape();
    if rows != config.n || depth != config.n {
        return Err(Error::Shape(format!("data {:?} does not match operator order {}", x_true.shape(), config.n)));
    }
    let a_true = gaussian_blur_tensor(config.n, config.sigma, config.band)?;
    let b_true = tprod(&a_true, x_true)?;
    let a_observed = add_noise(&a_true, config.eta, sub_seed(config.seed, 0));
    let b_observed = add_noise(&b_true, config.eta, sub_seed(config.seed, 1));
    Ok(Simulation { a_true, a_observed, b_true, b_observed })
}

/// Collapses per-slice reports into one.
pub fn aggregate_report(statuses: &[SliceStatus], wall_time_s: f64, constraint_norm: f64) -> SolveReport {
    let reports: Vec<&SolveReport> = statuses.iter().filter_map(SliceStatus::report).collect();
    let max = |f: fn(&SolveReport) -> f64| reports.iter().map(|r| f(r)).fold(0.0, f64::max);
    SolveReport {
        iterations: reports.iter().map(|r| r.iterations).max().unwrap_or(0),
        converged: statuses.iter().all(SliceStatus::converged),
        final_relative_change: max(|r| r.final_relative_change),
        final_rho: max(|r| r.final_rho),
        wall_time_s,
        mu_fallback: reports.iter().any(|r| r.mu_fallback),
        solve_fallback: reports.iter().any(|r| r.solve_fallback),
        normal_equation_residual: max(|r| r.normal_equation_residual),
        constraint_norm,
        constraint_bound: reports.first().and_then(|r| r.constraint_bound),
        final_mu: reports.iter().map(|r| r.final_mu).fold(f64::INFINITY, f64::min),
    }
}

/// Blurs and perturbs `x_true`, restores it and scores the restoration.
pub fn run_experiment(x_true: &DenseTensor3, config: &ExperimentConfig) -> Result<Experiment> {
    if x_true.as_slice().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Invalid("data must lie in [0, 1]".into()));
    }
    let simulation = simulate(x_true, config)?;
    let k = reg_operator(config.regularizer, config.n, config.n)?;
    let clock = Instant::now();
    let solved = solve_multi(&simulation.a_observed, &simulation.b_observed, &k, &config.solver)?;
    let wall = clock.elapsed().as_secs_f64();
    let constraint_norm = tprod(&k, &solved.x)?.fnorm();
    let blurred_mse = mse(&simulation.b_observed, x_true)?;
    let deblurred_mse = mse(&solved.x, x_true)?;
    let result = ExperimentResult {
        blurred_mse,
        deblurred_mse,
        restoring_proportion: restoring_proportion(blurred_mse, deblurred_mse),
        constraint_norm,
        report: aggregate_report(&solved.statuses, wall, constraint_norm),
        blurred_mse_convention: BLURRED_MSE_CONVENTION.into(),
    };
    Ok(Experiment { result, simulation, restored: solved.x, statuses: solved.statuses })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_one_is_scaled_identity() {
        let a = gaussian_blur_tensor(6, 2.0, 1).unwrap();
        let c = 1.0 / (2.0 * (2.0 * std::f64::consts::PI).sqrt());
        assert!((a.frontal(0).unwrap() - DMatrix::identity(6, 6) * (c * c)).norm() < 1e-15);
        for k in 1..6 {
            assert_eq!(a.frontal(k).unwrap().norm(), 0.0);
        }
        for cond in spectral_condition_numbers(&a) {
            assert!((cond - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn blur_slices_are_symmetric_and_banded() {
        let a = gaussian_blur_tensor(32, 4.0, 7).unwrap();
        for k in 0..32 {
            let s = a.frontal(k).unwrap();
            assert_eq!(s.clone_owned(), s.transpose());
            if k >= 7 {
                assert_eq!(s.norm(), 0.0);
            }
        }
    }

    #[test]
    fn noise_has_exact_relative_size() {
        let t = gaussian_blur_tensor(12, 3.0, 4).unwrap();
        assert_eq!(add_noise(&t, 0.0, 5), t);
        let noisy = add_noise(&t, 0.01, 5);
        for j in 0..12 {
            let diff = (noisy.frontal(j).unwrap() - t.frontal(j).unwrap()).norm();
            let base = t.frontal(j).unwrap().norm();
            if base == 0.0 {
                assert_eq!(diff, 0.0);
            } else {
                assert!((diff / base - 0.01).abs() <= 1e-12 * 0.01 + 1e-15);
            }
        }
        assert_eq!(add_noise(&t, 0.01, 5), noisy);
        assert_ne!(add_noise(&t, 0.01, 6), noisy);
        assert_ne!(sub_seed(5, 0), sub_seed(5, 1));
    }

    #[test]
    fn difference_operators() {
        let k1 = reg_operator(RegKind::K1, 5, 3).unwrap();
        let expect = DMatrix::from_row_slice(
            3,
            5,
            &[-1.0, 2.0, -1.0, 0.0, 0.0, 0.0, -1.0, 2.0, -1.0, 0.0, 0.0, 0.0, -1.0, 2.0, -1.0],
        ) / 4.0;
        assert_eq!(k1.frontal(0).unwrap().into_owned(), expect);
        assert_eq!(k1.frontal(1).unwrap().norm(), 0.0);
        let ones = DenseTensor3::from_fn(5, 1, 3, |_, _, _| 1.0);
        assert_eq!(tprod(&k1, &ones).unwrap().fnorm(), 0.0);
        let k2 = reg_operator(RegKind::K2, 5, 3).unwrap();
        assert_eq!(k2.shape(), (4, 5, 3));
        assert!(tprod(&k2, &ones).unwrap().fnorm() < 1e-15);
        assert!(reg_operator(RegKind::K1, 2, 3).is_err());
        assert!(reg_operator(RegKind::K2, 1, 3).is_err());
    }

    #[test]
    fn restoring_proportion_arithmetic() {
        assert!((restoring_proportion(0.0596, 0.0056) - 0.9060).abs() < 5e-4);
    }
}
