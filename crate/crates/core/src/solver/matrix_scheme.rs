use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::algebra::{rank_tolerance, tprod, ttranspose, tube_inv, tube_kron_identity};
use crate::error::{Error, Result};
use crate::tensor::{DenseTensor3, LateralSlice, Tube, BCIRC_CAP};

use super::quantities::{build_psi, normal_equation_residual, residual_slice, update_lambdas, update_multiplier};
use super::{check_problem, Multiplier, Normalization, RtlsState, Solution, SolveReport, SolverConfig, StartRule};

/// Unfolded system matrices `(Gamma, Lambda)`, both `(np+p) x (np+p)`.
///
/// `Gamma = [[M, N], [N^T, P]]` holds the block-circulant expansions of the
/// blocks of `Psi`; `Lambda = blockdiag(bcirc(lambda_I (x) I), bcirc(lambda_I))`.
pub fn build_gamma_lambda(
    a: &DenseTensor3,
    b: &LateralSlice,
    k: &DenseTensor3,
    x: &LateralSlice,
    lambda_i: &Tube,
    lambda_k: &Tube,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (_, n, p) = a.shape();
    let size = n * p + p;
    if size.saturating_mul(size) > BCIRC_CAP {
        return Err(Error::Capacity { rows: size, cols: size, cap: BCIRC_CAP });
    }
    let psi = build_psi(a, b, k, x, lambda_k)?;
    let m_block = psi.sub_block(0, n, 0, n)?.bcirc()?;
    let n_block = psi.sub_block(0, n, n, n + 1)?.bcirc()?;
    let p_block = psi.sub_block(n, n + 1, n, n + 1)?.bcirc()?;
    let mut gamma = DMatrix::zeros(size, size);
    gamma.view_mut((0, 0), (n * p, n * p)).copy_from(&m_block);
    gamma.view_mut((0, n * p), (n * p, p)).copy_from(&n_block);
    gamma.view_mut((n * p, 0), (p, n * p)).copy_from(&n_block.transpose());
    gamma.view_mut((n * p, n * p), (p, p)).copy_from(&p_block);
    let mut lambda = DMatrix::zeros(size, size);
    lambda.view_mut((0, 0), (n * p, n * p)).copy_from(&tube_kron_identity(lambda_i, n)?.bcirc()?);
    lambda.view_mut((n * p, n * p), (p, p)).copy_from(&lambda_i.bcirc()?);
    Ok((gamma, lambda))
}

struct Derived {
    r: LateralSlice,
    mu: Multiplier,
    lambda_i: Tube,
    lambda_k: Tube,
    fell_back: bool,
}

fn derive(a: &DenseTensor3, b: &LateralSlice, k: &DenseTensor3, x: &LateralSlice, config: &SolverConfig) -> Result<Derived> {
    let r = residual_slice(a, b, x)?;
    let (mu, fell_back) = update_multiplier(x, &r, b, k, config.mu_mode)?;
    let (lambda_i, lambda_k) = update_lambdas(x, &r, b, k, &mu)?;
    Ok(Derived { r, mu, lambda_i, lambda_k, fell_back })
}

fn start(a: &DenseTensor3, b: &LateralSlice, rule: StartRule) -> Result<LateralSlice> {
    let x0 = tprod(&ttranspose(a), b)?;
    let scale = match rule {
        StartRule::UnitNorm => {
            let nrm = x0.fnorm();
            if nrm > 0.0 { 1.0 / nrm } else { 0.0 }
        }
        StartRule::LeastSquaresScaled => {
            let ax = tprod(a, &x0)?;
            let den = ax.dot(&ax);
            if den > 0.0 { ax.dot(b) / den } else { 0.0 }
        }
    };
    Ok(x0.scale(scale))
}

fn solve_dense(system: &DMatrix<f64>, z: &DVector<f64>, fallback: &mut bool) -> DVector<f64> {
    match system.clone().lu().solve(z) {
        Some(y) if y.iter().all(|v| v.is_finite()) => y,
        _ => {
            *fallback = true;
            let svd = system.clone().svd(true, true);
            let tol = rank_tolerance(system.nrows(), system.ncols(), svd.singular_values.max());
            svd.solve(z, tol).unwrap_or_else(|_| DVector::zeros(z.len()))
        }
    }
}

/// `unfold([X; -I])` with the identity tube written as `e_1`.
fn extended(x: &LateralSlice, np: usize, p: usize) -> DVector<f64> {
    let mut z = DVector::zeros(np + p);
    z.rows_mut(0, np).copy_from_slice(x.as_slice());
    z[np] = -1.0;
    z
}

/// Inverse iteration on the unfolded system.
///
/// Solves `(Gamma + Lambda) y = z` (or `Gamma y = z` when `config.shifted`
/// is false), reads `X` off `y`, sets `z` to the normalized `y` and tracks
/// `rho = ||Gamma z + Lambda z||^2`. Stops when the relative change or `rho`
/// falls to `config.tol`.
pub fn iterate_matrix(a: &DenseTensor3, b: &LateralSlice, k: &DenseTensor3, config: &SolverConfig) -> Result<Solution> {
    check_problem(a, b, k)?;
    config.validate()?;
    let clock = Instant::now();
    let (_, n, p) = a.shape();
    let np = n * p;

    let mut x = start(a, b, config.start)?;
    let mut d = derive(a, b, k, &x, config)?;
    let mut mu_fallback = d.fell_back;
    let mut solve_fallback = false;
    let (mut gamma, mut lambda) = build_gamma_lambda(a, b, k, &x, &d.lambda_i, &d.lambda_k)?;

    let mut z = extended(&x, np, p);
    z /= 1.0 + x.dot(&x);
    let mut rho = (&gamma * &z + &lambda * &z).norm_squared();
    let mut change = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iter {
        let system = if config.shifted { &gamma + &lambda } else { gamma.clone() };
        let y = solve_dense(&system, &z, &mut solve_fallback);
        let head = DenseTensor3::from_vec(n, 1, p, y.rows(0, np).iter().copied().collect())
            .map_err(|_| Error::Divergence(iterations + 1))?;
        let next = match config.normalization {
            Normalization::ScalarEntry => {
                let entry = y[np];
                if entry.abs() <= 1e-14 * y.norm() {
                    return Err(Error::DegenerateIterate { iteration: iterations, normalizer: entry.abs() });
                }
                head.scale(-1.0 / entry)
            }
            Normalization::Tube => {
                let tail = DenseTensor3::tube(&y.as_slice()[np..])?;
                let inv = tube_inv(&tail).map_err(|_| Error::DegenerateIterate {
                    iteration: iterations,
                    normalizer: tail.fnorm(),
                })?;
                tprod(&head, &inv)?.scale(-1.0)
            }
        };
        iterations += 1;
        let base = x.fnorm();
        let delta = (&next - &x).fnorm();
        change = if base > 0.0 { delta / base } else { delta };
        if !change.is_finite() {
            return Err(Error::Divergence(iterations));
        }
        x = next;
        d = derive(a, b, k, &x, config)?;
        mu_fallback |= d.fell_back;
        // In tube mode y equals [X; -I] up to a per-spectral-slice factor.
        // Rebuilding z from X keeps slices from drifting apart in scale.
        z = match config.normalization {
            Normalization::ScalarEntry => &y / y.norm(),
            Normalization::Tube => {
                let v = extended(&x, np, p);
                let nrm = v.norm();
                v / nrm
            }
        };
        (gamma, lambda) = build_gamma_lambda(a, b, k, &x, &d.lambda_i, &d.lambda_k)?;
        rho = (&gamma * &z + &lambda * &z).norm_squared();
        if change <= config.tol || rho <= config.tol {
            converged = true;
            break;
        }
    }

    let atb = tprod(&ttranspose(a), b)?.fnorm();
    let ne = normal_equation_residual(a, b, k, &x, &d.lambda_i, &d.lambda_k)?;
    let report = SolveReport {
        iterations,
        converged,
        final_relative_change: change,
        final_rho: rho,
        wall_time_s: clock.elapsed().as_secs_f64(),
        mu_fallback,
        solve_fallback,
        normal_equation_residual: if atb > 0.0 { ne / atb } else { ne },
        constraint_norm: tprod(k, &x)?.fnorm(),
        constraint_bound: config.constraint_bound,
        final_mu: d.mu.leading(),
    };
    let state = RtlsState {
        x: x.clone(),
        r: d.r,
        lambda_i: d.lambda_i,
        lambda_k: d.lambda_k,
        mu: d.mu,
        rho,
        iter: iterations,
    };
    Ok(Solution { x, state, report })
}
