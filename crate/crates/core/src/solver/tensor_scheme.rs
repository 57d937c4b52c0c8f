use std::time::Instant;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor3, LateralSlice};

use super::spectral_problem::{SpectralProblem, SpectralRhs};
use super::{check_problem, Normalization, RtlsState, Solution, SolveReport, SolverConfig, TensorStep};

type CVec = DVector<Complex64>;

/// Iterates on `Psi(X)` one spectral slice at a time.
///
/// Each step recomputes `R`, `mu` and `lambda_K` from the current iterate,
/// applies `Psi` (or its inverse) to `[X; -I]` and restores the trailing
/// block to `-I`. Stops when the relative change falls to `config.tol`.
pub fn iterate_tensor(a: &DenseTensor3, b: &LateralSlice, k: &DenseTensor3, config: &SolverConfig) -> Result<Solution> {
    check_problem(a, b, k)?;
    config.validate()?;
    let problem = SpectralProblem::new(a, k);
    let rhs = problem.rhs(b);
    run(&problem, &rhs, config)
}

fn solve_slice(system: nalgebra::DMatrix<Complex64>, v: &CVec, fallback: &mut bool) -> CVec {
    match system.clone().lu().solve(v) {
        Some(y) if y.iter().all(|z| z.re.is_finite() && z.im.is_finite()) => y,
        _ => {
            *fallback = true;
            let svd = system.svd(true, true);
            let smax = svd.singular_values.max();
            let tol = crate::algebra::rank_tolerance(v.len(), v.len(), smax);
            svd.solve(v, tol).unwrap_or_else(|_| CVec::zeros(v.len()))
        }
    }
}

pub(crate) fn run(problem: &SpectralProblem, rhs: &SpectralRhs, config: &SolverConfig) -> Result<Solution> {
    let clock = Instant::now();
    let n = problem.n;
    let h = problem.half();
    let mut xs = problem.start(rhs, config.start);
    let mut q = problem.quantities(rhs, &xs, config.mu_mode)?;
    let mut mu_fallback = q.fell_back;
    let mut solve_fallback = false;
    let mut change = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iter {
        let mut ys = Vec::with_capacity(h);
        for i in 0..h {
            let mut psi = problem.psi(rhs, i, q.lambda_k[i], q.t[i]);
            let v = SpectralProblem::extended(&xs[i]);
            let y = match config.step {
                TensorStep::Power => &psi * &v,
                TensorStep::Inverse => {
                    if config.shifted {
                        for d in 0..=n {
                            psi[(d, d)] += q.lambda_i[i];
                        }
                    }
                    solve_slice(psi, &v, &mut solve_fallback)
                }
            };
            ys.push(y);
        }
        let next: Vec<CVec> = match config.normalization {
            Normalization::Tube => {
                let mut out = Vec::with_capacity(h);
                for y in &ys {
                    let tail = y[n];
                    if tail.norm() <= 1e-14 * y.norm() {
                        return Err(Error::DegenerateIterate { iteration: iterations, normalizer: tail.norm() });
                    }
                    out.push(y.rows(0, n) * (-tail.inv()));
                }
                out
            }
            Normalization::ScalarEntry => {
                // Y(n+1, 1, 1) is the mean of the trailing spectral entries.
                let entry = problem.wsum(|i| ys[i][n].re);
                let size = problem.wsum(|i| ys[i].norm_squared()).sqrt();
                if entry.abs() <= 1e-14 * size {
                    return Err(Error::DegenerateIterate { iteration: iterations, normalizer: entry.abs() });
                }
                ys.iter().map(|y| y.rows(0, n) * Complex64::new(-1.0 / entry, 0.0)).collect()
            }
        };
        let diff: Vec<CVec> = next.iter().zip(&xs).map(|(a, b)| a - b).collect();
        let base = problem.norm(&xs);
        change = if base > 0.0 { problem.norm(&diff) / base } else { problem.norm(&diff) };
        iterations += 1;
        if !change.is_finite() || next.iter().any(|v| v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())) {
            return Err(Error::Divergence(iterations));
        }
        xs = next;
        q = problem.quantities(rhs, &xs, config.mu_mode)?;
        mu_fallback |= q.fell_back;
        if change <= config.tol {
            converged = true;
            break;
        }
    }

    let rho = problem.rho(rhs, &xs, &q);
    let x = problem.lateral(&xs)?;
    let state = RtlsState {
        x: x.clone(),
        r: problem.lateral(&q.r)?,
        lambda_i: problem.tube(&q.lambda_i)?,
        lambda_k: problem.tube(&q.lambda_k)?,
        mu: q.mu.clone(),
        rho,
        iter: iterations,
    };
    let report = SolveReport {
        iterations,
        converged,
        final_relative_change: change,
        final_rho: rho,
        wall_time_s: clock.elapsed().as_secs_f64(),
        mu_fallback,
        solve_fallback,
        normal_equation_residual: problem.normal_equation_residual(rhs, &xs, &q),
        constraint_norm: problem.constraint_norm(&q),
        constraint_bound: config.constraint_bound,
        final_mu: q.mu.leading(),
    };
    Ok(Solution { x, state, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{tprod, ttranspose};
    use crate::deblur::{reg_operator, RegKind};
    use crate::solver::testing::{sample, well_posed};
    use crate::solver::{build_psi, eigen_residual, normal_equation_residual, StartRule};
    use nalgebra::DMatrix;

    fn noisy_problem(n: usize, p: usize, seed: u64) -> (DenseTensor3, LateralSlice, DenseTensor3) {
        let a = well_posed(n, p, seed);
        let x = sample(n, 1, p, seed + 1);
        let b = &tprod(&a, &x).unwrap() + &sample(n, 1, p, seed + 2).scale(1e-2);
        (a, b, reg_operator(RegKind::K1, n, p).unwrap())
    }

    #[test]
    fn zero_iterations_return_the_start() {
        let (a, b, k) = noisy_problem(5, 4, 10);
        let config = SolverConfig { max_iter: 0, ..Default::default() };
        let sol = iterate_tensor(&a, &b, &k, &config).unwrap();
        let atb = tprod(&ttranspose(&a), &b).unwrap();
        let ax = tprod(&a, &atb).unwrap();
        let start = atb.scale(ax.dot(&b) / ax.dot(&ax));
        assert!((&sol.x - &start).fnorm() <= 1e-12 * start.fnorm());
        assert!(!sol.report.converged);
        assert_eq!(sol.report.iterations, 0);
        assert!(sol.report.final_relative_change.is_infinite());

        let unit = SolverConfig { start: StartRule::UnitNorm, ..config };
        let sol = iterate_tensor(&a, &b, &k, &unit).unwrap();
        assert!((sol.x.fnorm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn depth_one_satisfies_matrix_rtls_conditions() {
        // At depth one the problem is ordinary matrix RTLS; check the classical
        // first-order conditions with plain matrix arithmetic.
        let (a, b, k) = noisy_problem(6, 1, 20);
        let sol = iterate_tensor(&a, &b, &k, &SolverConfig::default()).unwrap();
        assert!(sol.report.converged);
        let am = a.frontal(0).unwrap().clone_owned();
        let km = k.frontal(0).unwrap().clone_owned();
        let bv = b.frontal(0).unwrap().column(0).into_owned();
        let xv = sol.x.frontal(0).unwrap().column(0).into_owned();
        let r = &bv - &am * &xv;
        let s = 1.0 + xv.norm_squared();
        let kx2 = (&km * &xv).norm_squared();
        let mu = (bv.dot(&r) / s - r.norm_squared() / (s * s)) / kx2;
        let lambda_i = -r.norm_squared() / s;
        let lambda_l = mu * s;
        assert!((sol.state.lambda_i.get(0, 0, 0) - lambda_i).abs() <= 1e-10 * lambda_i.abs());
        assert!((sol.state.lambda_k.get(0, 0, 0) - lambda_l).abs() <= 1e-10 * lambda_l.abs());

        let atb = am.transpose() * &bv;
        let op = am.transpose() * &am + DMatrix::identity(6, 6) * lambda_i + km.transpose() * &km * lambda_l;
        assert!((op * &xv - &atb).norm() <= 1e-6 * atb.norm());
    }

    #[test]
    fn depth_one_matches_a_direct_matrix_iteration() {
        let (a, b, k) = noisy_problem(6, 1, 21);
        let config = SolverConfig { max_iter: 40, ..Default::default() };
        let sol = iterate_tensor(&a, &b, &k, &config).unwrap();

        let am = a.frontal(0).unwrap().clone_owned();
        let km = k.frontal(0).unwrap().clone_owned();
        let bv = b.frontal(0).unwrap().column(0).into_owned();
        let atb = am.transpose() * &bv;
        let mut x = &atb * ((&am * &atb).dot(&bv) / (&am * &atb).norm_squared());
        let mut iterations = 0;
        for _ in 0..config.max_iter {
            let s = 1.0 + x.norm_squared();
            let r = (&bv - &am * &x) / s;
            let t = (&km * &x).norm_squared();
            let lambda_k = (bv.dot(&r) - r.norm_squared()) / t * s;
            let mut psi = DMatrix::zeros(7, 7);
            psi.view_mut((0, 0), (6, 6)).copy_from(&(am.transpose() * &am + km.transpose() * &km * lambda_k));
            psi.view_mut((0, 6), (6, 1)).copy_from(&atb);
            psi.view_mut((6, 0), (1, 6)).copy_from(&atb.transpose());
            psi[(6, 6)] = bv.norm_squared() - lambda_k * t;
            let mut v = x.clone().insert_row(6, -1.0);
            v = psi.lu().solve(&v).unwrap();
            let next = v.rows(0, 6) / -v[6];
            let change = (&next - &x).norm() / x.norm();
            x = next;
            iterations += 1;
            if change <= config.tol {
                break;
            }
        }
        assert_eq!(sol.report.iterations, iterations);
        let xt = sol.x.frontal(0).unwrap().column(0).into_owned();
        assert!((xt - &x).norm() <= 1e-10 * x.norm());
    }

    #[test]
    fn reported_certificates_match_time_domain_forms() {
        let (a, b, k) = noisy_problem(5, 4, 30);
        let sol = iterate_tensor(&a, &b, &k, &SolverConfig::default()).unwrap();
        let s = &sol.state;
        let atb = tprod(&ttranspose(&a), &b).unwrap().fnorm();
        let ne = normal_equation_residual(&a, &b, &k, &sol.x, &s.lambda_i, &s.lambda_k).unwrap() / atb;
        assert!((ne - sol.report.normal_equation_residual).abs() <= 1e-6 * ne + 1e-14);

        let psi = build_psi(&a, &b, &k, &sol.x, &s.lambda_k).unwrap();
        let er = eigen_residual(&psi, &sol.x, &s.lambda_i).unwrap();
        let ext2 = sol.x.dot(&sol.x) + 1.0;
        assert!((er * er / ext2 - s.rho).abs() <= 1e-6 * s.rho + (1e-12 * psi.fnorm()).powi(2));
        assert!((tprod(&k, &sol.x).unwrap().fnorm() - sol.report.constraint_norm).abs() <= 1e-12);
    }

    #[test]
    fn converged_runs_meet_the_tolerance() {
        for seed in [40, 41, 42] {
            let (a, b, k) = noisy_problem(6, 3, seed);
            let config = SolverConfig { tol: 1e-9, ..Default::default() };
            let sol = iterate_tensor(&a, &b, &k, &config).unwrap();
            if sol.report.converged {
                assert!(sol.report.final_relative_change <= config.tol);
            } else {
                assert_eq!(sol.report.iterations, config.max_iter);
            }
        }
    }

    #[test]
    fn lambda_k_tracks_mu_times_gram() {
        let (a, b, k) = noisy_problem(5, 4, 50);
        for mu_mode in [crate::solver::MuMode::ScalarProjection, crate::solver::MuMode::Tubewise] {
            let config = SolverConfig { max_iter: 3, mu_mode, ..Default::default() };
            let s = iterate_tensor(&a, &b, &k, &config).unwrap().state;
            let gram = &crate::algebra::identity_tensor(1, 4) + &tprod(&ttranspose(&s.x), &s.x).unwrap();
            let expect = s.mu.apply(&gram).unwrap();
            assert!((&s.lambda_k - &expect).fnorm() <= 1e-10 * expect.fnorm());
        }
    }
}
