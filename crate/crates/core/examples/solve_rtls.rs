//! One regularized total least squares solve with both iteration schemes.

use trtls::algebra::tprod;
use trtls::deblur::{add_noise, gaussian_blur_tensor, reg_operator, RegKind};
use trtls::solver::{solve, Scheme, SolverConfig};
use trtls::DenseTensor3;

fn main() -> trtls::Result<()> {
    let n = 16;
    let a = gaussian_blur_tensor(n, 2.0, 4)?;
    let x_true = DenseTensor3::from_fn(n, 1, n, |i, _, k| (0.3 * i as f64).sin() * (0.2 * k as f64).cos() * 0.5 + 0.5);
    let b = add_noise(&tprod(&a, &x_true)?, 1e-3, 7);
    let a_noisy = add_noise(&a, 1e-3, 8);
    let k = reg_operator(RegKind::K1, n, n)?;

    for scheme in [Scheme::Tensor, Scheme::Matrix] {
        let config = SolverConfig { scheme, ..SolverConfig::default() };
        let sol = solve(&a_noisy, &b, &k, &config)?;
        let r = &sol.report;
        println!(
            "{scheme:?}: converged {} after {} iterations, relative error {:.3e}, normal residual {:.2e}, mu {:.3e}",
            r.converged,
            r.iterations,
            (&sol.x - &x_true).fnorm() / x_true.fnorm(),
            r.normal_equation_residual,
            r.final_mu
        );
    }
    Ok(())
}
