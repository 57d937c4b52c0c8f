//! Compares the regularized total least squares restoration with a
//! truncated T-SVD sweep on the same blurred image.

use std::path::Path;

use trtls::baseline::{TruncationSpec, TtsvdFactorization};
use trtls::deblur::{run_experiment, ExperimentConfig};
use trtls::image::{read_image, Image};
use trtls::tensor::mse;
use trtls::DenseTensor3;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/scene64.pgm");
    let Image::Gray(g) = read_image(&path)? else { return Err("expected a grayscale image".into()) };
    let x = DenseTensor3::twist(&g);
    let exp = run_experiment(&x, &ExperimentConfig { n: 64, ..ExperimentConfig::default() })?;
    println!("trtls      mse {:.4e}", exp.result.deblurred_mse);

    let factors = TtsvdFactorization::new(&exp.simulation.a_observed)?;
    for k in (1..=factors.max_rank()).step_by(4) {
        let sol = factors.solve(&exp.simulation.b_observed, TruncationSpec::Rank(k))?;
        println!("ttsvd k={k:<3} mse {:.4e}", mse(&sol.x, &x)?);
    }
    Ok(())
}
