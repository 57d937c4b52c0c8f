//! Blurs the bundled 64x64 image, restores it and writes both to a temp dir.

use std::path::Path;

use trtls::deblur::{run_experiment, ExperimentConfig};
use trtls::image::{read_image, write_image, Image};
use trtls::DenseTensor3;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/scene64.pgm");
    let Image::Gray(g) = read_image(&path)? else { return Err("expected a grayscale image".into()) };
    let config = ExperimentConfig { n: 64, ..ExperimentConfig::default() };
    let exp = run_experiment(&DenseTensor3::twist(&g), &config)?;
    let r = &exp.result;
    println!(
        "blurred mse {:.4e}, deblurred mse {:.4e}, restoring {:.1}%, {} iterations",
        r.blurred_mse,
        r.deblurred_mse,
        100.0 * r.restoring_proportion,
        r.report.iterations
    );

    let out = std::env::temp_dir().join("trtls-deblur-image");
    std::fs::create_dir_all(&out)?;
    write_image(out.join("blurred.pgm"), &Image::Gray(exp.simulation.b_observed.squeeze()?))?;
    write_image(out.join("restored.pgm"), &Image::Gray(exp.restored.squeeze()?))?;
    println!("images written to {}", out.display());
    Ok(())
}
