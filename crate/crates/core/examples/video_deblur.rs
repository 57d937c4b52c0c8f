//! Restores a four-frame clip; each frame is one lateral slice.

use std::path::Path;

use trtls::deblur::{run_experiment, ExperimentConfig};
use trtls::image::{frames_to_tensor, read_frames, tensor_to_frames, Image};
use trtls::tensor::mse;
use trtls::DenseTensor3;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/frames64");
    let frames = read_frames(&dir)?;
    let gray: Vec<_> = frames
        .iter()
        .map(|f| match f {
            Image::Gray(g) => Ok(g),
            Image::Rgb(_) => Err("expected grayscale frames"),
        })
        .collect::<Result<_, _>>()?;
    let x = frames_to_tensor(&gray)?;
    let exp = run_experiment(&x, &ExperimentConfig { n: 64, ..ExperimentConfig::default() })?;
    println!("clip: blurred mse {:.4e}, deblurred mse {:.4e}", exp.result.blurred_mse, exp.result.deblurred_mse);

    for (j, restored) in tensor_to_frames(&exp.restored)?.iter().enumerate() {
        let truth = DenseTensor3::twist(gray[j]);
        println!("frame {}: mse {:.4e}", j + 1, mse(&DenseTensor3::twist(restored), &truth)?);
    }
    Ok(())
}
