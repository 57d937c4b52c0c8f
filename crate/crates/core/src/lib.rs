//! Tubal tensor algebra and tensor regularized total least squares.
//!
//! Third-order tensors multiply through the T-product: frontal slices are
//! transformed by an FFT along the third mode, multiplied slice by slice and
//! transformed back. On top of that algebra the crate provides
//!
//! * [`tensor`], [`spectral`], [`algebra`]: storage, the Fourier representation
//!   and the T-product operations (transpose, inverse, T-SVD, pseudoinverse);
//! * [`solver`]: the regularized total least squares iterations;
//! * [`deblur`] and [`image`]: Gaussian blur simulation, noise, difference
//!   regularizers and PGM/PPM input/output;
//! * [`baseline`]: truncated T-SVD regularization for comparison;
//! * [`cli`]: the `trtls` command-line tool.
//!
//! ```
//! use trtls::algebra::{identity_tensor, tprod};
//! use trtls::tensor::DenseTensor3;
//!
//! let a = DenseTensor3::from_fn(2, 3, 4, |i, j, k| (i + 2 * j + 3 * k) as f64);
//! let same = tprod(&a, &identity_tensor(3, 4)).unwrap();
//! assert!((&same - &a).fnorm() < 1e-12);
//! ```

pub mod algebra;
pub mod baseline;
pub mod cli;
pub mod deblur;
pub mod error;
pub mod image;
mod json_float;
pub mod solver;
pub mod spectral;
pub mod tensor;
pub mod tns3;

pub use error::{Error, Result};
pub use tensor::{DenseTensor3, LateralSlice, Tube};
