use std::fmt;

/// Slicing direction of a third-order tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Fixed third index, an `m x n` matrix.
    Frontal,
    /// Fixed first index, a `1 x n x p` tensor.
    Horizontal,
    /// Fixed second index, an `m x 1 x p` tensor.
    Lateral,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Axis::Frontal => "frontal",
            Axis::Horizontal => "horizontal",
            Axis::Lateral => "lateral",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{axis} slice index {index} out of range (extent {extent})")]
    Bounds { axis: Axis, index: usize, extent: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value at storage offset {0}")]
    NonFinite(usize),

    #[error("imaginary residue {residue:.3e} exceeds {threshold:.3e}; spectral data is not conjugate symmetric")]
    NotRealSpectral { residue: f64, threshold: f64 },

    #[error("spectral slice {slice} is singular (smallest singular value {sigma_min:.3e})")]
    Singular { slice: usize, sigma_min: f64 },

    #[error("block-circulant matrix {rows}x{cols} exceeds the cap of {cap} entries; use the tensor scheme")]
    Capacity { rows: usize, cols: usize, cap: usize },

    #[error("degenerate iterate at iteration {iteration}: normalizer {normalizer:.3e} is too small, try tube normalization")]
    DegenerateIterate { iteration: usize, normalizer: f64 },

    #[error("SVD of a {rows}x{cols} spectral slice did not converge")]
    SvdNoConvergence { rows: usize, cols: usize },

    #[error("iterate became non-finite at iteration {0}")]
    Divergence(usize),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
