//! 8-bit PGM (P5) and PPM (P6) images, plus frame directories.
//!
//! Pixel values are scaled by `1/255` into `[0, 1]`. Matrices are
//! `height x width`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor::DenseTensor3;

#[derive(Debug, Clone, PartialEq)]
pub enum Image {
    Gray(DMatrix<f64>),
    Rgb([DMatrix<f64>; 3]),
}

impl Image {
    /// `(height, width)`.
    pub fn dims(&self) -> (usize, usize) {
        match self {
            Image::Gray(g) => g.shape(),
            Image::Rgb(c) => c[0].shape(),
        }
    }

    pub fn channels(&self) -> Vec<&DMatrix<f64>> {
        match self {
            Image::Gray(g) => vec![g],
            Image::Rgb(c) => c.iter().collect(),
        }
    }

    pub fn from_channels(mut channels: Vec<DMatrix<f64>>) -> Result<Image> {
        match channels.len() {
            1 => Ok(Image::Gray(channels.remove(0))),
            3 => {
                let b = channels.pop().unwrap();
                let g = channels.pop().unwrap();
                let r = channels.pop().unwrap();
                if r.shape() != g.shape() || r.shape() != b.shape() {
                    return Err(Error::Shape("color channels differ in size".into()));
                }
                Ok(Image::Rgb([r, g, b]))
            }
            n => Err(Error::Shape(format!("{n} channels; expected 1 or 3"))),
        }
    }
}

/// Clamps to `[0, 1]` and rounds half away from zero to 8 bits.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

struct Header<'a> {
    rest: &'a [u8],
}

impl<'a> Header<'a> {
    fn skip_space(&mut self) {
        loop {
            while let Some((c, tail)) = self.rest.split_first() {
                if c.is_ascii_whitespace() {
                    self.rest = tail;
                } else {
                    break;
                }
            }
            if self.rest.first() == Some(&b'#') {
                let end = self.rest.iter().position(|&c| c == b'\n').unwrap_or(self.rest.len());
                self.rest = &self.rest[end..];
            } else {
                return;
            }
        }
    }

    fn token(&mut self) -> Result<&'a [u8]> {
        self.skip_space();
        let end = self.rest.iter().position(|c| c.is_ascii_whitespace()).unwrap_or(self.rest.len());
        if end == 0 {
            return Err(Error::Format("truncated PNM header".into()));
        }
        let (tok, tail) = self.rest.split_at(end);
        self.rest = tail;
        Ok(tok)
    }

    fn number(&mut self) -> Result<usize> {
        let tok = self.token()?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("bad PNM header field {:?}", String::from_utf8_lossy(tok))))
    }
}

pub fn decode_pnm(bytes: &[u8]) -> Result<Image> {
    let mut h = Header { rest: bytes };
    let magic = h.token()?;
    let channels = match magic {
        b"P5" => 1,
        b"P6" => 3,
        other => return Err(Error::Format(format!("unsupported PNM magic {:?}", String::from_utf8_lossy(other)))),
    };
    let width = h.number()?;
    let height = h.number()?;
    let maxval = h.number()?;
    if maxval != 255 {
        return Err(Error::Format(format!("only 8-bit images (maxval 255) are supported, got {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let raster = h.rest.get(1..).ok_or_else(|| Error::Format("missing PNM raster".into()))?;
    let count = width * height * channels;
    if raster.len() < count {
        return Err(Error::Format(format!("PNM raster holds {} bytes, expected {count}", raster.len())));
    }
    let planes: Vec<DMatrix<f64>> = (0..channels)
        .map(|c| DMatrix::from_fn(height, width, |r, col| raster[(r * width + col) * channels + c] as f64 / 255.0))
        .collect();
    Image::from_channels(planes)
}

pub fn encode_pnm(img: &Image) -> Vec<u8> {
    let (height, width) = img.dims();
    let channels = img.channels();
    let magic = if channels.len() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{width} {height}\n255\n").into_bytes();
    out.reserve(width * height * channels.len());
    for r in 0..height {
        for c in 0..width {
            for ch in &channels {
                out.push(quantize(ch[(r, c)]));
            }
        }
    }
    out
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    decode_pnm(&fs::read(path)?)
}

pub fn write_image(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_pnm(img))?;
    Ok(())
}

/// Numeric key of a frame file name: the digits it contains, in order.
fn frame_key(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem.chars().filter(char::is_ascii_digit).collect();
    digits.parse().ok()
}

/// PGM/PPM files in `dir`, ordered by the number in their names.
pub fn frame_paths(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<(u64, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir.as_ref())? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !matches!(ext.as_deref(), Some("pgm" | "ppm")) {
            continue;
        }
        let key = frame_key(&path)
            .ok_or_else(|| Error::Format(format!("frame {} has no number in its name", path.display())))?;
        paths.push((key, path));
    }
    if paths.is_empty() {
        return Err(Error::Format(format!("no PGM/PPM frames in {}", dir.as_ref().display())));
    }
    paths.sort();
    Ok(paths.into_iter().map(|(_, p)| p).collect())
}

pub fn read_frames(dir: impl AsRef<Path>) -> Result<Vec<Image>> {
    frame_paths(dir)?.iter().map(read_image).collect()
}

/// Stacks frames as lateral slices: frame `j` becomes `X(:, j, :) = twist(frame_j)`.
pub fn frames_to_tensor(frames: &[&DMatrix<f64>]) -> Result<DenseTensor3> {
    let slices: Vec<DenseTensor3> = frames.iter().map(|f| DenseTensor3::twist(f)).collect();
    DenseTensor3::from_lateral_slices(&slices)
}

/// Inverse of [`frames_to_tensor`].
pub fn tensor_to_frames(t: &DenseTensor3) -> Result<Vec<DMatrix<f64>>> {
    (0..t.cols()).map(|j| t.lateral(j)?.squeeze()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_round_trip_is_exact() {
        let g = DMatrix::from_fn(5, 7, |r, c| ((r * 7 + c) * 6 % 256) as f64 / 255.0);
        let img = Image::Gray(g);
        let back = decode_pnm(&encode_pnm(&img)).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn color_round_trip_is_exact() {
        let ch = |s: usize| DMatrix::from_fn(3, 4, move |r, c| ((r * 4 + c + s * 50) % 256) as f64 / 255.0);
        let img = Image::Rgb([ch(0), ch(1), ch(2)]);
        assert_eq!(decode_pnm(&encode_pnm(&img)).unwrap(), img);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255]);
        let img = decode_pnm(&bytes).unwrap();
        assert_eq!(img, Image::Gray(DMatrix::from_row_slice(1, 2, &[0.0, 1.0])));
    }

    #[test]
    fn quantization_clamps_and_rounds_half_away() {
        assert_eq!(quantize(-0.2), 0);
        assert_eq!(quantize(1.7), 255);
        assert_eq!(quantize(0.5 / 255.0), 1);
        assert_eq!(quantize(127.5 / 255.0), 128);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        assert!(decode_pnm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pnm(b"P5\n2 2\n65535\n\0\0").is_err());
        assert!(decode_pnm(b"P5\n4 4\n255\n\0\0").is_err());
    }

    #[test]
    fn frames_sort_numerically() {
        let dir = tempfile::tempdir().unwrap();
        for idx in [10, 2, 1] {
            let img = Image::Gray(DMatrix::from_element(2, 2, idx as f64 / 255.0));
            write_image(dir.path().join(format!("frame{idx}.pgm")), &img).unwrap();
        }
        fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let frames = read_frames(dir.path()).unwrap();
        let firsts: Vec<f64> = frames.iter().map(|f| f.channels()[0][(0, 0)] * 255.0).collect();
        assert_eq!(firsts, vec![1.0, 2.0, 10.0]);
    }

    #[test]
    fn video_tensor_layout() {
        let a = DMatrix::from_fn(3, 3, |r, c| (r + 3 * c) as f64);
        let b = &a * 2.0;
        let t = frames_to_tensor(&[&a, &b]).unwrap();
        assert_eq!(t.shape(), (3, 2, 3));
        assert_eq!(t.get(1, 1, 2), b[(1, 2)]);
        assert_eq!(tensor_to_frames(&t).unwrap(), vec![a, b]);
    }
}
