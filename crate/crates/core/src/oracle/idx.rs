//! IDX (MNIST) reader.
//!
//! Images: magic `0x00000803`, then big-endian `u32` count, rows, cols, then
//! `count·rows·cols` unsigned bytes. Labels: magic `0x00000801`, count, then
//! `count` bytes.

use std::path::Path;

use super::data::{Dataset, Provenance};
use crate::error::{Error, IdxError, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

/// Global pixel mean and standard deviation, taken from the training set and
/// reused for the test set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub mean: f64,
    pub std: f64,
}

impl Normalization {
    pub fn fit(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = if var > 0.0 { var.sqrt() } else { 1.0 };
        Self { mean, std }
    }

    pub fn apply(&self, values: &mut [f64]) {
        for v in values {
            *v = (*v - self.mean) / self.std;
        }
    }
}

fn be_u32(bytes: &[u8], at: usize, file: &str) -> Result<u32, IdxError> {
    let s = bytes.get(at..at + 4).ok_or_else(|| IdxError::Truncated {
        file: file.to_string(),
        needed: at + 4,
        found: bytes.len(),
    })?;
    Ok(u32::from_be_bytes([s[0], s[1], s[2], s[3]]))
}

fn check_magic(bytes: &[u8], expected: u32, file: &str) -> Result<(), IdxError> {
    let found = be_u32(bytes, 0, file)?;
    if found != expected {
        return Err(IdxError::BadMagic {
            file: file.to_string(),
            expected,
            found,
        });
    }
    Ok(())
}

pub fn parse_idx_images(bytes: &[u8], file: &str) -> Result<IdxImages, IdxError> {
    check_magic(bytes, IMAGE_MAGIC, file)?;
    let count = be_u32(bytes, 4, file)? as usize;
    let rows = be_u32(bytes, 8, file)? as usize;
    let cols = be_u32(bytes, 12, file)? as usize;
    let needed = 16 + count * rows * cols;
    if bytes.len() < needed {
        return Err(IdxError::Truncated {
            file: file.to_string(),
            needed,
            found: bytes.len(),
        });
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: bytes[16..needed].to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8], file: &str) -> Result<Vec<u8>, IdxError> {
    check_magic(bytes, LABEL_MAGIC, file)?;
    let count = be_u32(bytes, 4, file)? as usize;
    let needed = 8 + count;
    if bytes.len() < needed {
        return Err(IdxError::Truncated {
            file: file.to_string(),
            needed,
            found: bytes.len(),
        });
    }
    Ok(bytes[8..needed].to_vec())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_idx_images(path: &Path) -> Result<IdxImages> {
    let bytes = read(path)?;
    Ok(parse_idx_images(&bytes, &path.display().to_string())?)
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read(path)?;
    Ok(parse_idx_labels(&bytes, &path.display().to_string())?)
}

/// Loads a training set, normalizing pixels by its own global mean and std.
pub fn load_idx(images: &Path, labels: &Path) -> Result<(Dataset, Normalization)> {
    let (mut data, raw) = load_raw(images, labels)?;
    let norm = Normalization::fit(&raw);
    norm.apply(data.features_mut());
    Ok((data, norm))
}

/// Loads a held-out set with a normalization fitted elsewhere.
pub fn load_idx_with(images: &Path, labels: &Path, norm: &Normalization) -> Result<Dataset> {
    let (mut data, _) = load_raw(images, labels)?;
    norm.apply(data.features_mut());
    Ok(data)
}

fn load_raw(images: &Path, labels: &Path) -> Result<(Dataset, Vec<f64>)> {
    let img = read_idx_images(images)?;
    let lab = read_idx_labels(labels)?;
    if img.count != lab.len() {
        return Err(IdxError::CountMismatch {
            images: img.count,
            labels: lab.len(),
        }
        .into());
    }
    if img.count == 0 {
        return Err(Error::invalid("images", "IDX file holds no images"));
    }
    let raw: Vec<f64> = img.pixels.iter().map(|&b| b as f64).collect();
    let data = Dataset::new(
        img.rows * img.cols,
        raw.clone(),
        Some(lab.iter().map(|&l| l as usize).collect()),
        Provenance::File {
            images: images.display().to_string(),
            labels: labels.display().to_string(),
        },
    )?;
    Ok((data, raw))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_bytes(count: u32, rows: u32, cols: u32, fill: impl Fn(usize) -> u8) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IMAGE_MAGIC, count, rows, cols] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend((0..(count * rows * cols) as usize).map(fill));
        b
    }

    #[test]
    fn parses_headers() {
        let b = image_bytes(2, 2, 3, |i| i as u8);
        let img = parse_idx_images(&b, "x").unwrap();
        assert_eq!((img.count, img.rows, img.cols), (2, 2, 3));
        assert_eq!(img.pixels, (0..12).collect::<Vec<u8>>());
        let mut l = LABEL_MAGIC.to_be_bytes().to_vec();
        l.extend_from_slice(&2u32.to_be_bytes());
        l.extend([7, 1]);
        assert_eq!(parse_idx_labels(&l, "y").unwrap(), vec![7, 1]);
    }

    #[test]
    fn distinct_errors() {
        let b = image_bytes(2, 2, 3, |_| 0);
        assert!(matches!(
            parse_idx_labels(&b, "x"),
            Err(IdxError::BadMagic {
                found: IMAGE_MAGIC,
                ..
            })
        ));
        assert!(matches!(
            parse_idx_images(&b[..20], "x"),
            Err(IdxError::Truncated {
                needed: 28,
                found: 20,
                ..
            })
        ));
        assert!(matches!(
            parse_idx_images(&b[..3], "x"),
            Err(IdxError::Truncated { .. })
        ));
    }

    #[test]
    fn normalization_fit() {
        let n = Normalization::fit(&[1.0, 3.0]);
        assert_eq!((n.mean, n.std), (2.0, 1.0));
        assert_eq!(Normalization::fit(&[4.0, 4.0]).std, 1.0);
    }
}
