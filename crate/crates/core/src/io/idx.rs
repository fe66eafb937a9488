//! IDX dataset files: big-endian magic, dimension header, raw `u8` payload.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 2051;
pub const LABELS_MAGIC: u32 = 2049;

/// `count` images of `rows x cols` bytes, row-major, image after image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.pixels[i * n..(i + 1) * n]
    }
}

fn parse_header(bytes: &[u8], magic: u32, ndims: usize, what: &str) -> Result<Vec<usize>> {
    let header = 4 * (1 + ndims);
    let word = |i: usize| u32::from_be_bytes([bytes[4 * i], bytes[4 * i + 1], bytes[4 * i + 2], bytes[4 * i + 3]]);
    if bytes.len() < 4 {
        return Err(Error::Format(format!("{what}: truncated header")));
    }
    if word(0) != magic {
        return Err(Error::Format(format!("{what}: magic {} (expected {magic})", word(0))));
    }
    if bytes.len() < header {
        return Err(Error::Format(format!("{what}: truncated header")));
    }
    let dims: Vec<usize> = (1..=ndims).map(|i| word(i) as usize).collect();
    let payload: usize = dims.iter().product();
    if bytes.len() != header + payload {
        return Err(Error::Format(format!(
            "{what}: payload has {} bytes, header promises {payload}",
            bytes.len() - header
        )));
    }
    Ok(dims)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

fn write(path: &Path, magic: u32, dims: &[usize], payload: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(4 * (1 + dims.len()) + payload.len());
    out.extend_from_slice(&magic.to_be_bytes());
    for &d in dims {
        let d = u32::try_from(d).map_err(|_| Error::Argument(format!("dimension {d} too large for IDX")))?;
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(payload);
    fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_idx_images(path: &Path) -> Result<IdxImages> {
    let bytes = read(path)?;
    let dims = parse_header(&bytes, IMAGES_MAGIC, 3, &path.display().to_string())?;
    Ok(IdxImages { count: dims[0], rows: dims[1], cols: dims[2], pixels: bytes[16..].to_vec() })
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read(path)?;
    parse_header(&bytes, LABELS_MAGIC, 1, &path.display().to_string())?;
    Ok(bytes[8..].to_vec())
}

pub fn write_idx_images(path: &Path, images: &IdxImages) -> Result<()> {
    if images.pixels.len() != images.count * images.rows * images.cols {
        return Err(Error::Dimension("image buffer does not match count x rows x cols".into()));
    }
    write(path, IMAGES_MAGIC, &[images.count, images.rows, images.cols], &images.pixels)
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    write(path, LABELS_MAGIC, &[labels.len()], labels)
}
