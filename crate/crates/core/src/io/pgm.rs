//! Binary greyscale PGM (P5) in 8 and 16 bits, with an affine quantisation
//! map so stored iterates can be recovered quantitatively.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Depth {
    Eight,
    Sixteen,
}

impl Depth {
    pub fn maxval(self) -> u16 {
        match self {
            Depth::Eight => u8::MAX as u16,
            Depth::Sixteen => u16::MAX,
        }
    }
}

/// Affine map `[lo, hi] → [0, maxval]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quantisation {
    pub lo: f64,
    pub hi: f64,
    pub depth: Depth,
}

impl Quantisation {
    pub fn spanning(t: &Tensor, depth: Depth) -> Self {
        let lo = t.data().iter().copied().fold(f64::INFINITY, f64::min);
        let hi = t.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self { lo, hi, depth }
    }

    fn span(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn encode(&self, v: f64) -> u16 {
        if self.span() <= 0.0 {
            return 0;
        }
        let m = self.depth.maxval() as f64;
        ((v - self.lo) / self.span() * m).round().clamp(0.0, m) as u16
    }

    pub fn decode(&self, s: f64) -> f64 {
        self.lo + s / self.depth.maxval() as f64 * self.span()
    }

    /// `key = value` lines; floats are printed in shortest round-trip form.
    pub fn to_sidecar(&self) -> String {
        let bits = match self.depth {
            Depth::Eight => 8,
            Depth::Sixteen => 16,
        };
        format!("min = {:?}\nmax = {:?}\nbits = {bits}\n", self.lo, self.hi)
    }

    pub fn from_sidecar(text: &str) -> Result<Self> {
        let (mut lo, mut hi, mut depth) = (None, None, None);
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Format(format!("bad sidecar line {line:?}")))?;
            let v = v.trim();
            let num = || v.parse::<f64>().map_err(|e| Error::Format(format!("{line:?}: {e}")));
            match k.trim() {
                "min" => lo = Some(num()?),
                "max" => hi = Some(num()?),
                "bits" => {
                    depth = Some(match v {
                        "8" => Depth::Eight,
                        "16" => Depth::Sixteen,
                        _ => return Err(Error::Format(format!("unsupported bit depth {v}"))),
                    })
                }
                other => return Err(Error::Format(format!("unknown sidecar key {other:?}"))),
            }
        }
        match (lo, hi, depth) {
            (Some(lo), Some(hi), Some(depth)) => Ok(Self { lo, hi, depth }),
            _ => Err(Error::Format("sidecar needs min, max and bits".into())),
        }
    }
}

/// Decoded samples as stored (integers in `0..=maxval`).
#[derive(Clone, Debug, PartialEq)]
pub struct PgmImage {
    pub samples: Tensor,
    pub depth: Depth,
}

impl PgmImage {
    pub fn restore(&self, q: &Quantisation) -> Tensor {
        self.samples.map(|s| q.decode(s))
    }
}

/// Writes a 2-D tensor through `q` as a binary PGM.
pub fn write_pgm(path: &Path, t: &Tensor, q: &Quantisation) -> Result<()> {
    let (rows, cols) = t.dims2()?;
    let mut out = format!("P5\n{cols} {rows}\n{}\n", q.depth.maxval()).into_bytes();
    for &v in t.data() {
        let s = q.encode(v);
        match q.depth {
            Depth::Eight => out.push(s as u8),
            Depth::Sixteen => out.extend_from_slice(&s.to_be_bytes()),
        }
    }
    fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Reads the next whitespace-delimited header token, skipping `#` comments.
fn header_token(bytes: &[u8], pos: &mut usize) -> Option<usize> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos]).ok()?.parse().ok()
}

pub fn read_pgm(path: &Path) -> Result<PgmImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let bad = |m: &str| Error::Format(format!("{}: {m}", path.display()));
    if !bytes.starts_with(b"P5") {
        return Err(bad("not a binary PGM (P5)"));
    }
    let mut pos = 2;
    let (Some(cols), Some(rows), Some(maxval)) =
        (header_token(&bytes, &mut pos), header_token(&bytes, &mut pos), header_token(&bytes, &mut pos))
    else {
        return Err(bad("malformed header"));
    };
    if rows == 0 || cols == 0 || maxval == 0 || maxval > u16::MAX as usize {
        return Err(bad("invalid dimensions or maxval"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let depth = if maxval <= u8::MAX as usize { Depth::Eight } else { Depth::Sixteen };
    let width = if depth == Depth::Eight { 1 } else { 2 };
    let raster = bytes.get(pos..).unwrap_or(&[]);
    if raster.len() != rows * cols * width {
        return Err(bad(&format!("raster has {} bytes, expected {}", raster.len(), rows * cols * width)));
    }
    let data = match depth {
        Depth::Eight => raster.iter().map(|&b| f64::from(b)).collect(),
        Depth::Sixteen => raster.chunks_exact(2).map(|c| f64::from(u16::from_be_bytes([c[0], c[1]]))).collect(),
    };
    Ok(PgmImage { samples: Tensor::new(&[rows, cols], data)?, depth })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Tensor {
        Tensor::from_fn2(5, 7, |i, j| -0.3 + 0.01 * (i * 7 + j) as f64 + 1e-3 * (j as f64).sin())
    }

    #[test]
    fn sixteen_bit_round_trip_within_quantisation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        let t = ramp();
        let q = Quantisation::spanning(&t, Depth::Sixteen);
        write_pgm(&path, &t, &q).unwrap();
        let img = read_pgm(&path).unwrap();
        assert_eq!(img.depth, Depth::Sixteen);
        let back = img.restore(&Quantisation::from_sidecar(&q.to_sidecar()).unwrap());
        let span = q.hi - q.lo;
        for (a, b) in back.data().iter().zip(t.data()) {
            assert!((a - b).abs() <= span / 65535.0, "{a} vs {b}");
        }
        // extremes are exact
        assert_eq!(img.samples.data()[0], 0.0);
        assert_eq!(img.samples.max_abs(), 65535.0);
    }

    #[test]
    fn eight_bit_header_and_samples() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.pgm");
        let t = Tensor::new(&[2, 3], vec![0.0, 0.5, 1.0, 1.0, 0.5, 0.0]).unwrap();
        let q = Quantisation { lo: 0.0, hi: 1.0, depth: Depth::Eight };
        write_pgm(&path, &t, &q).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5"));
        assert_eq!(&bytes[bytes.len() - 6..], &[0, 128, 255, 255, 128, 0]);
        let img = read_pgm(&path).unwrap();
        assert_eq!(img.depth, Depth::Eight);
        assert_eq!(img.samples.shape(), &[2, 3]);
    }

    #[test]
    fn sixteen_bit_samples_are_big_endian_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.pgm");
        let t = Tensor::new(&[1, 2], vec![0.0, 1.0]).unwrap();
        write_pgm(&path, &t, &Quantisation::spanning(&t, Depth::Sixteen)).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[bytes.len() - 4..], &[0, 0, 0xff, 0xff]);
    }

    #[test]
    fn constant_image_and_bad_sidecar() {
        let q = Quantisation::spanning(&Tensor::full(&[2, 2], 3.0), Depth::Sixteen);
        assert_eq!(q.encode(3.0), 0);
        assert_eq!(q.decode(0.0), 3.0);
        assert!(Quantisation::from_sidecar("min = 0\nbits = 16").is_err());
        assert!(Quantisation::from_sidecar("min = 0\nmax = 1\nbits = 12").is_err());
        assert!(matches!(read_pgm(Path::new("/nonexistent/x.pgm")), Err(Error::Io { .. })));
    }

    #[test]
    fn header_comments_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pgm");
        std::fs::write(&path, b"P5\n# made by hand\n2 1\n255\n\x07\x09").unwrap();
        let img = read_pgm(&path).unwrap();
        assert_eq!(img.samples.data(), &[7.0, 9.0]);
        std::fs::write(&path, b"P5\n2 1\n255\n\x07").unwrap();
        assert!(matches!(read_pgm(&path), Err(Error::Format(_))));
        std::fs::write(&path, b"P2\n2 1\n255\n1 2").unwrap();
        assert!(matches!(read_pgm(&path), Err(Error::Format(_))));
    }
}
