//! Digit-classification datasets: IDX loading and a seeded synthetic
//! substitute drawn as jittered seven-segment glyphs on a 28x28 canvas.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::{read_idx_images, read_idx_labels, IdxImages};
use crate::tensor::Tensor;

pub const DIGIT_SIDE: usize = 28;
pub const CLASSES: usize = 10;

/// Segment endpoints in glyph coordinates `(x, y)`, `x ∈ [0, 1]`, `y ∈ [0, 2]`,
/// in the order top, top-right, bottom-right, bottom, bottom-left, top-left, middle.
const SEGMENTS: [((f64, f64), (f64, f64)); 7] = [
    ((0.0, 0.0), (1.0, 0.0)),
    ((1.0, 0.0), (1.0, 1.0)),
    ((1.0, 1.0), (1.0, 2.0)),
    ((0.0, 2.0), (1.0, 2.0)),
    ((0.0, 1.0), (0.0, 2.0)),
    ((0.0, 0.0), (0.0, 1.0)),
    ((0.0, 1.0), (1.0, 1.0)),
];

/// Lit segments per digit, bit `i` for `SEGMENTS[i]`.
const GLYPHS: [u8; CLASSES] = [
    0b0111111, 0b0000110, 0b1011011, 0b1001111, 0b1100110, 0b1101101, 0b1111101, 0b0000111, 0b1111111, 0b1101111,
];

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
}

/// Renders one digit with random shift, size, slant, stroke width and
/// segment wobble; pixel values are antialiased strokes in `0..=255`.
pub fn render_digit(label: u8, rng: &mut impl Rng) -> Vec<u8> {
    let glyph = GLYPHS[label as usize % CLASSES];
    let height = rng.random_range(16.0..20.0);
    let width = height * rng.random_range(0.45..0.6);
    let slant = rng.random_range(-0.25..0.25);
    let stroke = rng.random_range(1.0..1.8);
    let cx = DIGIT_SIDE as f64 / 2.0 + rng.random_range(-2.0..2.0);
    let cy = DIGIT_SIDE as f64 / 2.0 + rng.random_range(-2.0..2.0);
    let wobble: Vec<f64> = (0..14).map(|_| rng.random_range(-0.06..0.06)).collect();
    let to_px = |(x, y): (f64, f64), w: f64| {
        let (gx, gy) = (x - 0.5 + w, y - 1.0 + w);
        (cx + gx * width - slant * gy * height / 2.0, cy + gy * height / 2.0)
    };
    let lit: Vec<((f64, f64), (f64, f64))> = SEGMENTS
        .iter()
        .enumerate()
        .filter(|(i, _)| glyph >> i & 1 == 1)
        .map(|(i, &(a, b))| (to_px(a, wobble[2 * i]), to_px(b, wobble[2 * i + 1])))
        .collect();
    (0..DIGIT_SIDE * DIGIT_SIDE)
        .map(|k| {
            let p = ((k % DIGIT_SIDE) as f64 + 0.5, (k / DIGIT_SIDE) as f64 + 0.5);
            let d = lit.iter().map(|&(a, b)| segment_distance(p, a, b)).fold(f64::INFINITY, f64::min);
            (255.0 * (stroke + 0.5 - d).clamp(0.0, 1.0)).round() as u8
        })
        .collect()
}

/// `count` synthetic digits with uniformly drawn labels.
pub fn synthetic_digits(count: usize, seed: u64) -> (IdxImages, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = Vec::with_capacity(count * DIGIT_SIDE * DIGIT_SIDE);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let label = rng.random_range(0..CLASSES as u8);
        pixels.extend(render_digit(label, &mut rng));
        labels.push(label);
    }
    (IdxImages { count, rows: DIGIT_SIDE, cols: DIGIT_SIDE, pixels }, labels)
}

/// Inputs as columns (`pixels x samples`, values in `[0, 1]`) with their labels.
#[derive(Clone, Debug, PartialEq)]
pub struct DigitSet {
    pub inputs: Tensor,
    pub labels: Vec<u8>,
}

impl DigitSet {
    /// Columns `range` of an IDX image/label pair.
    pub fn from_idx(images: &IdxImages, labels: &[u8], range: std::ops::Range<usize>) -> Result<Self> {
        if images.count != labels.len() {
            return Err(Error::Dimension(format!("{} images but {} labels", images.count, labels.len())));
        }
        if range.end > images.count || range.is_empty() {
            return Err(Error::Argument(format!("sample range {range:?} outside 0..{}", images.count)));
        }
        if let Some(&bad) = labels[range.clone()].iter().find(|&&l| l as usize >= CLASSES) {
            return Err(Error::Format(format!("label {bad} outside 0..{CLASSES}")));
        }
        let s = images.rows * images.cols;
        let r = range.len();
        let mut data = vec![0.0; s * r];
        for (col, i) in range.clone().enumerate() {
            for (p, &v) in images.image(i).iter().enumerate() {
                data[p * r + col] = f64::from(v) / 255.0;
            }
        }
        Ok(Self { inputs: Tensor::new(&[s, r], data)?, labels: labels[range].to_vec() })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `CLASSES x samples` one-hot label matrix.
    pub fn one_hot(&self) -> Tensor {
        let r = self.len();
        Tensor::from_fn2(CLASSES, r, |i, j| if self.labels[j] as usize == i { 1.0 } else { 0.0 })
    }
}

/// Standard MNIST file names inside a directory.
pub const MNIST_TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const MNIST_TRAIN_LABELS: &str = "train-labels-idx1-ubyte";

/// Reads an image/label IDX pair.
pub fn load_idx_pair(images: &Path, labels: &Path) -> Result<(IdxImages, Vec<u8>)> {
    Ok((read_idx_images(images)?, read_idx_labels(labels)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glyphs_are_distinct_and_rendering_is_seeded() {
        let mut seen = std::collections::HashSet::new();
        assert!(GLYPHS.iter().all(|g| seen.insert(*g)));
        let (a, la) = synthetic_digits(20, 3);
        let (b, lb) = synthetic_digits(20, 3);
        assert_eq!((a.clone(), la.clone()), (b, lb));
        let (c, _) = synthetic_digits(20, 4);
        assert_ne!(a.pixels, c.pixels);
        // every image has ink and background
        for i in 0..20 {
            let img = a.image(i);
            assert!(img.contains(&255) && img.iter().filter(|&&v| v == 0).count() > 300);
        }
    }

    #[test]
    fn one_and_eight_differ_in_ink() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let one: u32 = render_digit(1, &mut rng).iter().map(|&v| v as u32).sum();
        let eight: u32 = render_digit(8, &mut rng).iter().map(|&v| v as u32).sum();
        assert!(eight > 2 * one);
    }

    #[test]
    fn dataset_matrices() {
        let (imgs, labels) = synthetic_digits(12, 5);
        let set = DigitSet::from_idx(&imgs, &labels, 2..7).unwrap();
        assert_eq!(set.inputs.shape(), &[784, 5]);
        assert!(set.inputs.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(set.inputs.at2(300, 1), f64::from(imgs.image(3)[300]) / 255.0);
        let y = set.one_hot();
        assert_eq!(y.shape(), &[10, 5]);
        for j in 0..5 {
            let col: Vec<f64> = (0..10).map(|i| y.at2(i, j)).collect();
            assert_eq!(col.iter().sum::<f64>(), 1.0);
            assert_eq!(col[labels[2 + j] as usize], 1.0);
        }
        assert!(DigitSet::from_idx(&imgs, &labels, 10..13).is_err());
        assert!(DigitSet::from_idx(&imgs, &labels[..3], 0..2).is_err());
    }
}
