//! File formats: PGM images and IDX datasets.

pub mod idx;
pub mod pgm;

pub use idx::{read_idx_images, read_idx_labels, write_idx_images, write_idx_labels, IdxImages};
pub use pgm::{read_pgm, write_pgm, Depth, PgmImage, Quantisation};
