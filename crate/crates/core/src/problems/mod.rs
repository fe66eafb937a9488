//! Application energies and toy instances.

mod classifier;
mod deconv;
mod digits;
mod mri;
mod toys;

pub use classifier::{nn_energy_grad, nn_forward, Activation, ClassifierProblem, Init, Loss};
pub use deconv::{
    blind_deconv_grad, discrepancy_eta, make_synthetic_deconv, motion_kernel, piecewise_constant_image,
    BlindDeconvProblem, SyntheticDeconv,
};
pub use digits::{
    load_idx_pair, render_digit, synthetic_digits, DigitSet, CLASSES, DIGIT_SIDE, MNIST_TRAIN_IMAGES, MNIST_TRAIN_LABELS,
};
pub use mri::{
    coil_map, make_synthetic_mri, mask_fraction, mri_energy_grad, phantom, sampling_mask, MaskKind,
    ParallelMriProblem, SyntheticMri,
};
pub use toys::{counterexample_run, Counterexample, LeastSquares};
