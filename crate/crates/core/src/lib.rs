pub mod error;
pub mod inner;
pub mod io;
pub mod objective;
pub mod problems;
pub mod regularizers;
pub mod solver;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
pub use objective::SmoothObjective;
pub use regularizers::BregmanFunction;
pub use tensor::Tensor;
