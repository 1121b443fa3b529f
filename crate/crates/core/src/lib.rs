//! Parallel-beam limited-angle tomography: projection and backprojection,
//! the stretched-sinogram operator, ram-lak FBP baselines, tilt-series
//! augmentation, synthetic phantoms, and MSE evaluation sweeps.

pub mod augment;
pub mod classic;
pub mod config;
pub mod error;
pub mod eval;
pub mod io;
pub mod phantom;
pub mod projector;
pub mod rng;
pub mod sampling;
pub mod stretch;
pub mod tensor;

pub use error::{Error, Result};
pub use io::{read_tensor, write_tensor, Tensor};
pub use tensor::{StackKind, TiltGeometry, TiltStack, Volume};
