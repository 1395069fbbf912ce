//! Q-Wiener noise: covariance kernels, path sampling, and time mollification.

pub mod kernel;
pub mod mollify;
pub mod path;

pub use kernel::{build_kernel, CovarianceKernel, KernelDescriptor, ModeSpec};
pub use mollify::{mollify, MollifiedPath, Mollifier};
pub use path::{
    derive_seed, sample_derivative_path, sample_path, BrownianBundle, NoisePath, PointSet,
};
