pub mod discrete;
pub mod error;
pub mod estimate;
pub mod gaussian;
pub mod mc;
pub mod ou;
pub mod partitions;
pub(crate) mod planar;
pub mod quadrature;
pub mod special;
pub mod stability;
pub mod variation;

pub use error::{Error, Result};
pub use estimate::{Budget, Estimate, Method, Mode};
pub use gaussian::{Correlation, GaussianVector};
