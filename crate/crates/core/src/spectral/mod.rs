//! Truncated Fourier fields on T^d x T.

pub mod doubled;
pub mod field;
pub mod grid;
pub mod norms;
pub mod param;
pub mod trunc;

pub use doubled::DoubledField;
pub use field::{FieldJson, Parity, SpectralField};
pub use grid::Grid;
pub use norms::lipschitz_norm;
pub use param::{ParamGrid, LAMBDA_MAX, LAMBDA_MIN};
pub use trunc::{bracket, dot, norm_inf, ModeIndex, Sigma, Truncation};
