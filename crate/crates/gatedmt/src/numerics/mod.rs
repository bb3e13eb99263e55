//! Minimal dense-tensor math with tape-based reverse-mode differentiation.

pub mod fd;
pub mod precision;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use fd::{finite_difference_gradient, relative_error};
pub use precision::{f64_mode, set_f64_mode, set_nan_debug, F64Guard};
pub use rng::Rng;
pub use tape::{Tape, Var};
pub use tensor::{Parameter, Tensor};
