//! Minimal reverse-mode differentiation over dense f64 tensors.
//!
//! Just enough machinery for a shared-MLP point encoder, its heads, and the
//! training losses: a growable tape of recorded ops, a reverse sweep, SGD and
//! Adam updates, and a single-file weights format.

mod check;
mod optim;
mod tape;
mod tensor;
mod weights;

pub use check::finite_difference_max_rel_err;
pub use optim::{sgd_step, Adam, AdamConfig};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
pub use weights::{read_weights, write_weights};
