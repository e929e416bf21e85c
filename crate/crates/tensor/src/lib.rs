//! Dense `f64` tensors with tape-based reverse-mode differentiation.
//!
//! Build a graph by adding leaves to a [`Tape`] and applying operations;
//! call [`Tape::backward`] on a scalar to obtain [`Gradients`]. Models
//! keep their parameters as plain [`Tensor`]s and re-insert them as
//! leaves for every forward pass, so each pass owns an independent graph.
//!
//! ```
//! use tensor::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let w = tape.leaf(Tensor::from_vec(vec![1.0, 2.0]));
//! let sq = tape.mul(w, w).unwrap();
//! let loss = tape.sum(sq).unwrap();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(w).unwrap(), &[2.0, 4.0]);
//! ```

mod backward;
mod error;
pub mod catalog;
pub mod gradcheck;
mod linalg;
mod ops;
pub mod optim;
pub mod rng;
mod tape;
mod tensor;

pub use error::{Result, TensorError};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use optim::{Adam, AdamConfig};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
