//! Minimal dense numeric core: row-major `f64` matrices, a define-by-run
//! tape with reverse-mode gradients, and the Adam optimizer.
//!
//! ```
//! use marc_tensor::{Matrix, Tape};
//!
//! let mut tape = Tape::new();
//! let w = tape.leaf(Matrix::from_rows(&[vec![1.0, -2.0]]));
//! let sq = tape.mul(w, w).unwrap();
//! let loss = tape.sum(sq);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.wrt(&tape, w).unwrap().as_slice(), &[2.0, -4.0]);
//! ```

mod adam;
mod error;
mod matrix;
pub mod nn;
mod params;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use error::{Result, TensorError};
pub use matrix::Matrix;
pub use params::{Bound, ParamId, ParamSet};
pub use tape::{Gradients, MixTerm, Tape, Var};
