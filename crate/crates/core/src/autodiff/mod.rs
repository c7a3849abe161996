//! Minimal reverse-mode automatic differentiation over [`Tensor`](crate::Tensor).
//!
//! A [`Tape`] owns every value produced during a forward pass together with
//! the rule that maps its output gradient back to its inputs. Calling
//! [`Tape::backward`] sweeps the record in reverse creation order, summing
//! contributions where a value fans out to several consumers.

mod ops;
mod tape;

pub use ops::{sigmoid, Activation, Pool, BCE_EPSILON};
pub use tape::{Gradients, Tape, Var};
