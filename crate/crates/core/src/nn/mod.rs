//! Matrices, reverse-mode autodiff, MLPs and the Adam optimizer.

mod adam;
mod matrix;
mod mlp;
mod tape;

use thiserror::Error;

pub use adam::Adam;
pub use matrix::Matrix;
pub use mlp::{Linear, Mlp};
pub use tape::{CustomOp, Gradients, Tape, Var};

#[cfg(test)]
pub(crate) use tape::gradcheck;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite gradient in parameter block {block}")]
    NonFinite { block: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
