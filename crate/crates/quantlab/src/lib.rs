// SPDX-License-Identifier: Apache-2.0
//! 4-bit NormalFloat quantization with double-quantized block constants, and
//! the quantized-base plus low-rank adapter forward pass.
//!
//! Everything is computed in `f64`; the narrow storage formats are modeled by
//! code widths only.

mod adapter;
mod blockwise;
mod codebook;
mod report;

use thiserror::Error;

pub use adapter::{adapter_forward, merge_weights, LowRankAdapter};
pub use blockwise::{
    double_dequantize, quantize, quantize_with, AffineConstant, BlockQuantized, CONSTANT_BLOCK, WEIGHT_BLOCK,
};
pub use codebook::{nf4_codebook, uniform_codebook, Codebook, NF4_LEVELS};
pub use report::{relative_error, seeded_normal, QuantReport};

pub type Matrix = ndarray::Array2<f64>;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum QuantError {
    #[error("non-finite input at flat index {index}")]
    NonFiniteInput { index: usize },
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: (usize, usize), got: (usize, usize) },
    #[error("adapter rank {rank} must be in 1..={max}")]
    InvalidRank { rank: usize, max: usize },
    #[error("malformed quantized tensor: {0}")]
    Malformed(String),
}
