// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::codebook::{nf4_codebook, Codebook};
use crate::{Matrix, QuantError};

/// Weights sharing one absmax constant.
pub const WEIGHT_BLOCK: usize = 64;
/// Absmax constants sharing one affine second-level constant.
pub const CONSTANT_BLOCK: usize = 256;

/// Full-precision parameters of one block of 8-bit absmax codes:
/// `absmax = min + code * scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineConstant {
    pub scale: f64,
    pub min: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockQuantized {
    /// One 4-bit code per weight, row-major.
    pub codes: Vec<u8>,
    /// One 8-bit code per weight block.
    pub c2_codes: Vec<u8>,
    /// One entry per block of `CONSTANT_BLOCK` absmax codes.
    pub c1: Vec<AffineConstant>,
    pub shape: (usize, usize),
    pub codebook: Codebook,
}

impl BlockQuantized {
    pub fn len(&self) -> usize {
        self.shape.0 * self.shape.1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn block_count(&self) -> usize {
        self.len().div_ceil(WEIGHT_BLOCK)
    }

    pub fn check(&self) -> Result<(), QuantError> {
        let n = self.len();
        let bad = |m: String| Err(QuantError::Malformed(m));
        if self.codes.len() != n {
            return bad(format!("{} codes for {n} weights", self.codes.len()));
        }
        if let Some(c) = self.codes.iter().find(|c| **c > 15) {
            return bad(format!("code {c} exceeds 4 bits"));
        }
        if self.c2_codes.len() != self.block_count() {
            return bad(format!("{} absmax codes for {} blocks", self.c2_codes.len(), self.block_count()));
        }
        if self.c1.len() != self.c2_codes.len().div_ceil(CONSTANT_BLOCK) {
            return bad(format!("{} second-level constants", self.c1.len()));
        }
        Ok(())
    }

    /// The per-block absmax values recovered from `(c1, c2)`.
    pub fn absmax(&self) -> Vec<f64> {
        self.c2_codes
            .iter()
            .enumerate()
            .map(|(b, q)| {
                let c = self.c1[b / CONSTANT_BLOCK];
                c.min + f64::from(*q) * c.scale
            })
            .collect()
    }
}

/// Affine 8-bit codes for one block of absmax values. A positive absmax never
/// decodes to zero, which would erase its whole weight block.
fn quantize_constants(absmax: &[f64]) -> (Vec<u8>, AffineConstant) {
    let min = absmax.iter().copied().fold(f64::INFINITY, f64::min);
    let max = absmax.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = (max - min) / 255.0;
    let codes = absmax
        .iter()
        .map(|a| {
            let q = if scale > 0.0 { ((a - min) / scale).round().clamp(0.0, 255.0) as u8 } else { 0 };
            if *a > 0.0 && min + f64::from(q) * scale == 0.0 {
                1
            } else {
                q
            }
        })
        .collect();
    (codes, AffineConstant { scale, min })
}

pub fn quantize(w: &Matrix) -> Result<BlockQuantized, QuantError> {
    quantize_with(w, &nf4_codebook())
}

pub fn quantize_with(w: &Matrix, codebook: &Codebook) -> Result<BlockQuantized, QuantError> {
    let flat: Vec<f64> = w.iter().copied().collect();
    if let Some(index) = flat.iter().position(|x| !x.is_finite()) {
        return Err(QuantError::NonFiniteInput { index });
    }
    let zero = codebook.zero_code();
    let mut codes = Vec::with_capacity(flat.len());
    let mut absmax = Vec::with_capacity(flat.len().div_ceil(WEIGHT_BLOCK));
    for block in flat.chunks(WEIGHT_BLOCK) {
        let a = block.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        absmax.push(a);
        if a == 0.0 {
            codes.extend(std::iter::repeat_n(zero, block.len()));
        } else {
            codes.extend(block.iter().map(|x| codebook.nearest(x / a)));
        }
    }
    let mut c2_codes = Vec::with_capacity(absmax.len());
    let mut c1 = Vec::new();
    for group in absmax.chunks(CONSTANT_BLOCK) {
        let (q, c) = quantize_constants(group);
        c2_codes.extend(q);
        c1.push(c);
    }
    Ok(BlockQuantized { codes, c2_codes, c1, shape: w.dim(), codebook: codebook.clone() })
}

/// Inner dequantization recovers each block's absmax from `(c1, c2)`; outer
/// dequantization scales the codebook levels by it.
pub fn double_dequantize(q: &BlockQuantized) -> Matrix {
    let absmax = q.absmax();
    let values: Vec<f64> =
        q.codes.iter().enumerate().map(|(i, c)| q.codebook.level(*c) * absmax[i / WEIGHT_BLOCK]).collect();
    Matrix::from_shape_vec(q.shape, values).expect("codes match shape")
}
