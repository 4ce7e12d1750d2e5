// SPDX-License-Identifier: Apache-2.0

use crate::blockwise::{double_dequantize, BlockQuantized};
use crate::{Matrix, QuantError};

/// `L1` is d×r and `L2` is r×k for a d×k base weight.
#[derive(Clone, Debug, PartialEq)]
pub struct LowRankAdapter {
    l1: Matrix,
    l2: Matrix,
}

impl LowRankAdapter {
    pub fn new(l1: Matrix, l2: Matrix) -> Result<LowRankAdapter, QuantError> {
        let (d, r) = l1.dim();
        let (r2, k) = l2.dim();
        if r2 != r {
            return Err(QuantError::ShapeMismatch { expected: (r, k), got: (r2, k) });
        }
        let max = d.min(k);
        if r == 0 || r > max {
            return Err(QuantError::InvalidRank { rank: r, max });
        }
        Ok(LowRankAdapter { l1, l2 })
    }

    pub fn zeros(d: usize, r: usize, k: usize) -> Result<LowRankAdapter, QuantError> {
        LowRankAdapter::new(Matrix::zeros((d, r)), Matrix::zeros((r, k)))
    }

    pub fn rank(&self) -> usize {
        self.l1.ncols()
    }

    /// The (d, k) base shape this adapter fits.
    pub fn base_shape(&self) -> (usize, usize) {
        (self.l1.nrows(), self.l2.ncols())
    }

    pub fn l1(&self) -> &Matrix {
        &self.l1
    }

    pub fn l2(&self) -> &Matrix {
        &self.l2
    }

    /// The dense update `L1·L2`.
    pub fn delta(&self) -> Matrix {
        self.l1.dot(&self.l2)
    }

    fn fits(&self, q: &BlockQuantized) -> Result<(), QuantError> {
        q.check()?;
        if q.shape != self.base_shape() {
            return Err(QuantError::ShapeMismatch { expected: q.shape, got: self.base_shape() });
        }
        Ok(())
    }
}

/// `X·dequant(q) + (X·L1)·L2`; the adapter path never forms the d×k update.
pub fn adapter_forward(x: &Matrix, q: &BlockQuantized, adapter: &LowRankAdapter) -> Result<Matrix, QuantError> {
    adapter.fits(q)?;
    if x.ncols() != q.shape.0 {
        return Err(QuantError::ShapeMismatch { expected: (x.nrows(), q.shape.0), got: x.dim() });
    }
    let base = x.dot(&double_dequantize(q));
    Ok(base + x.dot(adapter.l1()).dot(adapter.l2()))
}

/// `dequant(q) + L1·L2`, the single weight that replaces base and adapter.
pub fn merge_weights(q: &BlockQuantized, adapter: &LowRankAdapter) -> Result<Matrix, QuantError> {
    adapter.fits(q)?;
    Ok(double_dequantize(q) + adapter.delta())
}
