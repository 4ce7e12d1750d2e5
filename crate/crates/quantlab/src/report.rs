// SPDX-License-Identifier: Apache-2.0

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::blockwise::{double_dequantize, quantize_with};
use crate::codebook::{nf4_codebook, uniform_codebook};
use crate::{Matrix, QuantError};

/// A rows×cols matrix of standard-normal samples, row-major from one stream.
pub fn seeded_normal(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)).collect();
    Matrix::from_shape_vec((rows, cols), values).expect("sized")
}

/// `‖a − b‖₂ / ‖a‖₂`, or the absolute norm when `a` is zero.
pub fn relative_error(a: &Matrix, b: &Matrix) -> f64 {
    let diff = (a - b).mapv(|x| x * x).sum().sqrt();
    let norm = a.mapv(|x| x * x).sum().sqrt();
    if norm == 0.0 {
        diff
    } else {
        diff / norm
    }
}

/// Round-trip error of a seeded normal matrix under both codebooks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantReport {
    pub seed: u64,
    pub shape: (usize, usize),
    pub nf4_levels: Vec<f64>,
    pub nf4_relative_error: f64,
    pub uniform_relative_error: f64,
}

impl QuantReport {
    pub fn compute(rows: usize, cols: usize, seed: u64) -> Result<QuantReport, QuantError> {
        let w = seeded_normal(rows, cols, seed);
        let nf4 = nf4_codebook();
        let err = |cb| quantize_with(&w, cb).map(|q| relative_error(&w, &double_dequantize(&q)));
        Ok(QuantReport {
            seed,
            shape: (rows, cols),
            nf4_levels: nf4.levels.to_vec(),
            nf4_relative_error: err(&nf4)?,
            uniform_relative_error: err(&uniform_codebook())?,
        })
    }
}
