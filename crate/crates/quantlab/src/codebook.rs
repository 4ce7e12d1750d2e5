// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

/// Standard-normal quantiles at evenly spaced probabilities, with
/// δ = (1/32 + 1/30)/2: eight points on [δ, 0.5) below zero, seven on
/// (0.5, 1−δ] above it, exact 0, and each side divided by its extreme
/// quantile so the ends are exactly ±1. Computed offline with scipy's
/// `norm.ppf` in double precision.
#[allow(clippy::excessive_precision)]
pub const NF4_LEVELS: [f64; 16] = [
    -1.0,
    -0.7229566441594734,
    -0.5626168879699849,
    -0.44070973186421625,
    -0.3379151367131279,
    -0.2461122513474594,
    -0.1609301443802907,
    -0.07958031495840909,
    0.0,
    0.09104997598578049,
    0.1847734028004556,
    0.28444130892108205,
    0.3949174259199071,
    0.5250729594465005,
    0.696192805632343,
    1.0,
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub levels: [f64; 16],
}

pub fn nf4_codebook() -> Codebook {
    Codebook { levels: NF4_LEVELS }
}

/// Sixteen evenly spaced levels on [−1, 1]; it has no exact zero.
pub fn uniform_codebook() -> Codebook {
    let mut levels = [0.0; 16];
    for (i, l) in levels.iter_mut().enumerate() {
        *l = -1.0 + 2.0 * i as f64 / 15.0;
    }
    Codebook { levels }
}

impl Codebook {
    /// Index of the nearest level; ties go to the smaller index.
    pub fn nearest(&self, x: f64) -> u8 {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, l) in self.levels.iter().enumerate() {
            let d = (x - l).abs();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best as u8
    }

    pub fn level(&self, code: u8) -> f64 {
        self.levels[code as usize]
    }

    /// The code that reconstructs exact zero, else the one nearest to it.
    pub fn zero_code(&self) -> u8 {
        self.nearest(0.0)
    }

    /// Strictly increasing, spans exactly [−1, 1], at most one zero.
    pub fn is_well_formed(&self) -> bool {
        self.levels.windows(2).all(|w| w[0] < w[1])
            && self.levels[0] == -1.0
            && self.levels[15] == 1.0
            && self.levels.iter().filter(|l| **l == 0.0).count() <= 1
    }
}
