// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One of the seven loop dimensions of a convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dim {
    N,
    M,
    C,
    P,
    Q,
    R,
    S,
}

impl Dim {
    pub const ALL: [Dim; 7] = [Dim::N, Dim::M, Dim::C, Dim::P, Dim::Q, Dim::R, Dim::S];

    /// Loops over C, R and S accumulate into the same output.
    pub fn is_reduction(self) -> bool {
        matches!(self, Dim::C | Dim::R | Dim::S)
    }

    /// Whether the weight tensor is indexed by this dimension.
    pub fn indexes_weights(self) -> bool {
        matches!(self, Dim::M | Dim::C | Dim::R | Dim::S)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn letter(self) -> char {
        match self {
            Dim::N => 'N',
            Dim::M => 'M',
            Dim::C => 'C',
            Dim::P => 'P',
            Dim::Q => 'Q',
            Dim::R => 'R',
            Dim::S => 'S',
        }
    }

    pub fn from_letter(c: char) -> Option<Dim> {
        Some(match c {
            'N' => Dim::N,
            'M' => Dim::M,
            'C' => Dim::C,
            'P' => Dim::P,
            'Q' => Dim::Q,
            'R' => Dim::R,
            'S' => Dim::S,
            _ => return None,
        })
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for Dim {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.trim().chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Dim::from_letter(c).ok_or_else(|| format!("unknown dimension `{s}`")),
            _ => Err(format!("unknown dimension `{s}`")),
        }
    }
}

/// Axes of an activation tensor as it sits in an on-chip buffer.
///
/// An output activation `(n, m, p, q)` becomes the next layer's input
/// `(n, c = m, h = p, w = q)`, so both share this coordinate system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TensorDim {
    N,
    C,
    H,
    W,
}

impl TensorDim {
    pub const ALL: [TensorDim; 4] = [TensorDim::N, TensorDim::C, TensorDim::H, TensorDim::W];

    pub fn index(self) -> usize {
        self as usize
    }
}
