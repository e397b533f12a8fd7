//! JSON wire format for complex matrices and vectors.
//!
//! Matrices travel as row-major arrays of rows, each entry a `[re, im]` pair:
//! `[[[1.0, 0.0], [0.0, 1.0]], ...]`. Vectors are flat arrays of pairs.

use crate::{CMatrix, CVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Serializable image of a complex matrix.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WireMatrix(pub Vec<Vec<[f64; 2]>>);

/// Serializable image of a complex vector.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WireVector(pub Vec<[f64; 2]>);

impl From<&CMatrix> for WireMatrix {
    fn from(m: &CMatrix) -> Self {
        WireMatrix(
            (0..m.nrows())
                .map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
                .collect(),
        )
    }
}

impl WireMatrix {
    /// Rebuild the dense matrix; fails on ragged rows.
    pub fn to_matrix(&self) -> Option<CMatrix> {
        let rows = self.0.len();
        let cols = self.0.first().map_or(0, |r| r.len());
        if self.0.iter().any(|r| r.len() != cols) {
            return None;
        }
        Some(CMatrix::from_fn(rows, cols, |r, c| {
            Complex64::new(self.0[r][c][0], self.0[r][c][1])
        }))
    }
}

impl From<&CVector> for WireVector {
    fn from(v: &CVector) -> Self {
        WireVector(v.iter().map(|z| [z.re, z.im]).collect())
    }
}

impl WireVector {
    pub fn to_vector(&self) -> CVector {
        CVector::from_iterator(self.0.len(), self.0.iter().map(|p| Complex64::new(p[0], p[1])))
    }
}
