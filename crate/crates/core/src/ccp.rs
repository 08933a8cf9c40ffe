//! Corresponding-colour-patch matrices.
//!
//! An m x n matrix holding one scalar channel (intensity or one chromaticity)
//! of the same n patches observed across m images: rows are images, columns
//! are patches.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_buf::ColorPatchSample;

/// Which scalar channel of a patch sample a matrix carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CcpChannel {
    Intensity,
    ChromaR,
    ChromaB,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcpMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CcpMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "CCP matrix entries",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Config(format!("non-finite CCP entry {bad}")));
        }
        Ok(CcpMatrix { rows, cols, data })
    }

    /// Build from per-image patch samples (one inner vector per image, all of
    /// equal length), pulling out one scalar channel.
    pub fn from_samples(samples: &[Vec<ColorPatchSample>], channel: CcpChannel) -> Result<Self> {
        let rows = samples.len();
        if rows == 0 {
            return Err(Error::InsufficientData {
                context: "images for CCP matrix",
                required: 1,
                actual: 0,
            });
        }
        let cols = samples[0].len();
        let mut data = Vec::with_capacity(rows * cols);
        for row in samples {
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    context: "patches per image",
                    expected: cols,
                    actual: row.len(),
                });
            }
            data.extend(row.iter().map(|s| match channel {
                CcpChannel::Intensity => s.intensity,
                CcpChannel::ChromaR => s.chroma_r,
                CcpChannel::ChromaB => s.chroma_b,
            }));
        }
        CcpMatrix::new(rows, cols, data)
    }

    /// Number of images m.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of patches n.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mean of each column.
    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (m, v) in means.iter_mut().zip(self.row(r)) {
                *m += v;
            }
        }
        let inv = 1.0 / self.rows as f64;
        for m in means.iter_mut() {
            *m *= inv;
        }
        means
    }

    /// Apply a scalar map to every entry.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CcpMatrix {
        CcpMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Reorder columns by the given permutation (`perm[new] = old`).
    pub fn permute_columns(&self, perm: &[usize]) -> CcpMatrix {
        debug_assert_eq!(perm.len(), self.cols);
        let mut data = Vec::with_capacity(self.data.len());
        for r in 0..self.rows {
            let row = self.row(r);
            data.extend(perm.iter().map(|&old| row[old]));
        }
        CcpMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_ragged_data() {
        assert!(CcpMatrix::new(2, 3, vec![0.0; 5]).is_err());
    }

    #[test]
    fn column_means_are_exact() {
        let m = CcpMatrix::new(2, 3, vec![0.0, 0.2, 0.4, 1.0, 0.4, 0.6]).unwrap();
        let means = m.column_means();
        assert_eq!(means, vec![0.5, 0.30000000000000004, 0.5]);
    }

    #[test]
    fn permute_columns_keeps_rows_associated() {
        let m = CcpMatrix::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0].iter().map(|v| v / 10.0).collect()).unwrap();
        let p = m.permute_columns(&[2, 0, 1]);
        assert_eq!(p.row(0), &[0.3, 0.1, 0.2]);
        assert_eq!(p.row(1), &[0.6, 0.4, 0.5]);
    }
}
