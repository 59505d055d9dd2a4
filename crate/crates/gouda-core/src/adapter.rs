//! The trainable linear map over frozen embeddings.
//!
//! Instead of fine-tuning a backbone, adaptation learns a single d×d matrix
//! applied to every embedding. Identity initialization makes the untrained
//! adapter exactly the direct-testing baseline.

use crate::error::{GoudaError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearAdapter {
    dim: usize,
    w: Vec<f64>, // row-major d×d
}

impl LinearAdapter {
    pub fn identity(dim: usize) -> Self {
        let mut w = vec![0.0; dim * dim];
        for i in 0..dim {
            w[i * dim + i] = 1.0;
        }
        LinearAdapter { dim, w }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut w = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(GoudaError::DimensionMismatch { expected: dim, got: row.len() });
            }
            for &v in row {
                if !v.is_finite() {
                    return Err(GoudaError::InvalidConfig(
                        "adapter weights must be finite".into(),
                    ));
                }
                w.push(v);
            }
        }
        Ok(LinearAdapter { dim, w })
    }

    /// Rebuild from a flat row-major buffer of length `dim * dim`.
    pub fn from_flat(dim: usize, w: &[f64]) -> Result<Self> {
        if w.len() != dim * dim {
            return Err(GoudaError::DimensionMismatch { expected: dim * dim, got: w.len() });
        }
        Ok(LinearAdapter { dim, w: w.to_vec() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_identity(&self) -> bool {
        *self == LinearAdapter::identity(self.dim)
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    /// Mutable flat weights, for the optimizer.
    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.w
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.w.chunks_exact(self.dim)
    }

    /// `W·e` without the collapse check; loss code does its own checking so
    /// it can report which batch element collapsed.
    pub fn apply_vec(&self, e: &[f64]) -> Result<Vec<f64>> {
        if e.len() != self.dim {
            return Err(GoudaError::DimensionMismatch { expected: self.dim, got: e.len() });
        }
        let mut out = vec![0.0; self.dim];
        for (i, slot) in out.iter_mut().enumerate() {
            let row = &self.w[i * self.dim..(i + 1) * self.dim];
            *slot = row.iter().zip(e).map(|(w, x)| w * x).sum();
        }
        Ok(out)
    }

    /// Map every embedding through `W`, rejecting any output that collapses
    /// to (numerically) zero norm — cosine distance would be undefined there.
    pub fn apply<E: AsRef<[f64]>>(&self, embeddings: &[E]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(embeddings.len());
        for (index, e) in embeddings.iter().enumerate() {
            let mapped = self.apply_vec(e.as_ref())?;
            let norm_sq: f64 = mapped.iter().map(|v| v * v).sum();
            if !(norm_sq > f64::MIN_POSITIVE) {
                return Err(GoudaError::CollapsedEmbedding { index });
            }
            out.push(mapped);
        }
        Ok(out)
    }
}
