//! Flat parameter vectors.
//!
//! `ParamVector` is the common currency of the crate: model weights, client
//! updates and global snapshots are all flat `f64` vectors. Accumulations run
//! in fixed left-to-right order so results are bit-reproducible across runs.

use crate::error::{Error, Result};

/// A fixed-length vector of finite 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
}

impl ParamVector {
    /// Builds a vector, rejecting empty input and non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("parameter vector must be non-empty".into()));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "parameter vector entry".into(),
            });
        }
        Ok(Self { values })
    }

    /// The zero vector of length `len`.
    pub fn zeros(len: usize) -> Result<Self> {
        Self::new(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn check_len(&self, other: &Self) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok(())
    }

    /// Element-wise sum.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_len(other)?;
        let out: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        Self::new(out).map_err(|_| Error::NonFinite {
            context: "vector addition".into(),
        })
    }

    /// Element-wise difference `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_len(other)?;
        let out: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Self::new(out).map_err(|_| Error::NonFinite {
            context: "vector subtraction".into(),
        })
    }

    /// Element-wise scaling by a finite scalar.
    pub fn scale(&self, c: f64) -> Result<Self> {
        if !c.is_finite() {
            return Err(Error::NonFinite {
                context: "scale factor".into(),
            });
        }
        let out: Vec<f64> = self.values.iter().map(|a| c * a).collect();
        Self::new(out).map_err(|_| Error::NonFinite {
            context: "vector scaling".into(),
        })
    }

    /// Euclidean norm, accumulated left to right.
    pub fn l2_norm(&self) -> f64 {
        let mut acc = 0.0;
        for v in &self.values {
            acc += v * v;
        }
        acc.sqrt()
    }

    /// Inner product, accumulated left to right. Lengths must match.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_len(other)?;
        let mut acc = 0.0;
        for (a, b) in self.values.iter().zip(&other.values) {
            acc += a * b;
        }
        Ok(acc)
    }
}

impl AsRef<[f64]> for ParamVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}
