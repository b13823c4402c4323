use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients of a P1 function, one per mesh node in node order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodalField {
    values: Vec<f64>,
}

impl NodalField {
    pub fn zeros(n: usize) -> Self {
        Self::constant(n, 0.0)
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self { values: vec![c; n] }
    }

    /// Wraps `values`, rejecting non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NumericalDomain(format!(
                "non-finite nodal value {} at node {i}",
                values[i]
            )));
        }
        Ok(Self { values })
    }

    pub(crate) fn from_vec(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// `self + alpha * other`
    pub fn axpy(&self, alpha: f64, other: &[f64]) -> Self {
        Self {
            values: self
                .values
                .iter()
                .zip(other)
                .map(|(a, b)| a + alpha * b)
                .collect(),
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            values: self.values.iter().map(|a| alpha * a).collect(),
        }
    }
}

impl Deref for NodalField {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

impl DerefMut for NodalField {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

impl From<NodalField> for Vec<f64> {
    fn from(f: NodalField) -> Self {
        f.values
    }
}
