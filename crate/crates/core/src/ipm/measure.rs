use crate::error::{Error, Result};
use crate::sampling::PointSet;

const NORMALIZATION_TOL: f64 = 1e-12;

/// A finitely supported probability measure.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    support: PointSet,
    weights: Vec<f64>,
    uniform: bool,
}

impl DiscreteMeasure {
    /// The empirical measure: equal weight `1/n` on every point.
    pub fn empirical(support: PointSet) -> Result<Self> {
        let n = support.len();
        if n == 0 {
            return Err(Error::InvalidSpec("empirical measure of an empty sample".into()));
        }
        Ok(Self { support, weights: vec![1.0 / n as f64; n], uniform: true })
    }

    pub fn weighted(support: PointSet, weights: Vec<f64>) -> Result<Self> {
        if support.len() != weights.len() {
            return Err(Error::DimensionMismatch { expected: support.len(), got: weights.len() });
        }
        if support.is_empty() {
            return Err(Error::InvalidSpec("measure with empty support".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidSpec(format!("negative or non-finite weight {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Unnormalized(total));
        }
        let uniform = weights.iter().all(|&w| w == weights[0]);
        Ok(Self { support, weights, uniform })
    }

    /// One-dimensional empirical measure from raw values.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        Self::empirical(PointSet::from_flat(1, values.to_vec())?)
    }

    pub fn support(&self) -> &PointSet {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.support.dim()
    }

    pub fn has_uniform_weights(&self) -> bool {
        self.uniform
    }

    /// Expectation of `f` under the measure.
    pub fn expect<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        self.support.rows().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }
}
