//! Weighted L2 geometry on finite supports.
//!
//! A [`WeightedSpace`] is an ordered finite support with strictly positive
//! probability weights summing to one. Functions on the support are plain
//! value vectors ([`SpaceFun`]); the weighted inner product
//!
//! ```text
//!     <f, g> = sum_i w_i f(i) g(i)
//! ```
//!
//! turns them into an L2 space. All operator and estimator geometry
//! downstream is expressed in this inner product, never the Euclidean one.

use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::{Error, Result};

/// Smallest admissible weight. Anything below counts as a zero weight.
const WEIGHT_FLOOR: f64 = 1e-12;
/// Tolerance on the total mass of a space.
const MASS_TOL: f64 = 1e-12;
/// Relative eigenvalue cutoff for the projection Gram pseudoinverse.
const GRAM_CUTOFF: f64 = 1e-10;

/// Finite probability space: ordered labeled support plus positive weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WeightedSpaceRaw", into = "WeightedSpaceRaw")]
pub struct WeightedSpace {
    labels: Vec<String>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct WeightedSpaceRaw {
    labels: Vec<String>,
    weights: Vec<f64>,
}

impl TryFrom<WeightedSpaceRaw> for WeightedSpace {
    type Error = Error;
    fn try_from(raw: WeightedSpaceRaw) -> Result<Self> {
        WeightedSpace::new(raw.labels, raw.weights)
    }
}

impl From<WeightedSpace> for WeightedSpaceRaw {
    fn from(space: WeightedSpace) -> Self {
        WeightedSpaceRaw {
            labels: space.labels,
            weights: space.weights,
        }
    }
}

impl WeightedSpace {
    /// Builds a space, validating positivity, unit mass, and label
    /// distinctness.
    pub fn new(labels: Vec<String>, weights: Vec<f64>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidSpace("support is empty".into()));
        }
        if labels.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: labels.len(),
                got: weights.len(),
            });
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < WEIGHT_FLOOR {
                return Err(Error::InvalidSpace(format!(
                    "weight {w:e} at index {i} is below the floor {WEIGHT_FLOOR:e}"
                )));
            }
        }
        let mass: f64 = weights.iter().sum();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidSpace(format!(
                "weights sum to {mass:.15} instead of 1"
            )));
        }
        let mut seen = labels.clone();
        seen.sort();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidSpace("support labels are not distinct".into()));
        }
        Ok(WeightedSpace { labels, weights })
    }

    /// Space with weights given and labels "0", "1", ....
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let labels = (0..weights.len()).map(|i| i.to_string()).collect();
        Self::new(labels, weights)
    }

    /// Uniform space on `n` points labeled "0" through "n-1".
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSpace("support is empty".into()));
        }
        Self::from_weights(vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    /// Rejects functions whose length does not match the support or whose
    /// values are not finite.
    pub fn check_fun(&self, f: &SpaceFun) -> Result<()> {
        if f.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: f.len(),
            });
        }
        if f.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpace("function has non-finite values".into()));
        }
        Ok(())
    }

    /// Weighted inner product `sum_i w_i f(i) g(i)`.
    pub fn inner_product(&self, f: &SpaceFun, g: &SpaceFun) -> Result<f64> {
        self.check_fun(f)?;
        self.check_fun(g)?;
        Ok(self
            .weights
            .iter()
            .zip(f.values().iter().zip(g.values()))
            .map(|(w, (a, b))| w * a * b)
            .sum())
    }

    /// Weighted L2 norm.
    pub fn norm(&self, f: &SpaceFun) -> Result<f64> {
        Ok(self.inner_product(f, f)?.max(0.0).sqrt())
    }

    /// Mean of `f` under the space weights, i.e. `<f, 1>`.
    pub fn mean(&self, f: &SpaceFun) -> Result<f64> {
        self.inner_product(f, &SpaceFun::constant(1.0, self.len()))
    }

    /// Weighted L2 distance between two functions.
    pub fn distance(&self, f: &SpaceFun, g: &SpaceFun) -> Result<f64> {
        self.norm(&f.sub(g))
    }

    /// Orthogonal projection of `f` onto the span of `basis` in the weighted
    /// inner product. The Gram system is solved through an eigenvalue
    /// pseudoinverse with relative cutoff 1e-10, so linearly dependent or
    /// nearly dependent spanning sets are fine. An empty basis projects onto
    /// the zero function.
    pub fn orthogonal_projection(&self, f: &SpaceFun, basis: &[SpaceFun]) -> Result<SpaceFun> {
        self.check_fun(f)?;
        if basis.is_empty() {
            return Ok(SpaceFun::zeros(self.len()));
        }
        let k = basis.len();
        let mut gram = nalgebra::DMatrix::zeros(k, k);
        let mut rhs = nalgebra::DVector::zeros(k);
        for i in 0..k {
            for j in i..k {
                let v = self.inner_product(&basis[i], &basis[j])?;
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
            rhs[i] = self.inner_product(f, &basis[i])?;
        }
        let coef = linalg::sym_pinv_solve(&gram, &rhs, GRAM_CUTOFF);
        let mut out = SpaceFun::zeros(self.len());
        for (c, b) in coef.iter().zip(basis) {
            out = out.add(&b.scale(*c));
        }
        Ok(out)
    }
}

/// Function on the support of a [`WeightedSpace`]: one real per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpaceFun(Vec<f64>);

impl SpaceFun {
    pub fn new(values: Vec<f64>) -> Self {
        SpaceFun(values)
    }

    pub fn constant(value: f64, len: usize) -> Self {
        SpaceFun(vec![value; len])
    }

    pub fn zeros(len: usize) -> Self {
        Self::constant(0.0, len)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn at(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn add(&self, rhs: &SpaceFun) -> SpaceFun {
        debug_assert_eq!(self.len(), rhs.len());
        SpaceFun(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, rhs: &SpaceFun) -> SpaceFun {
        debug_assert_eq!(self.len(), rhs.len());
        SpaceFun(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, c: f64) -> SpaceFun {
        SpaceFun(self.0.iter().map(|a| c * a).collect())
    }

    /// Largest absolute value over the support.
    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }
}

impl std::ops::Index<usize> for SpaceFun {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}
