//! Finite-dimensional normed spaces and the compact convex bodies the maps act on.
//!
//! Every norm offered here is absolute (it depends only on `|v_i|`) and
//! monotone, which several closed forms below rely on: box distances via
//! clamping, box diameters via the corner difference, and Lipschitz bounds
//! for coordinatewise maps.

mod body;
mod polytope;

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::float::{abs, sqrt};

pub use body::{ConvexBody, Shape, ROUNDING_SLACK};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid normed space: {0}")]
    InvalidSpace(String),
    #[error("invalid convex body: {0}")]
    InvalidBody(String),
}

/// A point (or vector) of the ambient space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn zeros(dim: usize) -> Self {
        Point(alloc::vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// `λ·self + (1 − λ)·other`.
    pub fn lerp(&self, other: &Point, lambda: f64) -> Point {
        Point(self.0.iter().zip(&other.0).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect())
    }

    pub fn sub(&self, other: &Point) -> Point {
        Point(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }
}

impl Deref for Point {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Point {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

impl<const N: usize> From<[f64; N]> for Point {
    fn from(v: [f64; N]) -> Self {
        Point(v.to_vec())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Norm {
    #[serde(rename = "l1")]
    L1,
    #[serde(rename = "l2")]
    L2,
    #[serde(rename = "linf")]
    LInf,
    #[serde(rename = "weighted_l1")]
    WeightedL1 { weights: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace")]
pub struct NormedSpace {
    dim: usize,
    norm: Norm,
}

#[derive(Deserialize)]
struct RawSpace {
    dim: usize,
    norm: Norm,
}

impl TryFrom<RawSpace> for NormedSpace {
    type Error = GeometryError;

    fn try_from(raw: RawSpace) -> Result<Self, Self::Error> {
        NormedSpace::new(raw.dim, raw.norm)
    }
}

impl NormedSpace {
    pub fn new(dim: usize, norm: Norm) -> Result<Self, GeometryError> {
        if dim == 0 {
            return Err(GeometryError::InvalidSpace("dimension must be at least 1".into()));
        }
        if let Norm::WeightedL1 { weights } = &norm {
            if weights.len() != dim {
                return Err(GeometryError::InvalidSpace(alloc::format!(
                    "{} weights for dimension {dim}",
                    weights.len()
                )));
            }
            if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                return Err(GeometryError::InvalidSpace("weights must be finite and strictly positive".into()));
            }
        }
        Ok(Self { dim, norm })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm_kind(&self) -> &Norm {
        &self.norm
    }

    pub fn check_dim(&self, v: &[f64]) -> Result<(), GeometryError> {
        if v.len() == self.dim {
            Ok(())
        } else {
            Err(GeometryError::DimensionMismatch { expected: self.dim, found: v.len() })
        }
    }

    /// Norm of `v` without a dimension check.
    #[inline]
    pub fn norm(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.dim);
        match &self.norm {
            Norm::L1 => v.iter().map(|x| abs(*x)).sum(),
            Norm::L2 => euclidean(v),
            Norm::LInf => v.iter().fold(0.0, |m, x| m.max(abs(*x))),
            Norm::WeightedL1 { weights } => v.iter().zip(weights).map(|(x, w)| w * abs(*x)).sum(),
        }
    }

    /// `‖a − b‖` without allocating.
    #[inline]
    pub fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match &self.norm {
            Norm::L1 => a.iter().zip(b).map(|(x, y)| abs(x - y)).sum(),
            Norm::L2 => sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()),
            Norm::LInf => a.iter().zip(b).fold(0.0, |m, (x, y)| m.max(abs(x - y))),
            Norm::WeightedL1 { weights } => {
                a.iter().zip(b).zip(weights).map(|((x, y), w)| w * abs(x - y)).sum()
            }
        }
    }
}

/// Checked norm: the selected norm of `v`, or a dimension error.
pub fn norm_of(space: &NormedSpace, v: &[f64]) -> Result<f64, GeometryError> {
    space.check_dim(v)?;
    Ok(space.norm(v))
}

pub(crate) fn euclidean(v: &[f64]) -> f64 {
    // Scaled to avoid overflow for large coordinates.
    let scale = v.iter().fold(0.0f64, |m, x| m.max(abs(*x)));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * sqrt(v.iter().map(|x| (x / scale) * (x / scale)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn space(dim: usize, norm: Norm) -> NormedSpace {
        NormedSpace::new(dim, norm).unwrap()
    }

    #[test]
    fn closed_form_norms() {
        let v = [1.0, -2.0, 0.5];
        assert_eq!(norm_of(&space(3, Norm::L1), &v).unwrap(), 3.5);
        assert_eq!(norm_of(&space(3, Norm::LInf), &v).unwrap(), 2.0);
        assert_eq!(norm_of(&space(2, Norm::L2), &[3.0, 4.0]).unwrap(), 5.0);
        let w = space(3, Norm::WeightedL1 { weights: vec![1.0, 2.0, 4.0] });
        assert_eq!(norm_of(&w, &v).unwrap(), 1.0 + 4.0 + 2.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let err = norm_of(&space(2, Norm::L2), &[1.0, 2.0, 3.0]).unwrap_err();
        assert_eq!(err, GeometryError::DimensionMismatch { expected: 2, found: 3 });
    }

    #[test]
    fn invalid_spaces() {
        assert!(NormedSpace::new(0, Norm::L2).is_err());
        assert!(NormedSpace::new(2, Norm::WeightedL1 { weights: vec![1.0] }).is_err());
        assert!(NormedSpace::new(2, Norm::WeightedL1 { weights: vec![1.0, 0.0] }).is_err());
    }

    #[test]
    fn space_json_is_validated() {
        let ok: NormedSpace = serde_json::from_str(r#"{"dim":2,"norm":{"kind":"l2"}}"#).unwrap();
        assert_eq!(ok.dim(), 2);
        assert!(serde_json::from_str::<NormedSpace>(r#"{"dim":0,"norm":{"kind":"l2"}}"#).is_err());
    }

    #[test]
    fn norm_json_tags() {
        let n: Norm = serde_json::from_str(r#"{"kind":"weighted_l1","weights":[1.0,2.0]}"#).unwrap();
        assert_eq!(n, Norm::WeightedL1 { weights: vec![1.0, 2.0] });
        assert_eq!(serde_json::to_string(&Norm::LInf).unwrap(), r#"{"kind":"linf"}"#);
    }
}
