//! Independent oracles for validating solver outputs.
//!
//! Nothing in here calls into the resolvent, KM, or retraction code; the
//! linear algebra is delegated to `nalgebra` (LU with partial pivoting and
//! SVD), and norms are found by brute-force enumeration or sweeps rather than
//! the closed forms the certificates use.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::float::abs;
use crate::geometry::{euclidean, ConvexBody, Norm, NormedSpace, Point, Shape};
use crate::linalg::Matrix;

/// Condition numbers above this make a linear-solve oracle unavailable.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "oracle", rename_all = "snake_case")]
pub enum OracleKind {
    AffineFixedPoint { point: Point, residual: f64 },
    BruteForceDiameter { value: f64 },
    OperatorNorm { value: f64, evaluations: usize },
    PairwiseSampling { max_ratio: f64, witness: Option<(Point, Point)> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub kind: OracleKind,
    pub tolerance_used: f64,
}

impl OracleResult {
    /// The fixed point, for the linear-solve oracles.
    pub fn point(&self) -> Option<&Point> {
        match &self.kind {
            OracleKind::AffineFixedPoint { point, .. } => Some(point),
            _ => None,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match &self.kind {
            OracleKind::BruteForceDiameter { value } | OracleKind::OperatorNorm { value, .. } => Some(*value),
            OracleKind::PairwiseSampling { max_ratio, .. } => Some(*max_ratio),
            OracleKind::AffineFixedPoint { .. } => None,
        }
    }
}

/// The oracle cannot answer; callers must skip, never pass, the dependent check.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("oracle unavailable: {0}")]
pub struct OracleUnavailable(pub String);

fn to_dmatrix(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|x| abs(*x)).sum::<f64>()).fold(0.0, f64::max)
}

/// Solves `(I − A)p = b` by LU with partial pivoting.
pub fn affine_fixed_point_oracle(a: &Matrix, b: &[f64]) -> Result<OracleResult, OracleUnavailable> {
    let n = a.rows();
    if !a.is_square() || b.len() != n {
        return Err(OracleUnavailable("shape mismatch".into()));
    }
    let m = DMatrix::<f64>::identity(n, n) - to_dmatrix(a);
    let lu = m.clone().lu();
    let inverse = lu.try_inverse().ok_or_else(|| OracleUnavailable("I − A is singular".into()))?;
    let condition = norm1(&m) * norm1(&inverse);
    if !(condition <= MAX_CONDITION) {
        return Err(OracleUnavailable(alloc::format!("I − A is ill-conditioned (κ₁ ≈ {condition:.3e})")));
    }
    let rhs = DVector::from_column_slice(b);
    let p = m.clone().lu().solve(&rhs).ok_or_else(|| OracleUnavailable("LU solve failed".into()))?;
    let residual = (&m * &p - &rhs).amax();
    Ok(OracleResult {
        kind: OracleKind::AffineFixedPoint { point: Point(p.iter().copied().collect()), residual },
        tolerance_used: f64::EPSILON * condition,
    })
}

/// `‖(I − A)⁻¹‖` in the norm of `space`: how far an approximate fixed point
/// with residual `r` can sit from the exact one (at most `gain · r`).
pub fn fixed_point_gain(a: &Matrix, space: &NormedSpace) -> Result<f64, OracleUnavailable> {
    let n = a.rows();
    if !a.is_square() || n != space.dim() {
        return Err(OracleUnavailable("shape mismatch".into()));
    }
    let m = DMatrix::<f64>::identity(n, n) - to_dmatrix(a);
    let inverse = m.clone().lu().try_inverse().ok_or_else(|| OracleUnavailable("I − A is singular".into()))?;
    if !(norm1(&m) * norm1(&inverse) <= MAX_CONDITION) {
        return Err(OracleUnavailable("I − A is ill-conditioned".into()));
    }
    let inv = Matrix::from_rows(&inverse.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>()).expect("square");
    Ok(operator_norm_oracle(&inv, space).value().unwrap_or(f64::INFINITY))
}

/// Unique common fixed point of affine maps `x ↦ A_k x + b_k`: the least-squares
/// solution of the stacked system `[(I − A_k)] p = [b_k]`, accepted only when the
/// system has full column rank and is consistent.
pub fn stacked_fixed_point_oracle(forms: &[(Matrix, Vec<f64>)]) -> Result<OracleResult, OracleUnavailable> {
    let Some((first, _)) = forms.first() else {
        return Err(OracleUnavailable("empty family".into()));
    };
    let n = first.rows();
    let rows = n * forms.len();
    let mut m = DMatrix::<f64>::zeros(rows, n);
    let mut rhs = DVector::<f64>::zeros(rows);
    for (k, (a, b)) in forms.iter().enumerate() {
        if a.rows() != n || a.cols() != n || b.len() != n {
            return Err(OracleUnavailable("shape mismatch".into()));
        }
        for i in 0..n {
            for j in 0..n {
                m[(k * n + i, j)] = if i == j { 1.0 } else { 0.0 } - a.get(i, j);
            }
            rhs[k * n + i] = b[i];
        }
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 0.0 && smax / smin <= MAX_CONDITION) {
        return Err(OracleUnavailable("common fixed point is not unique (rank-deficient stack)".into()));
    }
    let p = svd.solve(&rhs, 0.0).map_err(|e| OracleUnavailable(e.into()))?;
    let residual = (&m * &p - &rhs).amax();
    let scale = 1.0 + rhs.amax();
    if residual > 1e-9 * scale {
        return Err(OracleUnavailable(alloc::format!("no common fixed point (stacked residual {residual:.3e})")));
    }
    Ok(OracleResult {
        kind: OracleKind::AffineFixedPoint { point: Point(p.iter().copied().collect()), residual },
        tolerance_used: f64::EPSILON * smax / smin,
    })
}

/// Maximum pairwise distance over an enumerated set of extreme points.
pub fn brute_force_diameter(body: &ConvexBody) -> OracleResult {
    let space = body.space();
    let dim = body.dim();
    let points: Vec<Vec<f64>> = match body.shape() {
        Shape::NormBall { center, radius } => unit_ball_extremes(space)
            .into_iter()
            .flat_map(|u| {
                let plus: Vec<f64> = center.iter().zip(&u).map(|(c, x)| c + radius * x).collect();
                let minus: Vec<f64> = center.iter().zip(&u).map(|(c, x)| c - radius * x).collect();
                [plus, minus]
            })
            .collect(),
        Shape::Box { lower, upper } => (0..1usize << dim.min(16))
            .map(|mask| (0..dim).map(|i| if mask >> i & 1 == 1 { upper[i] } else { lower[i] }).collect())
            .collect(),
        Shape::Simplex { scale } => (0..dim)
            .map(|i| {
                let mut v = alloc::vec![0.0; dim];
                v[i] = *scale;
                v
            })
            .collect(),
        Shape::Hull { vertices } => vertices.iter().map(|v| v.0.clone()).collect(),
    };
    let mut best = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.max(space.dist(a, b));
        }
    }
    OracleResult { kind: OracleKind::BruteForceDiameter { value: best }, tolerance_used: 0.0 }
}

/// A few unit vectors of the norm (enough to realize the ball's diameter).
fn unit_ball_extremes(space: &NormedSpace) -> Vec<Vec<f64>> {
    let dim = space.dim();
    (0..dim)
        .map(|i| {
            let mut e = alloc::vec![0.0; dim];
            e[i] = 1.0;
            let len = space.norm(&e);
            e.iter_mut().for_each(|x| *x /= len);
            e
        })
        .collect()
}

/// Operator norm of `a` induced by `space`, by enumeration:
/// L1 / weighted L1 over the unit ball's vertices `±e_i / w_i`, L∞ over all
/// sign vectors, and L2 by a Rayleigh sweep (dim ≤ 3) or SVD.
pub fn operator_norm_oracle(a: &Matrix, space: &NormedSpace) -> OracleResult {
    let n = a.cols();
    let (value, evaluations) = match space.norm_kind() {
        Norm::L1 | Norm::WeightedL1 { .. } => {
            let v = unit_ball_extremes(space).iter().map(|u| space.norm(&a.mul_vec(u))).fold(0.0, f64::max);
            (v, n)
        }
        Norm::LInf => {
            let count = 1usize << n.min(20);
            let v = (0..count)
                .map(|mask| {
                    let s: Vec<f64> = (0..n).map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
                    space.norm(&a.mul_vec(&s))
                })
                .fold(0.0, f64::max);
            (v, count)
        }
        Norm::L2 if n <= 3 => (rayleigh_sweep_norm(a), 0),
        Norm::L2 => {
            let svd = to_dmatrix(a).svd(false, false);
            (svd.singular_values.max(), 0)
        }
    };
    OracleResult { kind: OracleKind::OperatorNorm { value, evaluations }, tolerance_used: 0.0 }
}

/// `max ‖Au‖₂` over the Euclidean unit sphere by grid search with zoom-in
/// refinement; for `dim ≤ 3`.
pub fn rayleigh_sweep_norm(a: &Matrix) -> f64 {
    let f = |u: &[f64]| euclidean(&a.mul_vec(u));
    match a.cols() {
        1 => abs(a.get(0, 0)).max(if a.rows() > 1 { euclidean(&a.mul_vec(&[1.0])) } else { 0.0 }),
        2 => {
            let g = |t: f64| f(&[libm::cos(t), libm::sin(t)]);
            let pi = core::f64::consts::PI;
            let mut best = (0.0, g(0.0));
            for k in 0..720 {
                let t = pi * k as f64 / 720.0;
                let v = g(t);
                if v > best.1 {
                    best = (t, v);
                }
            }
            let mut w = pi / 720.0;
            for _ in 0..40 {
                let c = best.0;
                for k in -10..=10 {
                    let t = c + w * k as f64 / 10.0;
                    let v = g(t);
                    if v > best.1 {
                        best = (t, v);
                    }
                }
                w /= 5.0;
            }
            best.1
        }
        3 => {
            let sphere = |phi: f64, psi: f64| {
                let s = libm::sin(phi);
                f(&[s * libm::cos(psi), s * libm::sin(psi), libm::cos(phi)])
            };
            let pi = core::f64::consts::PI;
            let mut best = (0.0, 0.0, sphere(0.0, 0.0));
            for i in 0..=90 {
                for j in 0..180 {
                    let (phi, psi) = (pi * i as f64 / 90.0, 2.0 * pi * j as f64 / 180.0);
                    let v = sphere(phi, psi);
                    if v > best.2 {
                        best = (phi, psi, v);
                    }
                }
            }
            let mut w = pi / 90.0;
            for _ in 0..40 {
                let (c1, c2) = (best.0, best.1);
                for i in -5..=5 {
                    for j in -5..=5 {
                        let (phi, psi) = (c1 + w * i as f64 / 5.0, c2 + w * j as f64 / 5.0);
                        let v = sphere(phi, psi);
                        if v > best.2 {
                            best = (phi, psi, v);
                        }
                    }
                }
                w /= 4.0;
            }
            best.2
        }
        _ => to_dmatrix(a).svd(false, false).singular_values.max(),
    }
}

/// Largest `‖f(x) − f(y)‖ / ‖x − y‖` over the given pairs.
pub fn pairwise_sampling<F, E>(space: &NormedSpace, pairs: &[(Point, Point)], mut f: F) -> Result<OracleResult, E>
where
    F: FnMut(&[f64]) -> Result<Point, E>,
{
    let mut best = 0.0f64;
    let mut witness = None;
    for (x, y) in pairs {
        let d = space.dist(x, y);
        if d == 0.0 {
            continue;
        }
        let ratio = space.dist(&f(x)?, &f(y)?) / d;
        if ratio > best {
            best = ratio;
            witness = Some((x.clone(), y.clone()));
        }
    }
    Ok(OracleResult { kind: OracleKind::PairwiseSampling { max_ratio: best, witness }, tolerance_used: 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn constant_map_fixed_point() {
        let r = affine_fixed_point_oracle(&Matrix::zeros(2, 2), &[0.3, -0.7]).unwrap();
        assert_eq!(r.point().unwrap(), &Point::from([0.3, -0.7]));
    }

    #[test]
    fn scaled_rotation_system() {
        // (I − ½Q) z = x/2 with Q the quarter turn and x = (1, 0): z = (0.4, 0.2).
        let a = Matrix::from_rows(&[[0.0, -0.5], [0.5, 0.0]]).unwrap();
        let r = affine_fixed_point_oracle(&a, &[0.5, 0.0]).unwrap();
        let p = r.point().unwrap();
        assert!((p[0] - 0.4).abs() < 1e-15 && (p[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn identity_is_singular() {
        assert!(affine_fixed_point_oracle(&Matrix::identity(3), &[0.0; 3]).is_err());
    }

    #[test]
    fn stacked_requires_unique_consistent_solution() {
        let half = Matrix::diagonal(&[0.5, 1.0]);
        let other = Matrix::diagonal(&[1.0, 0.5]);
        let r = stacked_fixed_point_oracle(&[(half.clone(), vec![0.1, 0.0]), (other.clone(), vec![0.0, -0.2])]).unwrap();
        let p = r.point().unwrap();
        assert!((p[0] - 0.2).abs() < 1e-14 && (p[1] + 0.4).abs() < 1e-14);
        // Only the first coordinate is pinned.
        assert!(stacked_fixed_point_oracle(&[(half.clone(), vec![0.1, 0.0])]).is_err());
        // Inconsistent: both maps pin the first coordinate to different values.
        assert!(stacked_fixed_point_oracle(&[(half.clone(), vec![0.1, 0.0]), (Matrix::diagonal(&[0.5, 0.5]), vec![0.3, 0.0])]).is_err());
    }

    #[test]
    fn sweep_matches_svd() {
        let a = Matrix::from_rows(&[[0.3, 0.1, -0.2], [0.0, 0.5, 0.4], [0.2, -0.1, 0.1]]).unwrap();
        let svd = to_dmatrix(&a).svd(false, false).singular_values.max();
        assert!((rayleigh_sweep_norm(&a) - svd).abs() < 1e-12);
        let b = Matrix::from_rows(&[[0.5, 0.2], [0.3, 0.6]]).unwrap();
        let svd2 = to_dmatrix(&b).svd(false, false).singular_values.max();
        assert!((rayleigh_sweep_norm(&b) - svd2).abs() < 1e-12);
    }

    #[test]
    fn enumerated_operator_norms() {
        let a = Matrix::from_rows(&[[0.5, 0.2], [0.3, 0.6]]).unwrap();
        let l1 = NormedSpace::new(2, Norm::L1).unwrap();
        let linf = NormedSpace::new(2, Norm::LInf).unwrap();
        assert!((operator_norm_oracle(&a, &l1).value().unwrap() - 0.8).abs() < 1e-15);
        assert!((operator_norm_oracle(&a, &linf).value().unwrap() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn hull_diameter_by_enumeration() {
        let space = NormedSpace::new(2, Norm::L1).unwrap();
        let body = ConvexBody::new(space, Shape::Hull { vertices: vec![[0.0, 0.0].into(), [1.0, 0.0].into(), [0.0, 1.0].into()] }).unwrap();
        assert_eq!(brute_force_diameter(&body).value(), Some(2.0));
    }
}
