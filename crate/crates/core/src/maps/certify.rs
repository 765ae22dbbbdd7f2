//! Nonexpansiveness certificates.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{CertifiedMap, MapError, MapKind};
use crate::float::{abs, sqrt};
use crate::geometry::{euclidean, ConvexBody, Norm, Point};
use crate::linalg::{dot, Matrix};
use crate::oracle;

/// A certified Lipschitz value may exceed 1 by at most this much.
pub const NONEXPANSIVE_SLACK: f64 = 1e-9;

/// Relative agreement required between power iteration and the Rayleigh sweep.
const CROSS_CHECK_TOL: f64 = 1e-8;

const POWER_ITERATION_RTOL: f64 = 1e-10;
const POWER_ITERATION_MAX: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Certificate {
    /// Exact induced norm of the linear part (affine kinds) or a proved Lipschitz bound.
    Proved { lipschitz: f64 },
    /// Largest observed `‖Tx − Ty‖ / ‖x − y‖` over `pairs` sampled pairs.
    Sampled { pairs: usize, max_ratio: f64 },
    Unchecked,
}

impl Certificate {
    /// The certified Lipschitz value, when there is one.
    pub fn value(&self) -> Option<f64> {
        match self {
            Certificate::Proved { lipschitz } => Some(*lipschitz),
            Certificate::Sampled { max_ratio, .. } => Some(*max_ratio),
            Certificate::Unchecked => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessPair {
    pub x: Point,
    pub y: Point,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CertifyError {
    #[error("map `{map}` is not nonexpansive: Lipschitz value {value}{}", witness_suffix(.witness))]
    Expansive { map: String, value: f64, witness: Option<WitnessPair> },
    #[error("map `{map}`: power iteration gives {power}, Rayleigh sweep gives {sweep}")]
    CrossCheck { map: String, power: f64, sweep: f64 },
    #[error("maps {i} and {j} do not commute: defect {defect:.3e} at x = {x:?}")]
    NonCommuting { i: usize, j: usize, x: Point, defect: f64 },
    #[error("family members live on different bodies")]
    MixedBodies,
    #[error("empty family")]
    EmptyFamily,
    #[error(transparent)]
    Map(#[from] MapError),
}

fn witness_suffix(w: &Option<WitnessPair>) -> String {
    match w {
        Some(w) => alloc::format!(" (witness x = {:?}, y = {:?}, ratio {})", w.x.0, w.y.0, w.ratio),
        None => String::new(),
    }
}

/// Certifies `‖Tx − Ty‖ ≤ ‖x − y‖` on the map's body.
///
/// * affine kinds: exact induced norm of the linear part (column sums for L1,
///   row sums for L∞, weighted column sums for weighted L1, and for L2 either
///   1 for orthogonal kinds or power iteration on `AᵀA`, cross-checked by a
///   brute-force Rayleigh sweep when `dim ≤ 3`);
/// * coordinatewise kinds: the largest per-coordinate Lipschitz constant, valid
///   for every absolute norm;
/// * composites of provable parts: the product of the parts' bounds;
/// * anything else: sampled over `samples` random pairs plus axis probes.
pub fn certify_nonexpansive(map: &CertifiedMap, samples: usize, seed: u64) -> Result<Certificate, CertifyError> {
    let cert = match proved_bound(map)? {
        Some(l) => Certificate::Proved { lipschitz: l },
        None => {
            let (pairs, witness) = sample_ratio(map, samples, seed)?;
            if let Some(w) = &witness {
                if w.ratio > 1.0 + NONEXPANSIVE_SLACK {
                    return Err(CertifyError::Expansive { map: map.name.clone(), value: w.ratio, witness });
                }
            }
            Certificate::Sampled { pairs, max_ratio: witness.map_or(0.0, |w| w.ratio) }
        }
    };
    if let Certificate::Proved { lipschitz } = cert {
        if lipschitz > 1.0 + NONEXPANSIVE_SLACK {
            return Err(CertifyError::Expansive { map: map.name.clone(), value: lipschitz, witness: None });
        }
    }
    Ok(cert)
}

fn proved_bound(map: &CertifiedMap) -> Result<Option<f64>, CertifyError> {
    bound_for_kind(&map.kind, map)
}

fn bound_for_kind(kind: &MapKind, map: &CertifiedMap) -> Result<Option<f64>, CertifyError> {
    if let Some(l) = kind.coordinatewise_lipschitz() {
        return Ok(Some(l));
    }
    let dim = map.body.dim();
    if let Some(form) = kind.affine_form(dim) {
        return induced_norm(&form.linear, map, kind.is_orthogonal()).map(Some);
    }
    if let MapKind::Composite { parts } = kind {
        let mut product = 1.0;
        for part in parts {
            match bound_for_kind(part, map)? {
                Some(l) => product *= l,
                None => return Ok(None),
            }
        }
        return Ok(Some(product));
    }
    Ok(None)
}

/// Exact operator norm of `a` induced by the body's norm.
fn induced_norm(a: &Matrix, map: &CertifiedMap, orthogonal: bool) -> Result<f64, CertifyError> {
    Ok(match map.body.space().norm_kind() {
        Norm::L1 => a.max_col_sum(),
        Norm::LInf => a.max_row_sum(),
        Norm::WeightedL1 { weights } => (0..a.cols())
            .map(|j| (0..a.rows()).map(|i| weights[i] * abs(a.get(i, j))).sum::<f64>() / weights[j])
            .fold(0.0, f64::max),
        Norm::L2 if orthogonal => 1.0,
        Norm::L2 => {
            let (power, _) = spectral_norm(a);
            if a.rows() <= 3 {
                let sweep = oracle::rayleigh_sweep_norm(a);
                if abs(sweep - power) > CROSS_CHECK_TOL * power.max(1.0) {
                    return Err(CertifyError::CrossCheck { map: map.name.clone(), power, sweep });
                }
            }
            power
        }
    })
}

/// Largest singular value by power iteration on `AᵀA`; returns `(σ, iterations)`.
pub fn spectral_norm(a: &Matrix) -> (f64, usize) {
    let gram = a.transpose().mul(a);
    let n = gram.cols();
    if gram.max_abs() == 0.0 {
        return (0.0, 0);
    }
    // Start from the Gram column of largest norm: it cannot lie in the kernel.
    let start = (0..n)
        .map(|j| (0..n).map(|i| gram.get(i, j)).collect::<Vec<f64>>())
        .max_by(|u, v| euclidean(u).total_cmp(&euclidean(v)))
        .expect("nonempty");
    let mut v: Vec<f64> = start.iter().map(|x| x / euclidean(&start)).collect();
    let mut sigma_prev = 0.0;
    let mut w = alloc::vec![0.0; n];
    for it in 1..=POWER_ITERATION_MAX {
        gram.mul_vec_into(&v, &mut w);
        let rayleigh = dot(&v, &w).max(0.0);
        let sigma = sqrt(rayleigh);
        let len = euclidean(&w);
        if len == 0.0 {
            return (0.0, it);
        }
        v.iter_mut().zip(&w).for_each(|(vi, wi)| *vi = wi / len);
        if abs(sigma - sigma_prev) <= POWER_ITERATION_RTOL * sigma {
            // One more Rayleigh quotient at the updated vector.
            gram.mul_vec_into(&v, &mut w);
            return (sqrt(dot(&v, &w).max(rayleigh)), it);
        }
        sigma_prev = sigma;
    }
    (sigma_prev, POWER_ITERATION_MAX)
}

/// Axis probes through the center: `(c ± h e_i, c ± h/2 e_i)` with the largest
/// `h = diam/2, diam/4, …` keeping the outer point in the body.
pub(crate) fn axis_probe_pairs(body: &ConvexBody) -> Vec<(Point, Point)> {
    let c = body.center();
    let mut pairs = Vec::new();
    if body.diameter() == 0.0 {
        return pairs;
    }
    for i in 0..body.dim() {
        for sign in [1.0, -1.0] {
            let mut h = 0.5 * body.diameter();
            for _ in 0..30 {
                let mut outer = c.clone();
                outer[i] += sign * h;
                if body.contains(&outer, 0.0) {
                    let mut inner = c.clone();
                    inner[i] += sign * 0.5 * h;
                    pairs.push((outer, inner));
                    break;
                }
                h *= 0.5;
            }
        }
    }
    pairs
}

/// Maximum expansion ratio over axis probes and `samples` random pairs.
fn sample_ratio(map: &CertifiedMap, samples: usize, seed: u64) -> Result<(usize, Option<WitnessPair>), MapError> {
    let body = &map.body;
    let mut pairs = axis_probe_pairs(body);
    let pts = body.sample_points(2 * samples + 1, seed);
    pairs.extend(pts[1..].chunks_exact(2).map(|c| (c[0].clone(), c[1].clone())));
    let space = body.space();
    let mut checked = 0;
    let mut best: Option<WitnessPair> = None;
    for (x, y) in pairs {
        let d = space.dist(&x, &y);
        if d == 0.0 {
            continue;
        }
        let tx = map.eval(&x)?;
        let ty = map.eval(&y)?;
        let ratio = space.dist(&tx, &ty) / d;
        checked += 1;
        if best.as_ref().is_none_or(|b| ratio > b.ratio) {
            best = Some(WitnessPair { x, y, ratio });
        }
    }
    Ok((checked, best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::NormedSpace;
    use crate::maps::{square_map_example, ScalarMap};
    use alloc::sync::Arc;
    use alloc::vec;

    fn body(dim: usize, norm: Norm) -> Arc<ConvexBody> {
        Arc::new(ConvexBody::unit_ball(NormedSpace::new(dim, norm).unwrap()))
    }

    fn affine(b: Arc<ConvexBody>, rows: &[[f64; 2]]) -> CertifiedMap {
        let matrix = Matrix::from_rows(rows).unwrap();
        CertifiedMap::new("a", b, MapKind::Affine { matrix, offset: vec![0.0, 0.0] }).unwrap()
    }

    #[test]
    fn affine_l1_column_sums() {
        // Brute force: column sums are 0.5 + 0.3 and 0.2 + 0.6.
        let t = affine(body(2, Norm::L1), &[[0.5, 0.2], [0.3, 0.6]]);
        let cert = certify_nonexpansive(&t, 10, 0).unwrap();
        match cert {
            Certificate::Proved { lipschitz } => assert!((lipschitz - 0.8).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn affine_l2_power_iteration_matches_closed_form() {
        // [[0.6, 0.2], [0.1, 0.3]]: σ₁² is the top eigenvalue of AᵀA.
        let rows = [[0.6, 0.2], [0.1, 0.3]];
        let t = affine(body(2, Norm::L2), &rows);
        let (a, b, d) = (0.6f64 * 0.6 + 0.1 * 0.1, 0.6 * 0.2 + 0.1 * 0.3, 0.2f64 * 0.2 + 0.3 * 0.3);
        let top = 0.5 * (a + d) + (0.25 * (a - d) * (a - d) + b * b).sqrt();
        match certify_nonexpansive(&t, 10, 0).unwrap() {
            Certificate::Proved { lipschitz } => assert!((lipschitz - top.sqrt()).abs() < 1e-10),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rotations_are_l2_isometries() {
        for deg in [0.0, 17.0, 90.0, 191.0, -45.0] {
            let t = CertifiedMap::new("r", body(2, Norm::L2), MapKind::Rotation2D { center: [0.0, 0.0], degrees: deg }).unwrap();
            assert_eq!(certify_nonexpansive(&t, 10, 0).unwrap(), Certificate::Proved { lipschitz: 1.0 });
        }
    }

    #[test]
    fn oblique_rotation_is_rejected_under_l1() {
        let t = CertifiedMap::new("r", body(2, Norm::L1), MapKind::Rotation2D { center: [0.0, 0.0], degrees: 45.0 }).unwrap();
        match certify_nonexpansive(&t, 10, 0) {
            Err(CertifyError::Expansive { value, .. }) => assert!((value - 2f64.sqrt()).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn weighted_l1_induced_norm() {
        let space = NormedSpace::new(2, Norm::WeightedL1 { weights: vec![1.0, 4.0] }).unwrap();
        let b = Arc::new(ConvexBody::unit_ball(space));
        // Swap is not an isometry when weights differ: ‖e₁ ↦ e₂‖ = 4 / 1.
        let t = CertifiedMap::new("swap", b, MapKind::Isometry { permutation: vec![1, 0], signs: vec![1.0, 1.0] }).unwrap();
        match certify_nonexpansive(&t, 10, 0) {
            Err(CertifyError::Expansive { value, .. }) => assert_eq!(value, 4.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn coordinatewise_bound() {
        let t = CertifiedMap::new(
            "cw",
            body(3, Norm::LInf),
            MapKind::CoordWise {
                coords: vec![ScalarMap::Scale { factor: -0.5 }, ScalarMap::Clamp { lo: -0.5, hi: 0.5 }, ScalarMap::Scale { factor: 0.25 }],
            },
        )
        .unwrap();
        assert_eq!(certify_nonexpansive(&t, 10, 0).unwrap(), Certificate::Proved { lipschitz: 1.0 });
    }

    #[test]
    fn square_map_rejected_with_documented_witness_ratio() {
        let t = square_map_example(2).unwrap();
        // Direct evaluation: T(1,0) = (1,0), T(0.5,0) = (0.25,0), ratio 0.75 / 0.5.
        let tx = t.eval(&[1.0, 0.0]).unwrap();
        let ty = t.eval(&[0.5, 0.0]).unwrap();
        assert_eq!(t.space().dist(&tx, &ty) / 0.5, 1.5);
        match certify_nonexpansive(&t, 200, 1) {
            Err(CertifyError::Expansive { witness: Some(w), value, .. }) => {
                assert!(w.ratio >= 1.5);
                assert_eq!(value, w.ratio);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_affine_composite_uses_product() {
        let t = CertifiedMap::new(
            "comp",
            body(2, Norm::L2),
            MapKind::Composite {
                parts: vec![
                    MapKind::CoordWise { coords: vec![ScalarMap::Clamp { lo: -0.5, hi: 0.5 }, ScalarMap::Scale { factor: 0.5 }] },
                    MapKind::Affine { matrix: Matrix::from_rows(&[[0.5, 0.0], [0.0, 0.5]]).unwrap(), offset: vec![0.0, 0.0] },
                ],
            },
        )
        .unwrap();
        assert_eq!(certify_nonexpansive(&t, 10, 0).unwrap(), Certificate::Proved { lipschitz: 0.5 });
    }
}
