//! The catalog of self-maps of a body, with nonexpansiveness and
//! commutativity certificates.

mod certify;
mod family;

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::float::{abs, sin_cos_degrees};
use crate::geometry::{ConvexBody, GeometryError, Norm, NormedSpace, Point};
use crate::linalg::Matrix;

pub use certify::{certify_nonexpansive, Certificate, CertifyError, WitnessPair, NONEXPANSIVE_SLACK};
pub use family::{certify_commuting, CommutingCertificate, CommutingFamily, COMMUTING_DEFECT_TOL};

/// Default tolerance for the domain and self-map checks in [`CertifiedMap::eval`].
pub const DEFAULT_DOMAIN_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MapError {
    #[error("input lies {distance:.3e} outside the body of map `{map}`")]
    Domain { map: String, distance: f64 },
    #[error("map `{map}` is not a self-map: output lies {distance:.3e} outside the body")]
    SelfMap { map: String, distance: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid map `{map}`: {reason}")]
    Invalid { map: String, reason: String },
}

/// One-dimensional 1-Lipschitz building blocks for [`MapKind::CoordWise`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ScalarMap {
    Identity,
    Clamp { lo: f64, hi: f64 },
    /// `t ↦ factor · t` with `|factor| ≤ 1`.
    Scale { factor: f64 },
    /// `t ↦ clamp(t + shift, lo, hi)`.
    ShiftClamp { shift: f64, lo: f64, hi: f64 },
}

impl ScalarMap {
    #[inline]
    fn apply(&self, t: f64) -> f64 {
        match *self {
            ScalarMap::Identity => t,
            ScalarMap::Clamp { lo, hi } => t.clamp(lo, hi),
            ScalarMap::Scale { factor } => factor * t,
            ScalarMap::ShiftClamp { shift, lo, hi } => (t + shift).clamp(lo, hi),
        }
    }

    fn lipschitz(&self) -> f64 {
        match *self {
            ScalarMap::Identity => 1.0,
            ScalarMap::Clamp { lo, hi } | ScalarMap::ShiftClamp { lo, hi, .. } => {
                if lo < hi {
                    1.0
                } else {
                    0.0
                }
            }
            ScalarMap::Scale { factor } => abs(factor),
        }
    }

    fn validate(&self) -> Result<(), String> {
        match *self {
            ScalarMap::Identity => Ok(()),
            ScalarMap::Scale { factor } if factor.is_finite() && abs(factor) <= 1.0 => Ok(()),
            ScalarMap::Scale { .. } => Err("scale factor must satisfy |factor| ≤ 1".into()),
            ScalarMap::Clamp { lo, hi } | ScalarMap::ShiftClamp { lo, hi, .. } if lo <= hi => Ok(()),
            _ => Err("clamp bounds must satisfy lo ≤ hi".into()),
        }
    }

    /// `(slope, intercept)` when the scalar map is affine.
    fn affine(&self) -> Option<(f64, f64)> {
        match *self {
            ScalarMap::Identity => Some((1.0, 0.0)),
            ScalarMap::Scale { factor } => Some((factor, 0.0)),
            _ => None,
        }
    }
}

/// Kind tag and parameters of a catalog map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapKind {
    /// `x ↦ matrix · x + offset`.
    Affine { matrix: Matrix, offset: Vec<f64> },
    /// Rotation of the first two coordinates about `center`; other coordinates fixed.
    #[serde(rename = "rotation2d")]
    Rotation2D { center: [f64; 2], degrees: f64 },
    /// `(Tx)_i = signs[i] · x[permutation[i]]`.
    Isometry { permutation: Vec<usize>, signs: Vec<f64> },
    CoordWise { coords: Vec<ScalarMap> },
    /// Truncation of `(x₁, x₂, x₃, …) ↦ (x₁², 0, x₂, x₃, …)`; a non-nonexpansive control.
    SquareMap,
    /// Applies `parts` left to right: the first listed map acts first.
    Composite { parts: Vec<MapKind> },
}

/// An affine map `x ↦ linear · x + offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineForm {
    pub linear: Matrix,
    pub offset: Vec<f64>,
}

impl AffineForm {
    pub fn identity(dim: usize) -> Self {
        Self { linear: Matrix::identity(dim), offset: vec![0.0; dim] }
    }

    /// `self ∘ inner`, i.e. `x ↦ self(inner(x))`.
    pub fn after(&self, inner: &AffineForm) -> AffineForm {
        let linear = self.linear.mul(&inner.linear);
        let mut offset = self.linear.mul_vec(&inner.offset);
        for (o, b) in offset.iter_mut().zip(&self.offset) {
            *o += b;
        }
        AffineForm { linear, offset }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.linear.mul_vec(x);
        for (o, b) in out.iter_mut().zip(&self.offset) {
            *o += b;
        }
        out
    }
}

impl MapKind {
    fn validate(&self, dim: usize) -> Result<(), String> {
        match self {
            MapKind::Affine { matrix, offset } => {
                if matrix.rows() != dim || matrix.cols() != dim || offset.len() != dim {
                    return Err(alloc::format!("affine map must be {dim}×{dim} with offset of length {dim}"));
                }
                if !matrix.as_slice().iter().chain(offset).all(|x| x.is_finite()) {
                    return Err("affine entries must be finite".into());
                }
                Ok(())
            }
            MapKind::Rotation2D { center, degrees } => {
                if dim < 2 {
                    return Err("rotation needs dimension ≥ 2".into());
                }
                if !degrees.is_finite() || !center.iter().all(|c| c.is_finite()) {
                    return Err("rotation parameters must be finite".into());
                }
                Ok(())
            }
            MapKind::Isometry { permutation, signs } => {
                if permutation.len() != dim || signs.len() != dim {
                    return Err("isometry needs a permutation and signs of length dim".into());
                }
                let mut seen = vec![false; dim];
                for &p in permutation {
                    if p >= dim || seen[p] {
                        return Err("not a permutation".into());
                    }
                    seen[p] = true;
                }
                if signs.iter().any(|s| *s != 1.0 && *s != -1.0) {
                    return Err("signs must be ±1".into());
                }
                Ok(())
            }
            MapKind::CoordWise { coords } => {
                if coords.len() != dim {
                    return Err("coordinatewise map needs one scalar map per coordinate".into());
                }
                coords.iter().try_for_each(ScalarMap::validate)
            }
            MapKind::SquareMap => {
                if dim < 2 {
                    return Err("square map needs dimension ≥ 2".into());
                }
                Ok(())
            }
            MapKind::Composite { parts } => {
                if parts.is_empty() {
                    return Err("composite needs at least one part".into());
                }
                parts.iter().try_for_each(|p| p.validate(dim))
            }
        }
    }

    /// Evaluates the formula with no domain checks.
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            MapKind::Affine { matrix, offset } => {
                matrix.mul_vec_into(x, out);
                for (o, b) in out.iter_mut().zip(offset) {
                    *o += b;
                }
            }
            MapKind::Rotation2D { center, degrees } => {
                let (s, c) = sin_cos_degrees(*degrees);
                out.copy_from_slice(x);
                let (dx, dy) = (x[0] - center[0], x[1] - center[1]);
                out[0] = center[0] + c * dx - s * dy;
                out[1] = center[1] + s * dx + c * dy;
            }
            MapKind::Isometry { permutation, signs } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = signs[i] * x[permutation[i]];
                }
            }
            MapKind::CoordWise { coords } => {
                for ((o, xi), f) in out.iter_mut().zip(x).zip(coords) {
                    *o = f.apply(*xi);
                }
            }
            MapKind::SquareMap => {
                let d = x.len();
                out[0] = x[0] * x[0];
                out[1] = 0.0;
                out[2..d].copy_from_slice(&x[1..d - 1]);
            }
            MapKind::Composite { parts } => {
                let mut cur = x.to_vec();
                for part in parts {
                    part.apply_into(&cur, out);
                    cur.copy_from_slice(out);
                }
            }
        }
    }

    /// The map as `(matrix, offset)` when it is affine.
    pub fn affine_form(&self, dim: usize) -> Option<AffineForm> {
        match self {
            MapKind::Affine { matrix, offset } => Some(AffineForm { linear: matrix.clone(), offset: offset.clone() }),
            MapKind::Rotation2D { center, degrees } => {
                let (s, c) = sin_cos_degrees(*degrees);
                let mut linear = Matrix::identity(dim);
                linear.set(0, 0, c);
                linear.set(0, 1, -s);
                linear.set(1, 0, s);
                linear.set(1, 1, c);
                let mut offset = vec![0.0; dim];
                offset[0] = center[0] - (c * center[0] - s * center[1]);
                offset[1] = center[1] - (s * center[0] + c * center[1]);
                Some(AffineForm { linear, offset })
            }
            MapKind::Isometry { permutation, signs } => {
                let mut linear = Matrix::zeros(dim, dim);
                for i in 0..dim {
                    linear.set(i, permutation[i], signs[i]);
                }
                Some(AffineForm { linear, offset: vec![0.0; dim] })
            }
            MapKind::CoordWise { coords } => {
                let parts: Option<Vec<(f64, f64)>> = coords.iter().map(ScalarMap::affine).collect();
                let parts = parts?;
                let slopes: Vec<f64> = parts.iter().map(|p| p.0).collect();
                Some(AffineForm { linear: Matrix::diagonal(&slopes), offset: parts.iter().map(|p| p.1).collect() })
            }
            MapKind::SquareMap => None,
            MapKind::Composite { parts } => {
                let mut acc = AffineForm::identity(dim);
                for part in parts {
                    acc = part.affine_form(dim)?.after(&acc);
                }
                Some(acc)
            }
        }
    }

    /// Orthogonal linear part (Euclidean isometry) by construction.
    pub(crate) fn is_orthogonal(&self) -> bool {
        match self {
            MapKind::Rotation2D { .. } | MapKind::Isometry { .. } => true,
            MapKind::Composite { parts } => parts.iter().all(MapKind::is_orthogonal),
            _ => false,
        }
    }

    /// Provable Lipschitz bound of the map in `space`, when one exists.
    pub(crate) fn coordinatewise_lipschitz(&self) -> Option<f64> {
        match self {
            MapKind::CoordWise { coords } => Some(coords.iter().map(ScalarMap::lipschitz).fold(0.0, f64::max)),
            _ => None,
        }
    }
}

/// A self-map `T : C → C` together with its nonexpansiveness certificate.
#[derive(Clone, Debug)]
pub struct CertifiedMap {
    name: String,
    body: Arc<ConvexBody>,
    kind: MapKind,
    certificate: Certificate,
    domain_tol: f64,
}

impl CertifiedMap {
    /// Wraps a validated map with an [`Certificate::Unchecked`] certificate.
    pub fn new(name: impl Into<String>, body: Arc<ConvexBody>, kind: MapKind) -> Result<Self, MapError> {
        let name = name.into();
        kind.validate(body.dim()).map_err(|reason| MapError::Invalid { map: name.clone(), reason })?;
        Ok(Self { name, body, kind, certificate: Certificate::Unchecked, domain_tol: DEFAULT_DOMAIN_TOL })
    }

    pub fn identity(body: Arc<ConvexBody>) -> Self {
        let dim = body.dim();
        let kind = MapKind::CoordWise { coords: vec![ScalarMap::Identity; dim] };
        let mut map = Self::new("identity", body, kind).expect("identity is valid");
        map.certificate = Certificate::Proved { lipschitz: 1.0 };
        map
    }

    pub fn with_domain_tol(mut self, tol: f64) -> Self {
        self.domain_tol = tol;
        self
    }

    /// Runs [`certify_nonexpansive`] and stores the certificate.
    pub fn certified(mut self, samples: usize, seed: u64) -> Result<Self, CertifyError> {
        self.certificate = certify_nonexpansive(&self, samples, seed)?;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn body(&self) -> &Arc<ConvexBody> {
        &self.body
    }

    pub fn space(&self) -> &NormedSpace {
        self.body.space()
    }

    pub fn kind(&self) -> &MapKind {
        &self.kind
    }

    pub fn certificate(&self) -> &Certificate {
        &self.certificate
    }

    pub fn domain_tol(&self) -> f64 {
        self.domain_tol
    }

    pub fn is_certified(&self) -> bool {
        !matches!(self.certificate, Certificate::Unchecked)
    }

    /// The affine representation, if the kind admits one.
    pub fn affine_form(&self) -> Option<AffineForm> {
        self.kind.affine_form(self.body.dim())
    }

    /// Evaluates `Tx` with domain and self-map checks at `domain_tol`.
    pub fn eval(&self, x: &[f64]) -> Result<Point, MapError> {
        let mut out = vec![0.0; x.len()];
        self.eval_into(x, &mut out)?;
        Ok(Point(out))
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), MapError> {
        self.body.space().check_dim(x)?;
        let allowance = self.body.rounding_allowance();
        let d_in = self.body.distance(x);
        if d_in > self.domain_tol + allowance {
            return Err(MapError::Domain { map: self.name.clone(), distance: d_in });
        }
        self.kind.apply_into(x, out);
        let d_out = self.body.distance(out);
        if !(d_out <= self.domain_tol + allowance) {
            return Err(MapError::SelfMap { map: self.name.clone(), distance: d_out });
        }
        Ok(())
    }

    /// Evaluates without the membership checks.
    pub fn eval_unchecked(&self, x: &[f64]) -> Point {
        let mut out = vec![0.0; x.len()];
        self.kind.apply_into(x, &mut out);
        Point(out)
    }
}

/// The truncated square map `(x₁, …, x_d) ↦ (x₁², 0, x₂, …, x_{d−1})` on the
/// unit L1 ball of dimension `d ≥ 2`.
///
/// In the truncation `0` is fixed and `(−1, 0, …)` is not (it maps to
/// `(1, 0, …)`), so the fixed set differs from the untruncated map's. The map
/// is carried as [`Certificate::Unchecked`]; it exists as a negative control.
pub fn square_map_example(d: usize) -> Result<CertifiedMap, MapError> {
    let space = NormedSpace::new(d, Norm::L1)?;
    let body = Arc::new(ConvexBody::unit_ball(space));
    CertifiedMap::new("square_map", body, MapKind::SquareMap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l2_ball(dim: usize) -> Arc<ConvexBody> {
        Arc::new(ConvexBody::unit_ball(NormedSpace::new(dim, Norm::L2).unwrap()))
    }

    #[test]
    fn quarter_turn() {
        let t = CertifiedMap::new("rot", l2_ball(2), MapKind::Rotation2D { center: [0.0, 0.0], degrees: 90.0 }).unwrap();
        assert_eq!(t.eval(&[1.0, 0.0]).unwrap(), Point::from([0.0, 1.0]));
    }

    #[test]
    fn constant_affine_map() {
        let c = [0.25, -0.5];
        let t = CertifiedMap::new(
            "const",
            l2_ball(2),
            MapKind::Affine { matrix: Matrix::zeros(2, 2), offset: c.to_vec() },
        )
        .unwrap();
        for x in l2_ball(2).sample_points(20, 3) {
            assert_eq!(t.eval(&x).unwrap(), Point::from(c));
        }
    }

    #[test]
    fn square_map_values() {
        let t = square_map_example(3).unwrap();
        assert_eq!(t.eval(&[1.0, 0.0, 0.0]).unwrap(), Point::from([1.0, 0.0, 0.0]));
        assert_eq!(t.eval(&[0.0, 0.0, 0.0]).unwrap(), Point::from([0.0, 0.0, 0.0]));
        assert_eq!(t.eval(&[0.2, 0.3, 0.4]).unwrap(), Point::from([0.04000000000000001, 0.0, 0.3]));
        let t2 = square_map_example(2).unwrap();
        assert_eq!(t2.eval(&[-1.0, 0.0]).unwrap(), Point::from([1.0, 0.0]));
        assert!(!t2.is_certified());
    }

    #[test]
    fn domain_and_self_map_errors() {
        let body = l2_ball(2);
        let shift = CertifiedMap::new(
            "shift",
            body.clone(),
            MapKind::Affine { matrix: Matrix::identity(2), offset: vec![0.5, 0.0] },
        )
        .unwrap();
        assert!(matches!(shift.eval(&[2.0, 0.0]), Err(MapError::Domain { .. })));
        match shift.eval(&[0.9, 0.0]) {
            Err(MapError::SelfMap { map, .. }) => assert_eq!(map, "shift"),
            other => panic!("expected self-map violation, got {other:?}"),
        }
        assert!(shift.eval(&[0.0, 0.0]).is_ok());
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        let body = l2_ball(2);
        assert!(CertifiedMap::new("s", body.clone(), MapKind::CoordWise { coords: vec![ScalarMap::Scale { factor: 1.5 }, ScalarMap::Identity] }).is_err());
        assert!(CertifiedMap::new("p", body.clone(), MapKind::Isometry { permutation: vec![0, 0], signs: vec![1.0, 1.0] }).is_err());
        assert!(CertifiedMap::new("a", body, MapKind::Affine { matrix: Matrix::identity(3), offset: vec![0.0; 3] }).is_err());
    }

    #[test]
    fn affine_forms_agree_with_formulas() {
        let dim = 3;
        let body = Arc::new(ConvexBody::unit_ball(NormedSpace::new(dim, Norm::L2).unwrap()));
        let kinds = [
            MapKind::Rotation2D { center: [0.1, -0.2], degrees: 37.0 },
            MapKind::Isometry { permutation: vec![2, 0, 1], signs: vec![1.0, -1.0, 1.0] },
            MapKind::CoordWise { coords: vec![ScalarMap::Scale { factor: 0.5 }, ScalarMap::Identity, ScalarMap::Scale { factor: -1.0 }] },
            MapKind::Composite {
                parts: vec![
                    MapKind::Rotation2D { center: [0.0, 0.0], degrees: 10.0 },
                    MapKind::Isometry { permutation: vec![1, 0, 2], signs: vec![1.0, 1.0, -1.0] },
                ],
            },
        ];
        for kind in kinds {
            let form = kind.affine_form(dim).unwrap();
            for x in body.sample_points(10, 5) {
                let mut direct = vec![0.0; dim];
                kind.apply_into(&x, &mut direct);
                let via = form.apply(&x);
                for (a, b) in direct.iter().zip(&via) {
                    assert!((a - b).abs() < 1e-14, "{kind:?}");
                }
            }
        }
        assert!(MapKind::SquareMap.affine_form(3).is_none());
        assert!(MapKind::CoordWise { coords: vec![ScalarMap::Clamp { lo: 0.0, hi: 1.0 }; 3] }.affine_form(3).is_none());
    }

    #[test]
    fn kind_json_tags() {
        let k: MapKind = serde_json::from_str(r#"{"kind":"rotation2d","center":[0,0],"degrees":90}"#).unwrap();
        assert_eq!(k, MapKind::Rotation2D { center: [0.0, 0.0], degrees: 90.0 });
        let c: MapKind = serde_json::from_str(r#"{"kind":"coord_wise","coords":[{"op":"scale","factor":0.5},{"op":"identity"}]}"#).unwrap();
        assert!(matches!(c, MapKind::CoordWise { .. }));
        let s: MapKind = serde_json::from_str(r#"{"kind":"square_map"}"#).unwrap();
        assert_eq!(s, MapKind::SquareMap);
    }
}
