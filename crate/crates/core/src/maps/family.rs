use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{AffineForm, CertifiedMap, CertifyError};
use crate::geometry::Point;

/// Sampled commutator defects above this fail certification.
pub const COMMUTING_DEFECT_TOL: f64 = 1e-8;

/// Entrywise agreement required for the exact affine comparison.
const AFFINE_COMMUTE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CommutingCertificate {
    /// Largest entry of `T_iT_j − T_jT_i` as `(matrix, offset)` pairs.
    ProvedAffine { max_entry_defect: f64 },
    /// Largest `‖T_iT_jx − T_jT_ix‖` over `points` sampled points and all pairs.
    Sampled { points: usize, max_defect: f64 },
    Unchecked,
}

/// An ordered finite family `T₁, …, T_n` acting on one body.
#[derive(Clone, Debug)]
pub struct CommutingFamily {
    maps: Vec<CertifiedMap>,
    commutativity: CommutingCertificate,
}

impl CommutingFamily {
    pub fn new(maps: Vec<CertifiedMap>) -> Result<Self, CertifyError> {
        let first = maps.first().ok_or(CertifyError::EmptyFamily)?;
        if maps.iter().any(|m| m.body() != first.body()) {
            return Err(CertifyError::MixedBodies);
        }
        Ok(Self { maps, commutativity: CommutingCertificate::Unchecked })
    }

    /// Runs [`certify_commuting`] and stores the certificate.
    pub fn certified(mut self, samples: usize, seed: u64) -> Result<Self, CertifyError> {
        self.commutativity = certify_commuting(&self, samples, seed)?;
        Ok(self)
    }

    /// Marks the family as unchecked (negative controls only).
    pub fn with_certificate(mut self, cert: CommutingCertificate) -> Self {
        self.commutativity = cert;
        self
    }

    pub fn maps(&self) -> &[CertifiedMap] {
        &self.maps
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn commutativity(&self) -> &CommutingCertificate {
        &self.commutativity
    }

    pub fn body(&self) -> &alloc::sync::Arc<crate::geometry::ConvexBody> {
        self.maps[0].body()
    }

    /// Same maps in a different order (`order[k]` is the index of the k-th map).
    pub fn reordered(&self, order: &[usize]) -> Self {
        Self { maps: order.iter().map(|&i| self.maps[i].clone()).collect(), commutativity: self.commutativity.clone() }
    }

    /// This family with `extra` appended; the commutativity certificate is reset.
    pub fn extended(&self, extra: CertifiedMap) -> Result<Self, CertifyError> {
        let mut maps = self.maps.clone();
        maps.push(extra);
        Self::new(maps)
    }

    /// `max_{i,j} ‖T_iT_jx − T_jT_ix‖` at `x`, with the maximizing pair.
    pub fn commutator_defect(&self, x: &[f64]) -> Result<(f64, usize, usize), CertifyError> {
        let space = self.body().space();
        let mut best = (0.0, 0, 0);
        for i in 0..self.maps.len() {
            for j in i + 1..self.maps.len() {
                let ij = self.maps[i].eval(&self.maps[j].eval(x)?)?;
                let ji = self.maps[j].eval(&self.maps[i].eval(x)?)?;
                let d = space.dist(&ij, &ji);
                if d > best.0 {
                    best = (d, i, j);
                }
            }
        }
        Ok(best)
    }
}

/// Certifies `T_iT_j = T_jT_i` for every pair in the family.
///
/// All-affine families are compared exactly as composed `(matrix, offset)`
/// pairs; other families are sampled at `samples` points (the body center
/// first) and accepted iff the largest defect is at most
/// [`COMMUTING_DEFECT_TOL`]. Failures carry a witness `(i, j, x)`.
pub fn certify_commuting(family: &CommutingFamily, samples: usize, seed: u64) -> Result<CommutingCertificate, CertifyError> {
    let body = family.body().clone();
    let points = body.sample_points(samples.max(1), seed);
    let forms: Option<Vec<AffineForm>> = family.maps.iter().map(CertifiedMap::affine_form).collect();
    if let Some(forms) = forms {
        let mut worst = (0.0f64, 0, 0);
        for i in 0..forms.len() {
            for j in i + 1..forms.len() {
                let ij = forms[i].after(&forms[j]);
                let ji = forms[j].after(&forms[i]);
                let offset_gap = ij.offset.iter().zip(&ji.offset).fold(0.0f64, |m, (a, b)| m.max(crate::float::abs(a - b)));
                let gap = ij.linear.max_abs_diff(&ji.linear).max(offset_gap);
                if gap > worst.0 {
                    worst = (gap, i, j);
                }
            }
        }
        if worst.0 <= AFFINE_COMMUTE_TOL {
            return Ok(CommutingCertificate::ProvedAffine { max_entry_defect: worst.0 });
        }
        let (_, i, j) = worst;
        let (x, defect) = affine_witness(&forms[i], &forms[j], &points, body.space());
        return Err(CertifyError::NonCommuting { i, j, x, defect });
    }
    let mut worst: Option<(f64, usize, usize, Point)> = None;
    for x in &points {
        let (d, i, j) = family.commutator_defect(x)?;
        if worst.as_ref().is_none_or(|w| d > w.0) {
            worst = Some((d, i, j, x.clone()));
        }
    }
    let (defect, i, j, x) = worst.expect("at least one point");
    if defect > COMMUTING_DEFECT_TOL {
        return Err(CertifyError::NonCommuting { i, j, x, defect });
    }
    Ok(CommutingCertificate::Sampled { points: points.len(), max_defect: defect })
}

fn affine_witness(a: &AffineForm, b: &AffineForm, points: &[Point], space: &crate::geometry::NormedSpace) -> (Point, f64) {
    let ab = a.after(b);
    let ba = b.after(a);
    points
        .iter()
        .map(|x| (x.clone(), space.dist(&ab.apply(x), &ba.apply(x))))
        .max_by(|p, q| p.1.total_cmp(&q.1))
        .expect("at least one point")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ConvexBody, Norm, NormedSpace, Shape};
    use crate::maps::{MapKind, ScalarMap};
    use alloc::sync::Arc;
    use alloc::vec;

    fn ball(radius: f64) -> Arc<ConvexBody> {
        let space = NormedSpace::new(2, Norm::L2).unwrap();
        Arc::new(ConvexBody::new(space, Shape::NormBall { center: Point::zeros(2), radius }).unwrap())
    }

    fn rot(body: &Arc<ConvexBody>, center: [f64; 2], degrees: f64) -> CertifiedMap {
        CertifiedMap::new("rot", body.clone(), MapKind::Rotation2D { center, degrees }).unwrap()
    }

    #[test]
    fn concentric_rotations_commute() {
        let b = ball(1.0);
        let fam = CommutingFamily::new(vec![rot(&b, [0.0, 0.0], 73.0), rot(&b, [0.0, 0.0], 191.0)]).unwrap();
        match certify_commuting(&fam, 20, 0).unwrap() {
            CommutingCertificate::ProvedAffine { max_entry_defect } => assert!(max_entry_defect <= 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn identity_commutes_with_anything() {
        let b = ball(1.0);
        let clamp = CertifiedMap::new(
            "clamp",
            b.clone(),
            MapKind::CoordWise { coords: vec![ScalarMap::Clamp { lo: -0.3, hi: 0.3 }, ScalarMap::Scale { factor: 0.5 }] },
        )
        .unwrap();
        let fam = CommutingFamily::new(vec![CertifiedMap::identity(b), clamp]).unwrap();
        assert_eq!(certify_commuting(&fam, 50, 1).unwrap(), CommutingCertificate::Sampled { points: 50, max_defect: 0.0 });
    }

    #[test]
    fn off_center_rotations_do_not_commute() {
        // Oracle by direct evaluation at the origin: T₁T₂0 = (0.5, 0.5), T₂T₁0 = (0.5, −0.5).
        let b = ball(2.0);
        let t1 = rot(&b, [0.0, 0.0], 90.0);
        let t2 = rot(&b, [0.5, 0.0], 90.0);
        assert_eq!(t1.eval(&t2.eval(&[0.0, 0.0]).unwrap()).unwrap(), Point::from([0.5, 0.5]));
        assert_eq!(t2.eval(&t1.eval(&[0.0, 0.0]).unwrap()).unwrap(), Point::from([0.5, -0.5]));
        let fam = CommutingFamily::new(vec![t1, t2]).unwrap();
        match certify_commuting(&fam, 1, 0) {
            Err(CertifyError::NonCommuting { i, j, x, defect }) => {
                assert_eq!((i, j), (0, 1));
                assert_eq!(x, Point::zeros(2));
                assert!((defect - 1.0).abs() < 1e-15);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mixed_bodies_rejected() {
        let fam = CommutingFamily::new(vec![CertifiedMap::identity(ball(1.0)), CertifiedMap::identity(ball(2.0))]);
        assert!(matches!(fam, Err(CertifyError::MixedBodies)));
        assert!(matches!(CommutingFamily::new(vec![]), Err(CertifyError::EmptyFamily)));
    }
}
