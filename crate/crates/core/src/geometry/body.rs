use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::polytope;
use super::{GeometryError, Norm, NormedSpace, Point};
use crate::float::{abs, ln, powf, sqrt};

/// Relative floating-point allowance added to every membership tolerance.
///
/// Membership compares a computed distance against `tol`; the distance itself
/// carries rounding error (and, for hulls, solver error), so the comparison is
/// `distance ≤ tol + ROUNDING_SLACK · (1 + extent)` where `extent` is the
/// body's diameter plus the sup-norm of its reference point.
pub const ROUNDING_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    /// `{x : ‖x − center‖ ≤ radius}` in the space's own norm.
    NormBall { center: Point, radius: f64 },
    /// Axis-aligned box `lower ≤ x ≤ upper`.
    Box { lower: Point, upper: Point },
    /// `{x ≥ 0 : Σ x_i = scale}`.
    Simplex { scale: f64 },
    /// Convex hull of finitely many vertices.
    Hull { vertices: Vec<Point> },
}

/// A compact convex body `C` in a normed space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBody")]
pub struct ConvexBody {
    space: NormedSpace,
    shape: Shape,
    diam: f64,
}

#[derive(Deserialize)]
struct RawBody {
    space: NormedSpace,
    shape: Shape,
}

impl TryFrom<RawBody> for ConvexBody {
    type Error = GeometryError;

    fn try_from(raw: RawBody) -> Result<Self, Self::Error> {
        ConvexBody::new(raw.space, raw.shape)
    }
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl ConvexBody {
    pub fn new(space: NormedSpace, shape: Shape) -> Result<Self, GeometryError> {
        let dim = space.dim();
        let invalid = |msg: &str| Err(GeometryError::InvalidBody(msg.into()));
        match &shape {
            Shape::NormBall { center, radius } => {
                space.check_dim(center)?;
                if !finite(center) || !(radius.is_finite() && *radius >= 0.0) {
                    return invalid("ball needs a finite center and a finite radius ≥ 0");
                }
            }
            Shape::Box { lower, upper } => {
                space.check_dim(lower)?;
                space.check_dim(upper)?;
                if !finite(lower) || !finite(upper) || lower.iter().zip(upper.iter()).any(|(l, u)| l > u) {
                    return invalid("box bounds must be finite with lower ≤ upper");
                }
            }
            Shape::Simplex { scale } => {
                if !(scale.is_finite() && *scale >= 0.0) {
                    return invalid("simplex scale must be finite and ≥ 0");
                }
            }
            Shape::Hull { vertices } => {
                if vertices.is_empty() {
                    return invalid("hull needs at least one vertex");
                }
                for v in vertices {
                    space.check_dim(v)?;
                    if !finite(v) {
                        return invalid("hull vertices must be finite");
                    }
                }
            }
        }
        let diam = compute_diameter(&space, &shape, dim);
        Ok(Self { space, shape, diam })
    }

    pub fn unit_ball(space: NormedSpace) -> Self {
        let center = Point::zeros(space.dim());
        Self::new(space, Shape::NormBall { center, radius: 1.0 }).expect("unit ball is valid")
    }

    pub fn space(&self) -> &NormedSpace {
        &self.space
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    /// Cached diameter under the body's norm.
    pub fn diameter(&self) -> f64 {
        self.diam
    }

    /// Ball center, box midpoint, simplex barycenter, or vertex mean.
    pub fn center(&self) -> Point {
        let dim = self.dim();
        match &self.shape {
            Shape::NormBall { center, .. } => center.clone(),
            Shape::Box { lower, upper } => {
                Point(lower.iter().zip(upper.iter()).map(|(l, u)| 0.5 * (l + u)).collect())
            }
            Shape::Simplex { scale } => Point(vec![scale / dim as f64; dim]),
            Shape::Hull { vertices } => {
                let mut c = vec![0.0; dim];
                for v in vertices {
                    for (ci, vi) in c.iter_mut().zip(v.iter()) {
                        *ci += vi;
                    }
                }
                let m = vertices.len() as f64;
                Point(c.into_iter().map(|x| x / m).collect())
            }
        }
    }

    /// Absolute allowance used by [`ConvexBody::contains`].
    pub fn rounding_allowance(&self) -> f64 {
        let reference = match &self.shape {
            Shape::NormBall { center, .. } => sup(center),
            Shape::Box { lower, upper } => sup(lower).max(sup(upper)),
            Shape::Simplex { scale } => *scale,
            Shape::Hull { vertices } => vertices.iter().map(|v| sup(v)).fold(0.0, f64::max),
        };
        ROUNDING_SLACK * (1.0 + self.diam + reference)
    }

    /// Distance from `p` to the body in the body's norm (unchecked dimension).
    pub fn distance(&self, p: &[f64]) -> f64 {
        debug_assert_eq!(p.len(), self.dim());
        match &self.shape {
            Shape::NormBall { center, radius } => (self.space.dist(p, center) - radius).max(0.0),
            Shape::Box { lower, upper } => {
                let nearest: Vec<f64> = p
                    .iter()
                    .zip(lower.iter().zip(upper.iter()))
                    .map(|(x, (l, u))| x.clamp(*l, *u))
                    .collect();
                self.space.dist(p, &nearest)
            }
            Shape::Simplex { scale } => simplex_distance(&self.space, p, *scale),
            Shape::Hull { vertices } => match self.space.norm_kind() {
                Norm::L2 => polytope::euclidean_distance(vertices, p),
                norm => polytope::polyhedral_distance(vertices, p, norm),
            },
        }
    }

    /// `true` iff `p` lies within `tol` of the body (plus the rounding allowance).
    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        self.distance(p) <= tol + self.rounding_allowance()
    }

    /// Checked membership test.
    ///
    /// Hull bodies compute the distance exactly up to rounding: an LP for the
    /// polyhedral norms (L1, weighted L1, L∞) and Wolfe's minimum-norm-point
    /// algorithm for L2.
    pub fn membership(&self, p: &[f64], tol: f64) -> Result<bool, GeometryError> {
        self.space.check_dim(p)?;
        Ok(self.contains(p, tol))
    }

    /// Deterministic sample of `count` member points; the first is [`ConvexBody::center`].
    pub fn sample_points(&self, count: usize, seed: u64) -> Vec<Point> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        if count == 0 {
            return out;
        }
        out.push(self.center());
        while out.len() < count {
            out.push(self.random_point(&mut rng));
        }
        out
    }

    pub(crate) fn random_point(&self, rng: &mut ChaCha8Rng) -> Point {
        let dim = self.dim();
        match &self.shape {
            Shape::NormBall { center, radius } => {
                let dir: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
                let len = self.space.norm(&dir);
                let u: f64 = rng.random();
                if len == 0.0 {
                    return center.clone();
                }
                let r = radius * powf(u, 1.0 / dim as f64) / len;
                Point(center.iter().zip(&dir).map(|(c, d)| c + r * d).collect())
            }
            Shape::Box { lower, upper } => Point(
                lower
                    .iter()
                    .zip(upper.iter())
                    .map(|(l, u)| {
                        let t: f64 = rng.random();
                        (l + t * (u - l)).clamp(*l, *u)
                    })
                    .collect(),
            ),
            Shape::Simplex { scale } => {
                let w = dirichlet(rng, dim);
                Point(w.into_iter().map(|x| x * scale).collect())
            }
            Shape::Hull { vertices } => {
                let w = dirichlet(rng, vertices.len());
                let mut p = vec![0.0; dim];
                for (wi, v) in w.iter().zip(vertices) {
                    for (pi, vi) in p.iter_mut().zip(v.iter()) {
                        *pi += wi * vi;
                    }
                }
                Point(p)
            }
        }
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(abs(*x)))
}

/// Uniform weights on the probability simplex (Dirichlet(1, …, 1)).
fn dirichlet(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            -ln(1.0 - u)
        })
        .collect();
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        w.iter_mut().for_each(|x| *x /= total);
    } else {
        w.iter_mut().for_each(|x| *x = 1.0 / n as f64);
    }
    w
}

fn compute_diameter(space: &NormedSpace, shape: &Shape, dim: usize) -> f64 {
    match shape {
        Shape::NormBall { radius, .. } => 2.0 * radius,
        // Absolute norms: the corner difference dominates every other difference.
        Shape::Box { lower, upper } => {
            let span: Vec<f64> = upper.iter().zip(lower.iter()).map(|(u, l)| u - l).collect();
            space.norm(&span)
        }
        Shape::Simplex { scale } => {
            if dim == 1 {
                return 0.0;
            }
            // Attained between two vertices scale·e_i, scale·e_j.
            let edge = match space.norm_kind() {
                Norm::L1 => 2.0,
                Norm::L2 => sqrt(2.0),
                Norm::LInf => 1.0,
                Norm::WeightedL1 { weights } => {
                    let mut sorted = weights.clone();
                    sorted.sort_by(|a, b| b.total_cmp(a));
                    sorted[0] + sorted[1]
                }
            };
            scale * edge
        }
        Shape::Hull { vertices } => {
            let mut best = 0.0f64;
            for (i, a) in vertices.iter().enumerate() {
                for b in &vertices[i + 1..] {
                    best = best.max(space.dist(a, b));
                }
            }
            best
        }
    }
}

/// Threshold `θ` with `Σ max(0, p_i − θ) = scale` (the Euclidean simplex projection shift).
fn simplex_threshold(p: &[f64], scale: f64) -> f64 {
    let mut u = p.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = u[0] - scale;
    for (j, uj) in u.iter().enumerate() {
        cumulative += uj;
        let candidate = (cumulative - scale) / (j + 1) as f64;
        if uj - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    theta
}

fn simplex_distance(space: &NormedSpace, p: &[f64], scale: f64) -> f64 {
    let dim = p.len();
    match space.norm_kind() {
        Norm::L2 => {
            let theta = simplex_threshold(p, scale);
            let proj: Vec<f64> = p.iter().map(|x| (x - theta).max(0.0)).collect();
            space.dist(p, &proj)
        }
        Norm::LInf => {
            // Smallest t with max(0, p_i − t) ≤ y_i ≤ p_i + t feasible for Σ y = scale.
            let theta = simplex_threshold(p, scale);
            let neg = p.iter().fold(0.0f64, |m, x| m.max(-x));
            let lift = (scale - p.iter().sum::<f64>()) / dim as f64;
            neg.max(lift).max(theta).max(0.0)
        }
        Norm::L1 => weighted_simplex_distance(p, &vec![1.0; dim], scale),
        Norm::WeightedL1 { weights } => weighted_simplex_distance(p, weights, scale),
    }
}

/// Separable convex program `min Σ w_i |p_i − y_i|` over the scaled simplex,
/// solved greedily by marginal cost.
fn weighted_simplex_distance(p: &[f64], weights: &[f64], scale: f64) -> f64 {
    let mut cost: f64 = p.iter().zip(weights).map(|(x, w)| w * (-x).max(0.0)).sum();
    let positive_mass: f64 = p.iter().map(|x| x.max(0.0)).sum();
    if positive_mass > scale {
        let mut excess = positive_mass - scale;
        let mut order: Vec<usize> = (0..p.len()).filter(|&i| p[i] > 0.0).collect();
        order.sort_by(|&a, &b| weights[a].total_cmp(&weights[b]));
        for i in order {
            if excess <= 0.0 {
                break;
            }
            let take = excess.min(p[i]);
            cost += weights[i] * take;
            excess -= take;
        }
    } else {
        let w_min = weights.iter().copied().fold(f64::INFINITY, f64::min);
        cost += w_min * (scale - positive_mass);
    }
    cost
}

impl ConvexBody {
    /// Diagnostic description used in error messages.
    pub fn describe(&self) -> alloc::string::String {
        let kind = match &self.shape {
            Shape::NormBall { radius, .. } => format!("ball(r={radius})"),
            Shape::Box { .. } => "box".into(),
            Shape::Simplex { scale } => format!("simplex(scale={scale})"),
            Shape::Hull { vertices } => format!("hull({} vertices)", vertices.len()),
        };
        format!("{kind} in dim {}", self.dim())
    }
}
