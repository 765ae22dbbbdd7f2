//! Contraction solves, the resolvent `F_n`, and the single-map retraction.
//!
//! `F_n x` is the unique `z ∈ C` with `z = x/n + (1 − 1/n) T z`. It is found
//! by Picard iteration of that contraction (modulus `q = 1 − 1/n`, start
//! `z₀ = x`), stopped once `‖z_{k+1} − z_k‖ ≤ tol · (1 − q)`.
//!
//! For an affine `T` with a proved Lipschitz constant at most 1, the same
//! Picard iterates are reached by repeated squaring of the iteration map
//! `P(z) = Mz + c`, `M = qA`. The tables `M^{2^j}` and `Σ_{i<2^j} M^i` do
//! not depend on `x` and are built once per resolvent. Because
//! `‖z_{k+1} − z_k‖ = ‖M^k (z₁ − z₀)‖` is nonincreasing, the stopping index
//! is found by descending over the bits of `k`. This keeps `n ≈ 10⁶`
//! resolvents (needed for `eps ≈ 10⁻⁶`) cheap.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::float::{ceil, ln};
use crate::geometry::{NormedSpace, Point};
use crate::linalg::Matrix;
use crate::maps::{Certificate, CertifiedMap, MapError};
use crate::trace::TraceRecord;

/// Default ratio `inner_tol / eps` for [`SingleRetraction`].
pub const DEFAULT_INNER_TOL_RATIO: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ResolventError {
    #[error("contraction solve did not converge in {iterations} iterations (last step {last_step:.3e}, threshold {threshold:.3e})")]
    NonConvergence { iterations: u64, last_step: f64, threshold: f64 },
    #[error("map `{0}` has no nonexpansiveness certificate")]
    Uncertified(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Bookkeeping for one Banach contraction solve.
///
/// `iterations_used` is the index `k` of the first step with
/// `‖z_{k+1} − z_k‖ ≤ tol·(1 − q)`; the returned point is `z_{k+1}`.
/// `residual` is the a-posteriori bound `‖z_{k+1} − z_k‖ / (1 − q)`, which
/// dominates both `‖f(z) − z‖` and the distance to the fixed point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionSolve {
    pub q: f64,
    pub tol: f64,
    pub max_iter: u64,
    pub iterations_used: u64,
    pub residual: f64,
    /// `‖z₁ − z₀‖`.
    pub first_step: f64,
    /// `‖z_{k+1} − z_k‖` at the stopping index.
    pub last_step: f64,
}

impl ContractionSolve {
    /// `ceil(ln(tol(1−q)/‖z₁−z₀‖) / ln q) + 1`, or `None` when `‖z₁ − z₀‖ = 0`.
    pub fn a_priori_bound(&self) -> Option<u64> {
        a_priori_iterations(self.q, self.tol, self.first_step)
    }
}

/// The a-priori Banach iteration bound for modulus `q`, tolerance `tol`, and
/// first step length `first_step`.
pub fn a_priori_iterations(q: f64, tol: f64, first_step: f64) -> Option<u64> {
    if !(first_step > 0.0) {
        return None;
    }
    let ratio = tol * (1.0 - q) / first_step;
    if ratio >= 1.0 || q == 0.0 {
        return Some(1);
    }
    let k = ceil(ln(ratio) / ln(q));
    Some(if k.is_finite() && k < 9.0e18 { k as u64 + 1 } else { u64::MAX })
}

fn check_parameters(q: f64, tol: f64) -> Result<(), ResolventError> {
    if !(0.0..1.0).contains(&q) {
        return Err(ResolventError::InvalidParameter(alloc::format!("contraction modulus {q} is not in [0, 1)")));
    }
    if !(tol > 0.0) {
        return Err(ResolventError::InvalidParameter(alloc::format!("tolerance {tol} must be positive")));
    }
    Ok(())
}

/// Keeps iteration 0, powers of two, and (via `finish`) the final iteration.
struct Thinned<'a> {
    out: Option<&'a mut Vec<TraceRecord>>,
    stage: usize,
}

impl Thinned<'_> {
    fn offer(&mut self, k: u64, step: f64) {
        if k == 0 || k.is_power_of_two() {
            self.push(k, step);
        }
    }

    fn push(&mut self, k: u64, step: f64) {
        if let Some(out) = self.out.as_deref_mut() {
            if out.last().is_none_or(|r| r.stage != self.stage || r.iteration != k) {
                out.push(TraceRecord { stage: self.stage, iteration: k, step_norm: step, residual: step });
            }
        }
    }
}

/// Picard iteration `z_{k+1} = f(z_k)` for a contraction `f` with modulus `q`.
///
/// `f` writes `f(z)` into its second argument. The trace, if requested,
/// keeps iterations `0`, powers of two, and the stopping index; its residual
/// column is the fixed-point residual `‖f(z_k) − z_k‖`.
pub fn banach_solve<F>(
    space: &NormedSpace,
    mut f: F,
    q: f64,
    z0: &[f64],
    tol: f64,
    max_iter: u64,
    trace: Option<&mut Vec<TraceRecord>>,
) -> Result<(Point, ContractionSolve), ResolventError>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<(), MapError>,
{
    check_parameters(q, tol)?;
    space.check_dim(z0).map_err(MapError::from)?;
    let threshold = tol * (1.0 - q);
    let mut trace = Thinned { out: trace, stage: 0 };
    let mut z = z0.to_vec();
    let mut next = vec![0.0; z.len()];
    let mut first_step = 0.0;
    let mut k = 0u64;
    loop {
        f(&z, &mut next)?;
        let step = space.dist(&next, &z);
        if k == 0 {
            first_step = step;
        }
        trace.offer(k, step);
        core::mem::swap(&mut z, &mut next);
        if step <= threshold {
            trace.push(k, step);
            let solve = ContractionSolve { q, tol, max_iter, iterations_used: k, residual: step / (1.0 - q), first_step, last_step: step };
            return Ok((Point(z), solve));
        }
        if k >= max_iter {
            return Err(ResolventError::NonConvergence { iterations: k, last_step: step, threshold });
        }
        k += 1;
    }
}

/// Powers-of-two tables for iterating `z ↦ Mz + c` with `‖M‖ ≤ q < 1`.
#[derive(Clone, Debug)]
pub struct AffinePicardTable {
    /// `M^{2^j}`.
    powers: Vec<Matrix>,
    /// `Σ_{i<2^j} M^i`.
    sums: Vec<Matrix>,
}

impl AffinePicardTable {
    /// Builds tables until `M^{2^j}` underflows (or 62 levels).
    pub fn new(m: Matrix) -> Self {
        let dim = m.rows();
        let mut powers = vec![m];
        let mut sums = vec![Matrix::identity(dim)];
        while powers.len() < 62 {
            let (mj, sj) = (powers.last().unwrap(), sums.last().unwrap());
            if mj.max_abs() < 1e-300 {
                break;
            }
            let next_sum = sj.add(&mj.mul(sj));
            let next_pow = mj.mul(mj);
            powers.push(next_pow);
            sums.push(next_sum);
        }
        Self { powers, sums }
    }

    pub fn levels(&self) -> usize {
        self.powers.len()
    }

    /// `P^m(z)`. Levels past the table reuse the last one, whose power has
    /// already underflowed, so the jump lands on the fixed point.
    fn jump(&self, z: &[f64], c: &[f64], mut m: u64) -> Vec<f64> {
        let mut z = z.to_vec();
        let mut j = 0;
        while m > 0 {
            if m & 1 == 1 {
                let level = j.min(self.levels() - 1);
                let mut next = self.powers[level].mul_vec(&z);
                for (o, s) in next.iter_mut().zip(self.sums[level].mul_vec(c)) {
                    *o += s;
                }
                z = next;
            }
            m >>= 1;
            j += 1;
        }
        z
    }

    /// The Picard result of [`banach_solve`] on `z ↦ Mz + c`, without
    /// stepping through every iterate. Requires `‖M‖ ≤ q` in `space`'s
    /// induced norm so step lengths are nonincreasing.
    #[allow(clippy::too_many_arguments)]
    pub fn solve(
        &self,
        space: &NormedSpace,
        c: &[f64],
        q: f64,
        z0: &[f64],
        tol: f64,
        max_iter: u64,
        trace: Option<&mut Vec<TraceRecord>>,
    ) -> Result<(Point, ContractionSolve), ResolventError> {
        check_parameters(q, tol)?;
        space.check_dim(z0).map_err(MapError::from)?;
        let threshold = tol * (1.0 - q);
        let mut trace = Thinned { out: trace, stage: 0 };
        let z1 = self.jump(z0, c, 1);
        let d: Vec<f64> = z1.iter().zip(z0).map(|(a, b)| a - b).collect();
        let first_step = space.norm(&d);
        trace.offer(0, first_step);

        // Largest k with step(k) > threshold, found bit by bit from the top.
        let stop = if first_step <= threshold {
            0
        } else {
            let mut k = 0u64;
            let mut w = d.clone();
            for j in (0..self.levels()).rev() {
                let candidate = self.powers[j].mul_vec(&w);
                if space.norm(&candidate) > threshold {
                    k += 1u64 << j;
                    w = candidate;
                }
            }
            let last = space.norm(&self.powers[0].mul_vec(&w));
            if !(last <= threshold) || k >= max_iter {
                return Err(ResolventError::NonConvergence { iterations: k.min(max_iter), last_step: last, threshold });
            }
            k + 1
        };

        if trace.out.is_some() {
            for j in 0..self.levels() {
                let k = 1u64 << j;
                if k >= stop {
                    break;
                }
                trace.offer(k, space.norm(&self.powers[j].mul_vec(&d)));
            }
        }
        let last_step = if stop == 0 { first_step } else { space.norm(&self.jump_linear(&d, stop)) };
        trace.push(stop, last_step);
        let z = self.jump(z0, c, stop + 1);
        let solve = ContractionSolve { q, tol, max_iter, iterations_used: stop, residual: last_step / (1.0 - q), first_step, last_step };
        Ok((Point(z), solve))
    }

    /// `M^m v`.
    fn jump_linear(&self, v: &[f64], mut m: u64) -> Vec<f64> {
        let mut v = v.to_vec();
        let mut j = 0;
        while m > 0 {
            if m & 1 == 1 {
                v = self.powers[j.min(self.levels() - 1)].mul_vec(&v);
            }
            m >>= 1;
            j += 1;
        }
        v
    }
}

/// How the resolvent's contraction is solved.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Repeated squaring for affine maps with a proved certificate, Picard otherwise.
    #[default]
    Auto,
    /// Always step through every Picard iterate.
    Picard,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResolveOptions {
    pub strategy: Strategy,
    /// Permit maps whose certificate is `Unchecked` (negative controls only).
    pub allow_uncertified: bool,
    /// Iteration cap; defaults to twice the a-priori bound computed from `diam C`.
    pub max_iter: Option<u64>,
}

/// `F_n x` together with its measured residual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolventResult {
    pub n: u64,
    pub point: Point,
    /// `‖T F_n x − F_n x‖`.
    pub residual_t: f64,
    /// `‖T F_n x − x‖`, so that `residual_t ≈ anchor_residual / n`.
    pub anchor_residual: f64,
    pub inner: ContractionSolve,
}

/// The resolvent `F_n` of one map, with any x-independent work done up front.
#[derive(Clone, Debug)]
pub struct Resolvent {
    map: CertifiedMap,
    n: u64,
    q: f64,
    inner_tol: f64,
    options: ResolveOptions,
    affine: Option<(Arc<AffinePicardTable>, Vec<f64>)>,
}

impl Resolvent {
    pub fn new(map: CertifiedMap, n: u64, inner_tol: f64, options: ResolveOptions) -> Result<Self, ResolventError> {
        if n == 0 {
            return Err(ResolventError::InvalidParameter("n must be at least 1".into()));
        }
        if !(inner_tol > 0.0) {
            return Err(ResolventError::InvalidParameter(alloc::format!("inner tolerance {inner_tol} must be positive")));
        }
        if !map.is_certified() && !options.allow_uncertified {
            return Err(ResolventError::Uncertified(map.name().into()));
        }
        let q = 1.0 - 1.0 / n as f64;
        let provably_nonexpansive = matches!(map.certificate(), Certificate::Proved { lipschitz } if *lipschitz <= 1.0);
        let affine = match (options.strategy, provably_nonexpansive, map.affine_form()) {
            (Strategy::Auto, true, Some(form)) => {
                let offset: Vec<f64> = form.offset.iter().map(|b| q * b).collect();
                Some((Arc::new(AffinePicardTable::new(form.linear.scaled(q))), offset))
            }
            _ => None,
        };
        Ok(Self { map, n, q, inner_tol, options, affine })
    }

    pub fn map(&self) -> &CertifiedMap {
        &self.map
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn inner_tol(&self) -> f64 {
        self.inner_tol
    }

    /// Whether the repeated-squaring path is in use.
    pub fn is_accelerated(&self) -> bool {
        self.affine.is_some()
    }

    fn max_iter(&self) -> u64 {
        if let Some(m) = self.options.max_iter {
            return m;
        }
        let diam = self.map.body().diameter();
        match a_priori_iterations(self.q, self.inner_tol, self.q * diam) {
            Some(b) => b.saturating_mul(2).saturating_add(16),
            None => 16,
        }
    }

    /// Computes `F_n x`.
    pub fn apply(&self, x: &[f64], trace: Option<&mut Vec<TraceRecord>>) -> Result<ResolventResult, ResolventError> {
        let body = self.map.body();
        body.space().check_dim(x).map_err(MapError::from)?;
        let outside = body.distance(x);
        if outside > self.map.domain_tol() + body.rounding_allowance() {
            return Err(MapError::Domain { map: self.map.name().into(), distance: outside }.into());
        }
        let space = body.space();
        let inv_n = 1.0 / self.n as f64;
        let q = self.q;
        let kind = self.map.kind();
        // f(z) = x/n + q·Tz, written as Tz + (x − Tz)/n so that a fixed x maps
        // to itself bit for bit.
        let step = |z: &[f64], out: &mut [f64]| {
            kind.apply_into(z, out);
            for (o, xi) in out.iter_mut().zip(x) {
                *o += (xi - *o) * inv_n;
            }
            Ok(())
        };
        let max_iter = self.max_iter();
        let (point, inner) = match &self.affine {
            Some((table, qb)) => {
                let mut z1 = vec![0.0; x.len()];
                step(x, &mut z1)?;
                let first = space.dist(&z1, x);
                if first <= self.inner_tol * (1.0 - q) {
                    let mut trace = Thinned { out: trace, stage: 0 };
                    trace.push(0, first);
                    let solve = ContractionSolve {
                        q,
                        tol: self.inner_tol,
                        max_iter,
                        iterations_used: 0,
                        residual: first / (1.0 - q),
                        first_step: first,
                        last_step: first,
                    };
                    (Point(z1), solve)
                } else {
                    let c: Vec<f64> = x.iter().zip(qb).map(|(xi, b)| xi * inv_n + b).collect();
                    table.solve(space, &c, q, x, self.inner_tol, max_iter, trace)?
                }
            }
            None => banach_solve(space, step, q, x, self.inner_tol, max_iter, trace)?,
        };
        let tz = self.map.eval(&point)?;
        Ok(ResolventResult {
            n: self.n,
            residual_t: space.dist(&tz, &point),
            anchor_residual: space.dist(&tz, x),
            point,
            inner,
        })
    }
}

/// `F_n x` for a single call; see [`Resolvent`] to reuse the setup.
pub fn resolve(map: &CertifiedMap, x: &[f64], n: u64, inner_tol: f64) -> Result<ResolventResult, ResolventError> {
    Resolvent::new(map.clone(), n, inner_tol, ResolveOptions::default())?.apply(x, None)
}

/// `x ↦ F_{n*} x` with `n* = ceil(diam C / eps)`: every output `y` has
/// `‖Ty − y‖ ≤ eps + 2·inner_tol`.
#[derive(Clone, Debug)]
pub struct SingleRetraction {
    resolvent: Resolvent,
    eps: f64,
}

impl SingleRetraction {
    pub fn new(map: CertifiedMap, eps: f64, inner_tol: f64, options: ResolveOptions) -> Result<Self, ResolventError> {
        if !(eps > 0.0) {
            return Err(ResolventError::InvalidParameter(alloc::format!("eps {eps} must be positive")));
        }
        let n = n_star(map.body().diameter(), eps)?;
        Ok(Self { resolvent: Resolvent::new(map, n, inner_tol, options)?, eps })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn n(&self) -> u64 {
        self.resolvent.n()
    }

    pub fn inner_tol(&self) -> f64 {
        self.resolvent.inner_tol()
    }

    pub fn resolvent(&self) -> &Resolvent {
        &self.resolvent
    }

    /// The guaranteed residual `eps + 2·inner_tol`.
    pub fn residual_bound(&self) -> f64 {
        self.eps + 2.0 * self.inner_tol()
    }

    pub fn apply(&self, x: &[f64], trace: Option<&mut Vec<TraceRecord>>) -> Result<ResolventResult, ResolventError> {
        self.resolvent.apply(x, trace)
    }

    /// Bound on `‖F_{n*} x − x‖ / eps` for an input with `‖Tx − x‖ = residual_at_x`.
    ///
    /// From `z − x = q(Tz − x)`: `‖z − x‖ ≤ (n − 1)·‖Tx − x‖`, plus the
    /// inner-solve error `q·inner_tol`.
    pub fn move_constant(&self, residual_at_x: f64) -> f64 {
        let n = self.n() as f64;
        ((n - 1.0) * residual_at_x + self.resolvent.q() * self.inner_tol()) / self.eps
    }
}

/// `ceil(diam / eps)`, at least 1.
pub fn n_star(diam: f64, eps: f64) -> Result<u64, ResolventError> {
    let n = ceil(diam / eps);
    if !(n < 9.0e15) {
        return Err(ResolventError::InvalidParameter(alloc::format!("eps {eps} is too small for diameter {diam}")));
    }
    Ok((n as u64).max(1))
}

/// [`SingleRetraction`] with `inner_tol = eps / 10`.
pub fn single_retraction(map: &CertifiedMap, eps: f64) -> Result<SingleRetraction, ResolventError> {
    SingleRetraction::new(map.clone(), eps, eps * DEFAULT_INNER_TOL_RATIO, ResolveOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ConvexBody, Norm};
    use crate::maps::MapKind;
    use crate::oracle::affine_fixed_point_oracle;

    fn l2_ball(dim: usize) -> Arc<ConvexBody> {
        Arc::new(ConvexBody::unit_ball(NormedSpace::new(dim, Norm::L2).unwrap()))
    }

    fn quarter_turn() -> CertifiedMap {
        let kind = MapKind::Rotation2D { center: [0.0, 0.0], degrees: 90.0 };
        CertifiedMap::new("quarter", l2_ball(2), kind).unwrap().certified(100, 0).unwrap()
    }

    fn constant(c: [f64; 2]) -> CertifiedMap {
        let kind = MapKind::Affine { matrix: Matrix::zeros(2, 2), offset: c.to_vec() };
        CertifiedMap::new("const", l2_ball(2), kind).unwrap().certified(100, 0).unwrap()
    }

    #[test]
    fn halving_contracts_to_origin() {
        let space = NormedSpace::new(2, Norm::L2).unwrap();
        let f = |z: &[f64], out: &mut [f64]| {
            out.iter_mut().zip(z).for_each(|(o, zi)| *o = 0.5 * zi);
            Ok(())
        };
        let (z, solve) = banach_solve(&space, f, 0.5, &[1.0, 0.0], 1e-8, 1000, None).unwrap();
        assert!(space.norm(&z) <= 1e-8);
        assert!(solve.iterations_used <= solve.a_priori_bound().unwrap());
    }

    #[test]
    fn constant_converges_in_one_step() {
        let space = NormedSpace::new(2, Norm::L2).unwrap();
        let f = |_: &[f64], out: &mut [f64]| {
            out.copy_from_slice(&[0.25, -0.5]);
            Ok(())
        };
        let (z, solve) = banach_solve(&space, f, 0.0, &[1.0, 0.0], 1e-12, 10, None).unwrap();
        assert_eq!(&z.0, &[0.25, -0.5]);
        assert_eq!(solve.iterations_used, 1);
        assert_eq!(solve.a_priori_bound(), Some(1));
    }

    #[test]
    fn non_convergence_is_reported() {
        let space = NormedSpace::new(1, Norm::L2).unwrap();
        let f = |z: &[f64], out: &mut [f64]| {
            out[0] = -z[0];
            Ok(())
        };
        let err = banach_solve(&space, f, 0.5, &[1.0], 1e-8, 5, None).unwrap_err();
        assert!(matches!(err, ResolventError::NonConvergence { iterations: 5, .. }));
    }

    #[test]
    fn rotation_resolvent_matches_oracle() {
        let r = resolve(&quarter_turn(), &[1.0, 0.0], 2, 1e-12).unwrap();
        assert!((r.point[0] - 0.4).abs() < 1e-11 && (r.point[1] - 0.2).abs() < 1e-11);
        assert!((r.residual_t - 0.4f64.sqrt()).abs() < 1e-10);
        let a = Matrix::from_rows(&[[0.0, -0.5], [0.5, 0.0]]).unwrap();
        let p = affine_fixed_point_oracle(&a, &[0.5, 0.0]).unwrap();
        assert!(p.point().unwrap().iter().zip(r.point.iter()).all(|(a, b)| (a - b).abs() < 1e-11));
    }

    #[test]
    fn identity_resolvent_is_exact() {
        let id = CertifiedMap::identity(l2_ball(2));
        for n in [1, 7, 1_000_000] {
            let r = resolve(&id, &[0.3, 0.4], n, 1e-9).unwrap();
            assert_eq!(&r.point.0, &[0.3, 0.4]);
            assert_eq!(r.inner.iterations_used, 0);
        }
    }

    #[test]
    fn constant_resolvent_closed_form() {
        let c = [0.1, -0.2];
        let x = [0.6, 0.3];
        let n = 40;
        let r = resolve(&constant(c), &x, n, 1e-12).unwrap();
        let q = 1.0 - 1.0 / n as f64;
        for i in 0..2 {
            assert!((r.point[i] - (x[i] / n as f64 + q * c[i])).abs() < 1e-14);
        }
    }

    #[test]
    fn doubling_agrees_with_picard() {
        let map = quarter_turn();
        for n in [1u64, 2, 3, 10, 257, 5000] {
            let fast = Resolvent::new(map.clone(), n, 1e-9, ResolveOptions::default()).unwrap();
            let slow = Resolvent::new(map.clone(), n, 1e-9, ResolveOptions { strategy: Strategy::Picard, ..Default::default() }).unwrap();
            assert!(fast.is_accelerated() && !slow.is_accelerated());
            for x in [[1.0, 0.0], [0.3, -0.5], [0.0, 0.0]] {
                let (mut tf, mut ts) = (Vec::new(), Vec::new());
                let a = fast.apply(&x, Some(&mut tf)).unwrap();
                let b = slow.apply(&x, Some(&mut ts)).unwrap();
                assert_eq!(a.inner.iterations_used, b.inner.iterations_used, "n = {n}");
                assert!(a.point.iter().zip(b.point.iter()).all(|(u, v)| (u - v).abs() < 1e-12));
                assert_eq!(tf.len(), ts.len());
                for (u, v) in tf.iter().zip(&ts) {
                    assert_eq!(u.iteration, v.iteration);
                    assert!((u.step_norm - v.step_norm).abs() <= 1e-12 * (1.0 + v.step_norm));
                }
            }
        }
    }

    #[test]
    fn single_retraction_of_constant() {
        let c = [0.2, 0.1];
        let r = single_retraction(&constant(c), 1e-3).unwrap();
        assert_eq!(r.n(), 2000);
        for x in [[1.0, 0.0], [-0.6, 0.8], [0.0, 0.0]] {
            let y = r.apply(&x, None).unwrap().point;
            let dist = ((y[0] - c[0]).powi(2) + (y[1] - c[1]).powi(2)).sqrt();
            let gap = ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)).sqrt();
            assert!(dist <= 5e-4 * gap + 1e-12);
        }
    }

    #[test]
    fn single_retraction_of_rotation() {
        let r = single_retraction(&quarter_turn(), 1e-3).unwrap();
        let out = r.apply(&[1.0, 0.0], None).unwrap();
        assert!(out.residual_t <= r.residual_bound());
        assert!(out.point.iter().all(|v| v.abs() <= 1e-3));
    }

    #[test]
    fn uncertified_maps_are_refused() {
        let sq = crate::maps::square_map_example(3).unwrap();
        assert!(matches!(resolve(&sq, &[0.5, 0.0, 0.0], 10, 1e-6), Err(ResolventError::Uncertified(_))));
        let opts = ResolveOptions { allow_uncertified: true, ..Default::default() };
        assert!(Resolvent::new(sq, 10, 1e-6, opts).is_ok());
    }
}
