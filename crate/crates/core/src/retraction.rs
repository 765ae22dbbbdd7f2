//! Recursive approximate retraction onto the common fixed set of a finite
//! commuting family.
//!
//! Stage 1 is the single-map retraction of `T₁`. Stage `k` runs KM with
//! `γ` on `S = T_k ∘ R_{k−1}` and returns the final iterate, so
//! `R_k x = lim (½ I + ½ S)^m x` (for `γ = ½`). Each output is checked
//! against the residual contract `max_i ‖T_i y − y‖ ≤ eps`; a failed check
//! reruns the chain with every stage tolerance divided by 4, up to
//! [`BuildOptions::refinements`] times.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geometry::Point;
use crate::km::{km_iterate, KmError, KmParams, KmTrace, DEFAULT_GAMMA, DEFAULT_MAX_ITER};
use crate::maps::{CertifiedMap, CertifyError, CommutingCertificate, CommutingFamily, MapError};
use crate::resolvent::{ResolveOptions, ResolventError, SingleRetraction, DEFAULT_INNER_TOL_RATIO};
use crate::trace::TraceRecord;

/// Each refinement round divides all stage tolerances by this.
pub const REFINEMENT_FACTOR: f64 = 4.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    /// KM averaging weight.
    pub gamma: f64,
    /// Upper bound on every KM stage's step tolerance.
    pub km_step_tol: Option<f64>,
    /// KM iteration cap per stage call.
    pub max_iter: u64,
    /// `inner_tol / eps₁` for the base stage.
    pub inner_tol_ratio: f64,
    /// Extra rounds with tightened tolerances before giving up on the contract.
    pub refinements: u32,
    /// Per-stage residual budgets `eps_k`, replacing `eps / (2(N − k + 1))`.
    pub stage_budget: Option<Vec<f64>>,
    pub resolve: ResolveOptions,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            km_step_tol: None,
            max_iter: DEFAULT_MAX_ITER,
            inner_tol_ratio: DEFAULT_INNER_TOL_RATIO,
            refinements: 4,
            stage_budget: None,
            resolve: ResolveOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RetractionError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("stage {stage}: KM did not converge within {max_iter} iterations (last step {last_step:.3e})")]
    StageTimeout { stage: usize, max_iter: u64, last_step: f64, trace: Box<KmTrace> },
    #[error("stage {stage}: {source}")]
    Resolvent { stage: usize, source: ResolventError },
    #[error("residual contract violated: max residual {max_residual:.3e} > eps {eps:.3e} after {rounds} rounds")]
    ContractFailure { eps: f64, max_residual: f64, rounds: u32, diagnostics: Box<ApplyDiagnostics> },
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Certify(#[from] CertifyError),
}

/// Per-call bookkeeping returned by [`RetractionProc::apply`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ApplyDiagnostics {
    /// `‖T_i y − y‖` for each family member, in family order.
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    /// Refinement round that produced the output (0 = first attempt).
    pub round: u32,
    /// KM iterations per stage, summed over every call of that stage (index 0 is the base stage and stays 0).
    pub km_iterations: Vec<u64>,
    /// Contraction iterations summed over all base-stage resolvent calls.
    pub inner_iterations: u64,
    pub resolvent_calls: u64,
    /// Trace of the first call at each stage, when requested.
    pub trace: Vec<TraceRecord>,
}

/// Static description of one stage of the chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageInfo {
    pub stage: usize,
    pub map: String,
    /// Residual budget `eps_k` in round 0.
    pub eps: f64,
    /// `n*` for the base stage.
    pub n: Option<u64>,
    pub inner_tol: Option<f64>,
    /// KM step tolerance for stages above the base.
    pub step_tol: Option<f64>,
}

/// One row of [`RetractionProc::stage_chain`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageAudit {
    pub stage: usize,
    /// `‖T_k R_{k−1} z − z‖`.
    pub km_residual: f64,
    /// `‖R_{k−1} z − z‖`.
    pub previous_residual: f64,
    /// The stage budget `eps_k` both are held to.
    pub bound: f64,
}

#[derive(Clone, Debug)]
struct Chain {
    base: SingleRetraction,
    stages: Vec<(CertifiedMap, KmParams)>,
}

/// An approximate nonexpansive retraction onto `Fix 𝒮` for a finite family.
#[derive(Clone, Debug)]
pub struct RetractionProc {
    family: CommutingFamily,
    eps: f64,
    options: BuildOptions,
    budget: Vec<f64>,
    rounds: Vec<Chain>,
}

/// Residual budgets `eps_k = eps / (2(N − k + 1))` for `k = 1..=N`.
pub fn default_stage_budget(eps: f64, stages: usize) -> Vec<f64> {
    (1..=stages).map(|k| eps / (2.0 * (stages - k + 1) as f64)).collect()
}

fn build_chain(family: &CommutingFamily, budget: &[f64], options: &BuildOptions, scale: f64) -> Result<Chain, RetractionError> {
    let eps1 = budget[0] * scale;
    let base = SingleRetraction::new(family.maps()[0].clone(), eps1, eps1 * options.inner_tol_ratio, options.resolve.clone())
        .map_err(|source| RetractionError::Resolvent { stage: 0, source })?;
    let stages = family.maps()[1..]
        .iter()
        .zip(&budget[1..])
        .map(|(map, eps_k)| {
            let natural = options.gamma * eps_k / 4.0;
            let step_tol = options.km_step_tol.map_or(natural, |cap| natural.min(cap)) * scale;
            (map.clone(), KmParams { gamma: options.gamma, step_tol, max_iter: options.max_iter })
        })
        .collect();
    Ok(Chain { base, stages })
}

/// Builds the retraction for `family` with residual contract `eps`.
///
/// Every map must carry a certificate and the family a commutativity
/// certificate, unless `options.resolve.allow_uncertified` is set.
pub fn build_retraction(family: &CommutingFamily, eps: f64, options: &BuildOptions) -> Result<RetractionProc, RetractionError> {
    if !(eps > 0.0) {
        return Err(RetractionError::InvalidParameter(alloc::format!("eps {eps} must be positive")));
    }
    if !(options.gamma > 0.0 && options.gamma < 1.0) {
        return Err(RetractionError::InvalidParameter(alloc::format!("gamma {} must lie in (0, 1)", options.gamma)));
    }
    if !(options.inner_tol_ratio > 0.0) {
        return Err(RetractionError::InvalidParameter("inner tolerance ratio must be positive".into()));
    }
    if !options.resolve.allow_uncertified {
        if let Some(m) = family.maps().iter().find(|m| !m.is_certified()) {
            return Err(RetractionError::Precondition(alloc::format!("map `{}` has no nonexpansiveness certificate", m.name())));
        }
        if *family.commutativity() == CommutingCertificate::Unchecked {
            return Err(RetractionError::Precondition("family has no commutativity certificate".into()));
        }
    }
    let n = family.len();
    let budget = match &options.stage_budget {
        Some(b) if b.len() != n || !b.iter().all(|e| *e > 0.0) => {
            return Err(RetractionError::InvalidParameter(alloc::format!("stage budget needs {n} positive entries")));
        }
        Some(b) => b.clone(),
        None => default_stage_budget(eps, n),
    };
    let rounds = (0..=options.refinements)
        .map(|r| build_chain(family, &budget, options, libm::pow(REFINEMENT_FACTOR, -(r as f64))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RetractionProc { family: family.clone(), eps, options: options.clone(), budget, rounds })
}

struct Recorder {
    on: bool,
    seen: Vec<bool>,
}

impl RetractionProc {
    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn family(&self) -> &CommutingFamily {
        &self.family
    }

    pub fn options(&self) -> &BuildOptions {
        &self.options
    }

    pub fn stage_budget(&self) -> &[f64] {
        &self.budget
    }

    pub fn stage_count(&self) -> usize {
        self.family.len()
    }

    /// The round-0 parameters of every stage.
    pub fn stages(&self) -> Vec<StageInfo> {
        let chain = &self.rounds[0];
        let mut out = vec![StageInfo {
            stage: 0,
            map: self.family.maps()[0].name().into(),
            eps: self.budget[0],
            n: Some(chain.base.n()),
            inner_tol: Some(chain.base.inner_tol()),
            step_tol: None,
        }];
        out.extend(chain.stages.iter().enumerate().map(|(i, (map, params))| StageInfo {
            stage: i + 1,
            map: map.name().into(),
            eps: self.budget[i + 1],
            n: None,
            inner_tol: None,
            step_tol: Some(params.step_tol),
        }));
        out
    }

    /// Applies the retraction and checks the residual contract.
    pub fn apply(&self, x: &[f64]) -> Result<(Point, ApplyDiagnostics), RetractionError> {
        self.apply_inner(x, false)
    }

    /// As [`apply`](Self::apply), also recording the trace of the first call at each stage.
    pub fn apply_traced(&self, x: &[f64]) -> Result<(Point, ApplyDiagnostics), RetractionError> {
        self.apply_inner(x, true)
    }

    fn apply_inner(&self, x: &[f64], traced: bool) -> Result<(Point, ApplyDiagnostics), RetractionError> {
        let body = self.family.body();
        body.space().check_dim(x).map_err(MapError::from)?;
        let top = self.stage_count() - 1;
        let mut diag = ApplyDiagnostics::default();
        for (round, chain) in self.rounds.iter().enumerate() {
            diag = ApplyDiagnostics { km_iterations: vec![0; top + 1], round: round as u32, ..Default::default() };
            let mut rec = Recorder { on: traced, seen: vec![false; top + 1] };
            let y = self.eval(chain, top, x, &mut diag, &mut rec)?;
            diag.residuals = self.residuals(&y)?;
            diag.max_residual = diag.residuals.iter().copied().fold(0.0, f64::max);
            if diag.max_residual <= self.eps {
                return Ok((y, diag));
            }
        }
        Err(RetractionError::ContractFailure { eps: self.eps, max_residual: diag.max_residual, rounds: self.options.refinements + 1, diagnostics: Box::new(diag) })
    }

    /// Measures, for every KM stage `k` at the point `z = R_k x`, the KM
    /// residual `‖T_k R_{k−1} z − z‖` and how far the previous stage moves it,
    /// `‖R_{k−1} z − z‖`. Uses the refinement round that `apply(x)` settles on.
    pub fn stage_chain(&self, x: &[f64]) -> Result<Vec<StageAudit>, RetractionError> {
        let round = match self.apply(x) {
            Ok((_, diag)) => diag.round as usize,
            Err(RetractionError::ContractFailure { .. }) => self.rounds.len() - 1,
            Err(e) => return Err(e),
        };
        let chain = &self.rounds[round];
        let space = self.family.body().space();
        let scale = libm::pow(REFINEMENT_FACTOR, -(round as f64));
        let mut out = Vec::new();
        for stage in 1..self.stage_count() {
            let mut diag = ApplyDiagnostics { km_iterations: vec![0; stage + 1], ..Default::default() };
            let mut rec = Recorder { on: false, seen: vec![false; stage + 1] };
            let z = self.eval(chain, stage, x, &mut diag, &mut rec)?;
            let rz = self.eval(chain, stage - 1, &z, &mut diag, &mut rec)?;
            let map = &chain.stages[stage - 1].0;
            let bound = self.budget[stage] * scale;
            out.push(StageAudit {
                stage,
                km_residual: space.dist(&map.eval(&rz)?, &z),
                previous_residual: space.dist(&rz, &z),
                bound,
            });
        }
        Ok(out)
    }

    /// Residuals `‖T_i y − y‖` in family order.
    pub fn residuals(&self, y: &[f64]) -> Result<Vec<f64>, RetractionError> {
        let space = self.family.body().space();
        self.family.maps().iter().map(|m| Ok(space.dist(&m.eval(y)?, y))).collect()
    }

    fn eval(&self, chain: &Chain, stage: usize, x: &[f64], diag: &mut ApplyDiagnostics, rec: &mut Recorder) -> Result<Point, RetractionError> {
        let record = rec.on && !rec.seen[stage];
        rec.seen[stage] = true;
        if stage == 0 {
            let mut rows = Vec::new();
            let out = chain
                .base
                .apply(x, record.then_some(&mut rows))
                .map_err(|source| RetractionError::Resolvent { stage: 0, source })?;
            diag.inner_iterations += out.inner.iterations_used;
            diag.resolvent_calls += 1;
            diag.trace.extend(rows);
            return Ok(out.point);
        }
        let (map, params) = &chain.stages[stage - 1];
        let space = self.family.body().space();
        let outcome = {
            let s = |z: &[f64]| -> Result<Point, RetractionError> {
                let r = self.eval(chain, stage - 1, z, diag, rec)?;
                Ok(map.eval(&r)?)
            };
            km_iterate(space, s, x, params)
        };
        match outcome {
            Ok(out) => {
                diag.km_iterations[stage] += out.trace.iterations();
                if record {
                    diag.trace.extend(out.trace.records(stage));
                }
                Ok(out.point)
            }
            Err(KmError::Timeout { max_iter, last_step, trace }) => Err(RetractionError::StageTimeout { stage, max_iter, last_step, trace }),
            Err(KmError::InvalidParameter(p)) => Err(RetractionError::InvalidParameter(p.into())),
            Err(KmError::Map(e)) => Err(e),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Options {
    /// Tolerance multiplier in the conclusions.
    pub c: f64,
    /// Admission tolerance for audited points; defaults to `eps`.
    pub tol: Option<f64>,
}

impl Default for Lemma1Options {
    fn default() -> Self {
        Self { c: 10.0, tol: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Point {
    pub x: Point,
    /// The quantity the conclusion bounds.
    pub measured: f64,
    pub bound: f64,
}

/// Two-sided audit of `Fix 𝒮 ∩ Fix T̃ = Fix(T̃ ∘ R)` at scale `eps`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    pub eps: f64,
    pub c: f64,
    pub tol: f64,
    /// Points of `Fix 𝒮 ∩ Fix T̃`, measured `‖T̃ R x − x‖`.
    pub subset: Vec<Lemma1Point>,
    /// Points of `Fix(T̃R)`, measured `max(max_i ‖T_i x − x‖, ‖T̃x − x‖)`.
    pub superset: Vec<Lemma1Point>,
    /// Candidates that did not meet the admission tolerance.
    pub skipped: usize,
    pub worst_margin: f64,
    pub passed: bool,
}

/// Audits `Fix 𝒮 ∩ Fix T̃ = Fix(T̃R)` from `samples` seeded starting points.
///
/// (⊆) Points with small residuals for `𝒮 ∪ {T̃}` are produced by a
/// retraction for the extended family; each must satisfy
/// `‖T̃ R x − x‖ ≤ c·eps`. (⊇) Points with `‖T̃ R x − x‖ ≤ tol` are produced
/// by KM on `T̃ ∘ R`; each must have all residuals `≤ c·eps`.
pub fn lemma1_check(
    family: &CommutingFamily,
    r: &RetractionProc,
    extra: &CertifiedMap,
    samples: usize,
    seed: u64,
    options: &Lemma1Options,
) -> Result<Lemma1Report, RetractionError> {
    let eps = r.eps();
    let tol = options.tol.unwrap_or(eps);
    let bound = options.c * eps;
    let space = family.body().space();
    let starts = family.body().sample_points(samples.max(1), seed);
    let mut skipped = 0;

    let extended = family.extended(extra.clone())?.with_certificate(family.commutativity().clone());
    let joint = build_retraction(&extended, eps, r.options())?;
    let mut subset = Vec::new();
    for s in &starts {
        let (x, diag) = joint.apply(s)?;
        if diag.max_residual > tol {
            skipped += 1;
            continue;
        }
        let (rx, _) = r.apply(&x)?;
        let measured = space.dist(&extra.eval(&rx)?, &x);
        subset.push(Lemma1Point { x, measured, bound });
    }

    let params = KmParams { gamma: r.options().gamma, step_tol: r.options().gamma * tol / 4.0, max_iter: r.options().max_iter };
    let mut superset = Vec::new();
    for s in &starts {
        let composed = |z: &[f64]| -> Result<Point, RetractionError> { Ok(extra.eval(&r.apply(z)?.0)?) };
        let x = match km_iterate(space, composed, s, &params) {
            Ok(out) => out.point,
            Err(KmError::Timeout { .. }) => {
                skipped += 1;
                continue;
            }
            Err(KmError::InvalidParameter(p)) => return Err(RetractionError::InvalidParameter(p.into())),
            Err(KmError::Map(e)) => return Err(e),
        };
        let (rx, _) = r.apply(&x)?;
        if space.dist(&extra.eval(&rx)?, &x) > tol {
            skipped += 1;
            continue;
        }
        let mut measured = space.dist(&extra.eval(&x)?, &x);
        for m in family.maps() {
            measured = measured.max(space.dist(&m.eval(&x)?, &x));
        }
        superset.push(Lemma1Point { x, measured, bound });
    }

    let worst_margin = subset.iter().chain(&superset).map(|p| p.bound - p.measured).fold(f64::INFINITY, f64::min);
    let passed = !subset.is_empty() && !superset.is_empty() && worst_margin >= 0.0;
    Ok(Lemma1Report { eps, c: options.c, tol, subset, superset, skipped, worst_margin, passed })
}

/// Sensitivity of the retraction to the order of the family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    pub orders: Vec<Vec<usize>>,
    /// Largest distance between the output under any order and under the first.
    pub max_deviation: f64,
    /// Largest family residual over all orders and points.
    pub max_residual: f64,
    pub contract_held: bool,
}

/// Builds one retraction per order and compares outputs at `points`.
pub fn order_sensitivity(
    family: &CommutingFamily,
    eps: f64,
    options: &BuildOptions,
    orders: &[Vec<usize>],
    points: &[Point],
) -> Result<OrderReport, RetractionError> {
    let space = family.body().space();
    let mut reference: Vec<Point> = Vec::new();
    let mut max_deviation = 0.0f64;
    let mut max_residual = 0.0f64;
    for (k, order) in orders.iter().enumerate() {
        let mut sorted = order.clone();
        sorted.sort_unstable();
        if sorted != (0..family.len()).collect::<Vec<_>>() {
            return Err(RetractionError::InvalidParameter(alloc::format!("{order:?} is not a permutation of the family")));
        }
        let r = build_retraction(&family.reordered(order), eps, options)?;
        for (i, p) in points.iter().enumerate() {
            let (y, diag) = r.apply(p)?;
            max_residual = max_residual.max(diag.max_residual);
            if k == 0 {
                reference.push(y);
            } else {
                max_deviation = max_deviation.max(space.dist(&y, &reference[i]));
            }
        }
    }
    Ok(OrderReport { orders: orders.to_vec(), max_deviation, max_residual, contract_held: max_residual <= eps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ConvexBody, Norm, NormedSpace, Shape};
    use crate::linalg::Matrix;
    use crate::maps::MapKind;
    use alloc::sync::Arc;

    fn l2_ball() -> Arc<ConvexBody> {
        Arc::new(ConvexBody::unit_ball(NormedSpace::new(2, Norm::L2).unwrap()))
    }

    fn rotation(body: &Arc<ConvexBody>, degrees: f64) -> CertifiedMap {
        CertifiedMap::new(alloc::format!("rot{degrees}"), body.clone(), MapKind::Rotation2D { center: [0.0, 0.0], degrees })
            .unwrap()
            .certified(100, 1)
            .unwrap()
    }

    fn family(maps: Vec<CertifiedMap>) -> CommutingFamily {
        CommutingFamily::new(maps).unwrap().certified(50, 2).unwrap()
    }

    #[test]
    fn identity_family_is_identity() {
        let body = l2_ball();
        let fam = family(vec![CertifiedMap::identity(body.clone())]);
        let r = build_retraction(&fam, 1e-6, &BuildOptions::default()).unwrap();
        for p in body.sample_points(10, 3) {
            assert_eq!(r.apply(&p).unwrap().0, p);
        }
    }

    #[test]
    fn two_rotations_reach_origin() {
        let body = l2_ball();
        let fam = family(vec![rotation(&body, 73.0), rotation(&body, 191.0)]);
        let r = build_retraction(&fam, 1e-6, &BuildOptions::default()).unwrap();
        for p in body.sample_points(20, 4) {
            let (y, diag) = r.apply(&p).unwrap();
            assert!(diag.max_residual <= 1e-6);
            assert!(y.iter().all(|v| v.abs() <= 5e-6));
        }
    }

    #[test]
    fn halving_coordinates_under_linf() {
        let space = NormedSpace::new(2, Norm::LInf).unwrap();
        let body = Arc::new(ConvexBody::new(space, Shape::Box { lower: vec![-1.0, -1.0].into(), upper: vec![1.0, 1.0].into() }).unwrap());
        let half = |i: usize| {
            let mut d = [1.0, 1.0];
            d[i] = 0.5;
            let kind = MapKind::Affine { matrix: Matrix::diagonal(&d), offset: vec![0.0, 0.0] };
            CertifiedMap::new(alloc::format!("half{i}"), body.clone(), kind).unwrap().certified(10, 0).unwrap()
        };
        let fam = family(vec![half(0), half(1)]);
        let r = build_retraction(&fam, 1e-6, &BuildOptions::default()).unwrap();
        for p in body.sample_points(10, 5) {
            let (y, _) = r.apply(&p).unwrap();
            assert!(y.iter().all(|v| v.abs() <= 5e-6), "{y:?}");
        }
    }

    #[test]
    fn unchecked_family_is_refused() {
        let body = l2_ball();
        let fam = CommutingFamily::new(vec![rotation(&body, 90.0)]).unwrap();
        assert!(matches!(build_retraction(&fam, 1e-3, &BuildOptions::default()), Err(RetractionError::Precondition(_))));
    }

    #[test]
    fn traced_apply_labels_stages() {
        let body = l2_ball();
        let fam = family(vec![rotation(&body, 90.0), rotation(&body, 45.0)]);
        let r = build_retraction(&fam, 1e-6, &BuildOptions::default()).unwrap();
        let (_, diag) = r.apply_traced(&[0.5, 0.5]).unwrap();
        assert!(diag.trace.iter().any(|t| t.stage == 0));
        assert!(diag.trace.iter().any(|t| t.stage == 1));
        assert!(diag.km_iterations[1] >= 1);
        assert_eq!(r.stages().len(), 2);
        let chain = r.stage_chain(&[0.5, 0.5]).unwrap();
        assert_eq!(chain.len(), 1);
        assert!(chain[0].km_residual <= chain[0].bound && chain[0].previous_residual <= chain[0].bound, "{chain:?}");
    }

    #[test]
    fn lemma1_rotations() {
        let body = l2_ball();
        let fam = family(vec![rotation(&body, 90.0)]);
        let r = build_retraction(&fam, 1e-6, &BuildOptions::default()).unwrap();
        let report = lemma1_check(&fam, &r, &rotation(&body, 45.0), 5, 7, &Lemma1Options::default()).unwrap();
        assert!(report.passed, "{report:?}");
        let report = lemma1_check(&fam, &r, &CertifiedMap::identity(body.clone()), 5, 7, &Lemma1Options::default()).unwrap();
        assert!(report.passed, "{report:?}");
    }
}
