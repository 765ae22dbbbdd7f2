//! Krasnoselskii–Mann averaging `z_{k+1} = (1 − γ) z_k + γ S z_k` and
//! asymptotic-regularity monitoring.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geometry::{NormedSpace, Point};
use crate::trace::TraceRecord;

/// Iterates retained in [`KmTrace::iterates_kept`].
pub const KEPT_ITERATES: usize = 8;

/// Allowed growth between consecutive step norms.
pub const MONOTONE_SLACK: f64 = 1e-10;

/// Steps reported in [`RegularityReport::tail`].
const TAIL_LEN: usize = 32;

pub const DEFAULT_GAMMA: f64 = 0.5;
pub const DEFAULT_MAX_ITER: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KmParams {
    pub gamma: f64,
    pub step_tol: f64,
    pub max_iter: u64,
}

impl KmParams {
    pub fn new(step_tol: f64) -> Self {
        Self { gamma: DEFAULT_GAMMA, step_tol, max_iter: DEFAULT_MAX_ITER }
    }

    fn validate(&self) -> Result<(), &'static str> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err("gamma must lie in (0, 1)");
        }
        if !(self.step_tol > 0.0) {
            return Err("step tolerance must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// `‖z_{k+1} − z_k‖ ≤ step_tol`.
    StepTol,
    /// `‖S z_k − z_k‖ ≤ step_tol / γ` (differs from `StepTol` only by rounding).
    ResidualTol,
    MaxIter,
}

/// Full history of one KM run. `step_norms[k] = ‖z_{k+1} − z_k‖` and
/// `residuals[k] = ‖S z_k − z_k‖`; the last kept iterate is the current one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KmTrace {
    pub gamma: f64,
    pub step_tol: f64,
    pub iterates_kept: VecDeque<Point>,
    pub step_norms: Vec<f64>,
    pub residuals: Vec<f64>,
    pub stop_reason: Option<StopReason>,
}

impl KmTrace {
    fn new(gamma: f64, step_tol: f64, x0: Point) -> Self {
        let mut iterates_kept = VecDeque::with_capacity(KEPT_ITERATES);
        iterates_kept.push_back(x0);
        Self { gamma, step_tol, iterates_kept, step_norms: Vec::new(), residuals: Vec::new(), stop_reason: None }
    }

    pub fn iterations(&self) -> u64 {
        self.step_norms.len() as u64
    }

    /// The most recent iterate.
    pub fn current(&self) -> &Point {
        self.iterates_kept.back().expect("trace always holds its current iterate")
    }

    pub fn final_step(&self) -> Option<f64> {
        self.step_norms.last().copied()
    }

    /// Rows for CSV export under the given stage label.
    pub fn records(&self, stage: usize) -> Vec<TraceRecord> {
        self.step_norms
            .iter()
            .zip(&self.residuals)
            .enumerate()
            .map(|(k, (&step_norm, &residual))| TraceRecord { stage, iteration: k as u64, step_norm, residual })
            .collect()
    }

    fn keep(&mut self, z: Point) {
        if self.iterates_kept.len() == KEPT_ITERATES {
            self.iterates_kept.pop_front();
        }
        self.iterates_kept.push_back(z);
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KmError<E> {
    #[error("KM iteration hit max_iter = {max_iter} without reaching step tolerance (last step {last_step:.3e})")]
    Timeout { max_iter: u64, last_step: f64, trace: alloc::boxed::Box<KmTrace> },
    #[error("invalid KM parameters: {0}")]
    InvalidParameter(&'static str),
    #[error(transparent)]
    Map(E),
}

/// Result of a converged run.
#[derive(Clone, Debug, PartialEq)]
pub struct KmOutcome {
    pub point: Point,
    pub trace: KmTrace,
}

/// Runs KM from `x0` until a tolerance is met or `max_iter` steps are taken.
///
/// On timeout the error carries the trace; pass it to [`km_resume`] to extend
/// the run.
pub fn km_iterate<S, E>(space: &NormedSpace, s: S, x0: &[f64], params: &KmParams) -> Result<KmOutcome, KmError<E>>
where
    S: FnMut(&[f64]) -> Result<Point, E>,
{
    params.validate().map_err(KmError::InvalidParameter)?;
    let trace = KmTrace::new(params.gamma, params.step_tol, Point(x0.to_vec()));
    advance(space, s, trace, params.max_iter)
}

/// Continues a run from its last kept iterate for up to `extra_iter` more steps.
pub fn km_resume<S, E>(space: &NormedSpace, s: S, mut trace: KmTrace, extra_iter: u64) -> Result<KmOutcome, KmError<E>>
where
    S: FnMut(&[f64]) -> Result<Point, E>,
{
    trace.stop_reason = None;
    let limit = trace.iterations().saturating_add(extra_iter);
    advance(space, s, trace, limit)
}

fn advance<S, E>(space: &NormedSpace, mut s: S, mut trace: KmTrace, limit: u64) -> Result<KmOutcome, KmError<E>>
where
    S: FnMut(&[f64]) -> Result<Point, E>,
{
    let gamma = trace.gamma;
    let tol = trace.step_tol;
    loop {
        if trace.iterations() >= limit {
            trace.stop_reason = Some(StopReason::MaxIter);
            let last_step = trace.final_step().unwrap_or(f64::NAN);
            return Err(KmError::Timeout { max_iter: limit, last_step, trace: alloc::boxed::Box::new(trace) });
        }
        let z = trace.current();
        let sz = s(z).map_err(KmError::Map)?;
        let residual = space.dist(&sz, z);
        let next: Point = z.iter().zip(sz.iter()).map(|(a, b)| (1.0 - gamma) * a + gamma * b).collect::<Vec<_>>().into();
        let step = space.dist(&next, z);
        trace.residuals.push(residual);
        trace.step_norms.push(step);
        trace.keep(next);
        let reason = if step <= tol {
            Some(StopReason::StepTol)
        } else if residual <= tol / gamma {
            Some(StopReason::ResidualTol)
        } else {
            None
        };
        if let Some(reason) = reason {
            trace.stop_reason = Some(reason);
            return Ok(KmOutcome { point: trace.current().clone(), trace });
        }
    }
}

/// Outcome of [`asymptotic_regularity_check`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub monotone: bool,
    /// First `k` with `step_norms[k+1] > step_norms[k] + slack`.
    pub first_violation: Option<usize>,
    /// Largest `step_norms[k+1] − step_norms[k]` observed.
    pub max_increase: f64,
    pub final_step: f64,
    /// Final step (or residual, for `ResidualTol`) within tolerance when the run stopped normally.
    pub converged: bool,
    pub tail: Vec<f64>,
    pub passed: bool,
}

/// Checks step-norm monotonicity (within [`MONOTONE_SLACK`]) and the stopping tolerance.
pub fn asymptotic_regularity_check(trace: &KmTrace) -> RegularityReport {
    let steps = &trace.step_norms;
    let mut first_violation = None;
    let mut max_increase = f64::NEG_INFINITY;
    for (k, w) in steps.windows(2).enumerate() {
        let inc = w[1] - w[0];
        max_increase = max_increase.max(inc);
        if inc > MONOTONE_SLACK && first_violation.is_none() {
            first_violation = Some(k);
        }
    }
    let final_step = trace.final_step().unwrap_or(0.0);
    let converged = match trace.stop_reason {
        Some(StopReason::StepTol) => final_step <= trace.step_tol,
        Some(StopReason::ResidualTol) => trace.residuals.last().is_some_and(|r| *r <= trace.step_tol / trace.gamma),
        Some(StopReason::MaxIter) | None => false,
    };
    let monotone = first_violation.is_none();
    let needs_convergence = trace.stop_reason != Some(StopReason::MaxIter);
    RegularityReport {
        monotone,
        first_violation,
        max_increase: if steps.len() < 2 { 0.0 } else { max_increase },
        final_step,
        converged,
        tail: steps[steps.len().saturating_sub(TAIL_LEN)..].to_vec(),
        passed: monotone && (converged || !needs_convergence),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Norm;
    use core::convert::Infallible;

    fn l2(dim: usize) -> NormedSpace {
        NormedSpace::new(dim, Norm::L2).unwrap()
    }

    fn quarter(z: &[f64]) -> Result<Point, Infallible> {
        Ok(Point::from([-z[1], z[0]]))
    }

    #[test]
    fn identity_stops_immediately() {
        let out = km_iterate(&l2(2), |z: &[f64]| Ok::<_, Infallible>(Point(z.to_vec())), &[0.3, 0.1], &KmParams::new(1e-9)).unwrap();
        assert_eq!(&out.point.0, &[0.3, 0.1]);
        assert_eq!(out.trace.iterations(), 1);
        assert_eq!(out.trace.stop_reason, Some(StopReason::StepTol));
        assert!(asymptotic_regularity_check(&out.trace).passed);
    }

    #[test]
    fn negation_collapses_in_one_step() {
        let neg = |z: &[f64]| Ok::<_, Infallible>(Point(z.iter().map(|v| -v).collect()));
        let out = km_iterate(&l2(2), neg, &[0.7, 0.0], &KmParams::new(1e-9)).unwrap();
        assert_eq!(&out.point.0, &[0.0, 0.0]);
        assert_eq!(out.trace.iterates_kept[1], Point::from([0.0, 0.0]));
    }

    #[test]
    fn rotation_rate_is_half_root_two() {
        let out = km_iterate(&l2(2), quarter, &[1.0, 0.0], &KmParams::new(1e-12)).unwrap();
        let steps = &out.trace.step_norms;
        for w in steps.windows(2) {
            assert!((w[1] / w[0] - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        }
        // γ = 1/2: residual is exactly twice the step.
        for (r, s) in out.trace.residuals.iter().zip(steps) {
            assert!((r - 2.0 * s).abs() <= 1e-15 * r.max(1.0));
        }
        assert!(asymptotic_regularity_check(&out.trace).passed);
    }

    #[test]
    fn ring_keeps_last_eight() {
        let out = km_iterate(&l2(2), quarter, &[1.0, 0.0], &KmParams::new(1e-12)).unwrap();
        assert_eq!(out.trace.iterates_kept.len(), KEPT_ITERATES);
        assert_eq!(out.trace.current(), &out.point);
    }

    #[test]
    fn timeout_is_resumable() {
        let params = KmParams { max_iter: 5, ..KmParams::new(1e-12) };
        let Err(KmError::Timeout { trace, .. }) = km_iterate(&l2(2), quarter, &[1.0, 0.0], &params) else {
            panic!("expected timeout");
        };
        assert_eq!(trace.iterations(), 5);
        assert_eq!(trace.stop_reason, Some(StopReason::MaxIter));
        let resumed = km_resume(&l2(2), quarter, *trace, 1000).unwrap();
        let direct = km_iterate(&l2(2), quarter, &[1.0, 0.0], &KmParams::new(1e-12)).unwrap();
        assert_eq!(resumed.point, direct.point);
        assert_eq!(resumed.trace.step_norms, direct.trace.step_norms);
    }

    #[test]
    fn expanding_steps_are_flagged() {
        let trace = KmTrace {
            gamma: 0.5,
            step_tol: 1e-6,
            iterates_kept: [Point::from([0.0])].into_iter().collect(),
            step_norms: alloc::vec![0.5, 0.25, 0.3, 0.1],
            residuals: alloc::vec![1.0, 0.5, 0.6, 0.2],
            stop_reason: Some(StopReason::MaxIter),
        };
        let report = asymptotic_regularity_check(&trace);
        assert_eq!(report.first_violation, Some(1));
        assert!(!report.passed);
    }

    #[test]
    fn bad_gamma_is_rejected() {
        let params = KmParams { gamma: 1.0, ..KmParams::new(1e-6) };
        assert!(matches!(km_iterate(&l2(2), quarter, &[1.0, 0.0], &params), Err(KmError::InvalidParameter(_))));
    }
}
