//! certify → build → apply → audit, shared by the CLI commands.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use retractor_core::audit::{AuditConfig, AuditContext, SUITE};
use retractor_core::geometry::{ConvexBody, Point};
use retractor_core::maps::{certify_commuting, MapError, CertifiedMap, CommutingCertificate, CommutingFamily};
use retractor_core::resolvent::{ResolveOptions, ResolventError, DEFAULT_INNER_TOL_RATIO};
use retractor_core::retraction::{build_retraction, default_stage_budget, BuildOptions, RetractionError, RetractionProc};
use retractor_core::trace::TraceRecord;

use crate::report::{Evaluation, MapCertificate, RetractionSummary, RunReport, Summary};
use crate::spec::{ProblemSpec, SpecError};

/// Process exit statuses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Status {
    Ok = 0,
    Io = 1,
    Parse = 2,
    Certification = 3,
    Convergence = 4,
    Audit = 5,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("certification failed: {message}")]
    Certification { message: String, report: Box<RunReport> },
    #[error("convergence failure: {message}")]
    Convergence { message: String, report: Box<RunReport>, trace: Vec<TraceRecord> },
}

impl RunError {
    pub fn status(&self) -> Status {
        match self {
            RunError::Io { .. } => Status::Io,
            RunError::Spec(_) => Status::Parse,
            RunError::Certification { .. } => Status::Certification,
            RunError::Convergence { .. } => Status::Convergence,
        }
    }
}

/// A certified problem ready to build.
pub struct Prepared {
    pub body: Arc<ConvexBody>,
    pub family: CommutingFamily,
    pub build: BuildOptions,
    /// Inner tolerance used by the single-map audits.
    pub inner_tol: f64,
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Builds the body and maps and certifies them, recording certificates in `report`.
pub fn prepare(spec: &ProblemSpec, report: &mut RunReport) -> Result<Prepared, RunError> {
    let started = Instant::now();
    let solver = &spec.solver;
    let body = Arc::new(ConvexBody::new(spec.space.clone(), spec.body.clone()).map_err(|e| SpecError::Invalid(e.to_string()))?);
    for p in &spec.outputs.points {
        if !body.contains(p, 0.0) {
            return Err(SpecError::Invalid(format!("evaluation point {p:?} lies outside the body")).into());
        }
    }
    let mut maps = Vec::new();
    for &i in &spec.family_indices() {
        let name = spec.map_name(i);
        let map = CertifiedMap::new(name.clone(), body.clone(), spec.maps[i].kind.clone()).map_err(|e| SpecError::Invalid(e.to_string()))?;
        match map.clone().certified(solver.certify_samples, solver.seed) {
            Ok(m) => {
                info!("map `{name}`: {:?}", m.certificate());
                report.certificates.maps.push(MapCertificate { name, certificate: m.certificate().clone(), failure: None });
                maps.push(m);
            }
            Err(e) if solver.allow_uncertified => {
                warn!("map `{name}` failed certification, continuing under override: {e}");
                report.certificates.maps.push(MapCertificate { name, certificate: map.certificate().clone(), failure: Some(e.to_string()) });
                report.notes.push(format!("certification override: {e}"));
                maps.push(map);
            }
            Err(e) => {
                report.status = "certification_failed".into();
                report.certificates.maps.push(MapCertificate { name, certificate: map.certificate().clone(), failure: Some(e.to_string()) });
                report.timings.certify_ms = elapsed_ms(started);
                return Err(RunError::Certification { message: e.to_string(), report: Box::new(report.clone()) });
            }
        }
    }
    let family = CommutingFamily::new(maps).map_err(|e| SpecError::Invalid(e.to_string()))?;
    let family = match certify_commuting(&family, solver.commuting_samples, solver.seed) {
        Ok(cert) => family.with_certificate(cert),
        Err(e) if solver.allow_uncertified => {
            warn!("family failed commutativity certification, continuing under override: {e}");
            report.notes.push(format!("commutativity override: {e}"));
            family.with_certificate(CommutingCertificate::Unchecked)
        }
        Err(e) => {
            report.status = "certification_failed".into();
            report.timings.certify_ms = elapsed_ms(started);
            return Err(RunError::Certification { message: e.to_string(), report: Box::new(report.clone()) });
        }
    };
    report.certificates.family = Some(family.commutativity().clone());
    report.timings.certify_ms = elapsed_ms(started);

    let budget = default_stage_budget(solver.eps, family.len());
    let build = BuildOptions {
        gamma: solver.gamma,
        km_step_tol: solver.step_tol,
        max_iter: solver.max_iter,
        inner_tol_ratio: solver.inner_tol.map_or(DEFAULT_INNER_TOL_RATIO, |t| t / budget[0]),
        refinements: solver.refinements,
        stage_budget: None,
        resolve: ResolveOptions { allow_uncertified: solver.allow_uncertified, ..Default::default() },
    };
    let inner_tol = solver.inner_tol.unwrap_or(solver.eps * DEFAULT_INNER_TOL_RATIO);
    Ok(Prepared { body, family, build, inner_tol })
}

fn build(spec: &ProblemSpec, prepared: &Prepared, report: &mut RunReport) -> Result<RetractionProc, RunError> {
    let started = Instant::now();
    let r = build_retraction(&prepared.family, spec.solver.eps, &prepared.build).map_err(|e| convergence(e, report))?;
    report.timings.build_ms = elapsed_ms(started);
    report.retraction = Some(RetractionSummary {
        eps: r.eps(),
        gamma: r.options().gamma,
        stage_budget: r.stage_budget().to_vec(),
        stages: r.stages(),
    });
    Ok(r)
}

fn self_map_violation(e: &RetractionError) -> bool {
    matches!(
        e,
        RetractionError::Map(MapError::SelfMap { .. })
            | RetractionError::Resolvent { source: ResolventError::Map(MapError::SelfMap { .. }), .. }
    )
}

/// Self-map violations surface while building, but they are a defect of the map, so they
/// are reported as certification failures.
fn convergence(e: RetractionError, report: &mut RunReport) -> RunError {
    if self_map_violation(&e) {
        report.status = "certification_failed".into();
        return RunError::Certification { message: e.to_string(), report: Box::new(report.clone()) };
    }
    let trace = match &e {
        RetractionError::ContractFailure { diagnostics, .. } => diagnostics.trace.clone(),
        RetractionError::StageTimeout { stage, trace, .. } => trace.records(*stage),
        _ => Vec::new(),
    };
    report.status = "convergence_failed".into();
    report.trace.clone_from(&trace);
    RunError::Convergence { message: e.to_string(), report: Box::new(report.clone()), trace }
}

/// Explicit points, then `sample_count` sampled points, then the body center.
pub fn evaluation_points(spec: &ProblemSpec, body: &ConvexBody) -> Vec<Point> {
    let mut pts = spec.outputs.points.clone();
    let sampled = body.sample_points(spec.outputs.sample_count + 1, spec.solver.seed);
    pts.extend(sampled.iter().skip(1).cloned());
    pts.push(sampled[0].clone());
    pts
}

/// Certifies, builds, and applies the retraction at every evaluation point.
pub fn run_solve(spec: &ProblemSpec) -> Result<RunReport, RunError> {
    let started = Instant::now();
    let mut report = RunReport::new("solve", spec);
    let prepared = prepare(spec, &mut report)?;
    let r = build(spec, &prepared, &mut report)?;
    let solving = Instant::now();
    let mut summary = Summary { max_residual: 0.0, stages: r.stage_count(), total_km_iterations: 0, total_inner_iterations: 0, contract_held: true };
    for (k, x) in evaluation_points(spec, &prepared.body).into_iter().enumerate() {
        let result = if k == 0 { r.apply_traced(&x) } else { r.apply(&x) };
        let (y, diag) = result.map_err(|e| convergence(e, &mut report))?;
        if k == 0 {
            report.trace = diag.trace.clone();
        }
        summary.max_residual = summary.max_residual.max(diag.max_residual);
        summary.total_km_iterations += diag.km_iterations.iter().sum::<u64>();
        summary.total_inner_iterations += diag.inner_iterations;
        report.evaluations.push(Evaluation {
            x,
            y,
            residuals: diag.residuals,
            max_residual: diag.max_residual,
            round: diag.round,
            km_iterations: diag.km_iterations,
            inner_iterations: diag.inner_iterations,
            resolvent_calls: diag.resolvent_calls,
        });
    }
    summary.contract_held = summary.max_residual <= r.eps();
    report.summary = Some(summary);
    report.timings.solve_ms = elapsed_ms(solving);
    report.timings.total_ms = elapsed_ms(started);
    Ok(report)
}

/// Certifies and builds, then runs every suite audit with `config`.
/// Failed audits are recorded in the report (status `audit_failed`), not returned as errors.
pub fn run_property_suite(spec: &ProblemSpec, config: &AuditConfig) -> Result<RunReport, RunError> {
    let started = Instant::now();
    let mut report = RunReport::new("verify", spec);
    let prepared = prepare(spec, &mut report)?;
    let r = build(spec, &prepared, &mut report)?;
    let ctx = AuditContext {
        family: &prepared.family,
        retraction: Some(&r),
        eps: spec.solver.eps,
        inner_tol: prepared.inner_tol,
        allow_uncertified: spec.solver.allow_uncertified,
        seed: spec.solver.seed,
        config,
    };
    for (id, audit) in SUITE {
        let t = Instant::now();
        let result = audit(&ctx);
        report.timings.audits_ms.insert((*id).to_string(), elapsed_ms(t));
        if result.passed {
            info!("{id}: pass ({} checks)", result.checks);
        } else {
            warn!("{id}: FAIL {}", result.detail);
        }
        report.audits.push(result);
    }
    report.audit_config = Some(config.clone());
    if report.failed_audits().next().is_some() {
        report.status = "audit_failed".into();
    }
    report.timings.total_ms = elapsed_ms(started);
    Ok(report)
}
