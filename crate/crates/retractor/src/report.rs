//! The run report written by `solve` and `verify`.

use std::collections::BTreeMap;

use retractor_core::audit::{AuditConfig, AuditResult};
use retractor_core::geometry::Point;
use retractor_core::maps::{Certificate, CommutingCertificate};
use retractor_core::retraction::StageInfo;
use retractor_core::trace::TraceRecord;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::spec::ProblemSpec;

pub const REPORT_VERSION: u32 = 1;

/// Everything a run produced. Apart from `timings`, two runs of the same
/// spec and seed serialize to identical bytes.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub report_version: u32,
    pub command: String,
    /// SHA-256 of the canonical spec JSON (output paths removed).
    pub problem_digest: String,
    pub seed: u64,
    pub spec: ProblemSpec,
    pub status: String,
    pub certificates: Certificates,
    pub retraction: Option<RetractionSummary>,
    pub evaluations: Vec<Evaluation>,
    pub summary: Option<Summary>,
    /// Trace of the first evaluation point.
    pub trace: Vec<TraceRecord>,
    pub audit_config: Option<AuditConfig>,
    pub audits: Vec<AuditResult>,
    pub notes: Vec<String>,
    pub timings: Timings,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Certificates {
    pub maps: Vec<MapCertificate>,
    pub family: Option<CommutingCertificate>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MapCertificate {
    pub name: String,
    pub certificate: Certificate,
    /// Set when certification failed and the run continued under the override.
    pub failure: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RetractionSummary {
    pub eps: f64,
    pub gamma: f64,
    pub stage_budget: Vec<f64>,
    pub stages: Vec<StageInfo>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Evaluation {
    pub x: Point,
    pub y: Point,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub round: u32,
    pub km_iterations: Vec<u64>,
    pub inner_iterations: u64,
    pub resolvent_calls: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub max_residual: f64,
    pub stages: usize,
    pub total_km_iterations: u64,
    pub total_inner_iterations: u64,
    pub contract_held: bool,
}

/// Wall-clock milliseconds; excluded from determinism comparisons.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Timings {
    pub total_ms: f64,
    pub certify_ms: f64,
    pub build_ms: f64,
    pub solve_ms: f64,
    pub audits_ms: BTreeMap<String, f64>,
}

pub fn problem_digest(spec: &ProblemSpec) -> String {
    let canonical = serde_json::to_vec(&spec.without_paths()).expect("spec serializes");
    Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunReport {
    pub fn new(command: &str, spec: &ProblemSpec) -> Self {
        Self {
            report_version: REPORT_VERSION,
            command: command.into(),
            problem_digest: problem_digest(spec),
            seed: spec.solver.seed,
            spec: spec.without_paths(),
            status: "ok".into(),
            certificates: Certificates::default(),
            retraction: None,
            evaluations: Vec::new(),
            summary: None,
            trace: Vec::new(),
            audit_config: None,
            audits: Vec::new(),
            notes: Vec::new(),
            timings: Timings::default(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Failed, non-skipped audits.
    pub fn failed_audits(&self) -> impl Iterator<Item = &AuditResult> {
        self.audits.iter().filter(|a| !a.passed)
    }
}
