//! The JSON problem specification.
//!
//! Every default lives in this file as a serde default function, so a spec
//! with all fields spelled out behaves exactly like one that omits them.

use std::path::PathBuf;

use retractor_core::geometry::{NormedSpace, Point, Shape};
use retractor_core::maps::MapKind;
use serde::{Deserialize, Serialize};

/// Current schema version written by this crate.
pub const SPEC_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    #[serde(default = "default_version")]
    pub version: u32,
    pub space: NormedSpace,
    pub body: Shape,
    pub maps: Vec<MapSpec>,
    /// Indices into `maps`, in stage order. Defaults to all maps in order.
    #[serde(default)]
    pub family: Option<Vec<usize>>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub outputs: OutputSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    /// Defaults to `map<index>`.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(flatten)]
    pub kind: MapKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Cap on the KM step tolerance of every stage; `null` uses the derived `γ·eps_k/4`.
    #[serde(default)]
    pub step_tol: Option<f64>,
    #[serde(default = "default_max_iter")]
    pub max_iter: u64,
    /// Base-stage inner tolerance; `null` uses a tenth of the base stage budget.
    #[serde(default)]
    pub inner_tol: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_refinements")]
    pub refinements: u32,
    /// Sampled pairs for maps without a closed-form certificate.
    #[serde(default = "default_certify_samples")]
    pub certify_samples: usize,
    /// Sampled points for non-affine commutativity checks.
    #[serde(default = "default_commuting_samples")]
    pub commuting_samples: usize,
    /// Proceed with maps or families that fail certification (negative controls).
    #[serde(default)]
    pub allow_uncertified: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub report: Option<PathBuf>,
    #[serde(default)]
    pub trace: Option<PathBuf>,
    /// Explicit evaluation points, evaluated first.
    #[serde(default)]
    pub points: Vec<Point>,
    /// Additional sampled points (the body center is always evaluated last).
    #[serde(default = "default_sample_count")]
    pub sample_count: usize,
}

fn default_version() -> u32 {
    SPEC_VERSION
}

fn default_eps() -> f64 {
    1e-6
}

fn default_gamma() -> f64 {
    0.5
}

fn default_max_iter() -> u64 {
    1_000_000
}

fn default_refinements() -> u32 {
    4
}

fn default_certify_samples() -> usize {
    1000
}

fn default_commuting_samples() -> usize {
    100
}

fn default_sample_count() -> usize {
    8
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            eps: default_eps(),
            gamma: default_gamma(),
            step_tol: None,
            max_iter: default_max_iter(),
            inner_tol: None,
            seed: 0,
            refinements: default_refinements(),
            certify_samples: default_certify_samples(),
            commuting_samples: default_commuting_samples(),
            allow_uncertified: false,
        }
    }
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { report: None, trace: None, points: Vec::new(), sample_count: default_sample_count() }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SpecError {
    #[error("malformed spec: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid spec: {0}")]
    Invalid(String),
}

/// Command-line overrides applied on top of a parsed spec.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub eps: Option<f64>,
    pub gamma: Option<f64>,
    pub seed: Option<u64>,
    pub max_iter: Option<u64>,
    pub allow_uncertified: bool,
    pub report: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

impl ProblemSpec {
    /// Parses and validates.
    pub fn from_json(text: &str) -> Result<Self, SpecError> {
        let spec: ProblemSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), SpecError> {
        if let Some(v) = o.eps {
            self.solver.eps = v;
        }
        if let Some(v) = o.gamma {
            self.solver.gamma = v;
        }
        if let Some(v) = o.seed {
            self.solver.seed = v;
        }
        if let Some(v) = o.max_iter {
            self.solver.max_iter = v;
        }
        self.solver.allow_uncertified |= o.allow_uncertified;
        if o.report.is_some() {
            self.outputs.report.clone_from(&o.report);
        }
        if o.trace.is_some() {
            self.outputs.trace.clone_from(&o.trace);
        }
        self.validate()
    }

    /// The family as indices into `maps`.
    pub fn family_indices(&self) -> Vec<usize> {
        self.family.clone().unwrap_or_else(|| (0..self.maps.len()).collect())
    }

    pub fn map_name(&self, index: usize) -> String {
        self.maps[index].name.clone().unwrap_or_else(|| format!("map{index}"))
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let bad = |m: String| Err(SpecError::Invalid(m));
        if self.version != SPEC_VERSION {
            return bad(format!("unsupported spec version {}", self.version));
        }
        if self.maps.is_empty() {
            return bad("at least one map is required".into());
        }
        let family = self.family_indices();
        if family.is_empty() {
            return bad("family must name at least one map".into());
        }
        if let Some(i) = family.iter().find(|&&i| i >= self.maps.len()) {
            return bad(format!("family index {i} is out of range (there are {} maps)", self.maps.len()));
        }
        let s = &self.solver;
        if !(s.eps > 0.0 && s.eps.is_finite()) {
            return bad(format!("eps must be positive, got {}", s.eps));
        }
        if !(s.gamma > 0.0 && s.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", s.gamma));
        }
        if s.step_tol.is_some_and(|t| !(t > 0.0)) || s.inner_tol.is_some_and(|t| !(t > 0.0)) {
            return bad("tolerances must be positive".into());
        }
        if s.max_iter == 0 {
            return bad("max_iter must be positive".into());
        }
        if let Some(p) = self.outputs.points.iter().find(|p| p.dim() != self.space.dim()) {
            return bad(format!("evaluation point {p:?} has the wrong dimension"));
        }
        Ok(())
    }

    /// The spec as embedded in reports: output paths dropped so reports of
    /// the same problem compare equal wherever they are written.
    pub fn without_paths(&self) -> Self {
        let mut s = self.clone();
        s.outputs.report = None;
        s.outputs.trace = None;
        s
    }
}
