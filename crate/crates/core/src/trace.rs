//! Iteration trace rows shared by the resolvent and KM engines.

use serde::{Deserialize, Serialize};

/// One row of an iteration trace.
///
/// `stage` is 0 for a bare resolvent solve or the base stage of a retraction,
/// and `k` for the `k`-th KM stage above it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub stage: usize,
    pub iteration: u64,
    pub step_norm: f64,
    pub residual: f64,
}
