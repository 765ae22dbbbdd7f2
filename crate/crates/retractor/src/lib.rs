//! File formats, run reports, and orchestration for the `retractor` CLI.

pub mod pipeline;
pub mod report;
pub mod spec;
pub mod trace_csv;

pub use pipeline::{run_property_suite, run_solve, RunError, Status};
pub use report::RunReport;
pub use spec::{Overrides, ProblemSpec};
