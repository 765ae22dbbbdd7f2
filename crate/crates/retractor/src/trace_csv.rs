//! CSV traces with columns `stage, iteration, step_norm, residual`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use retractor_core::trace::TraceRecord;
use serde::Serialize;

pub fn write_trace<W: Write>(out: W, records: &[TraceRecord]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record(["stage", "iteration", "step_norm", "residual"])?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(input: R) -> Result<Vec<TraceRecord>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// One stage's decay series, ready for a log-scale plot.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Series {
    pub stage: usize,
    pub iterations: Vec<u64>,
    pub step_norms: Vec<f64>,
    /// `log10(step_norm)`, `null` where the step is zero.
    pub log10_step_norms: Vec<Option<f64>>,
}

/// Splits a (possibly multi-stage) trace into per-stage series, ordered by stage.
pub fn plot_series(records: &[TraceRecord]) -> Vec<Series> {
    let mut by_stage: BTreeMap<usize, Series> = BTreeMap::new();
    for r in records {
        let s = by_stage.entry(r.stage).or_insert_with(|| Series {
            stage: r.stage,
            iterations: Vec::new(),
            step_norms: Vec::new(),
            log10_step_norms: Vec::new(),
        });
        s.iterations.push(r.iteration);
        s.step_norms.push(r.step_norm);
        s.log10_step_norms.push((r.step_norm > 0.0).then(|| r.step_norm.log10()));
    }
    by_stage.into_values().collect()
}

/// Flat CSV of the series: `stage, iteration, step_norm, log10_step_norm`.
pub fn write_plot_csv<W: Write>(out: W, series: &[Series]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["stage", "iteration", "step_norm", "log10_step_norm"])?;
    for s in series {
        for i in 0..s.iterations.len() {
            let log = s.log10_step_norms[i].map(|v| v.to_string()).unwrap_or_default();
            w.write_record([s.stage.to_string(), s.iterations[i].to_string(), s.step_norms[i].to_string(), log])?;
        }
    }
    w.flush()?;
    Ok(())
}
