use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use retractor::pipeline::{run_property_suite, run_solve, RunError, Status};
use retractor::report::RunReport;
use retractor::spec::{Overrides, ProblemSpec};
use retractor::trace_csv::{plot_series, read_trace, write_plot_csv, write_trace};
use retractor_core::audit::AuditConfig;
use retractor_core::trace::TraceRecord;

/// Common fixed points of commuting nonexpansive maps.
#[derive(Parser)]
#[command(name = "retractor", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the retraction and apply it at the spec's evaluation points.
    Solve(RunArgs),
    /// Run the property suite on the spec.
    Verify(RunArgs),
    /// Turn a trace CSV into per-stage decay series.
    TracePlotdata {
        trace: PathBuf,
        #[arg(long, value_enum, default_value_t = PlotFormat::Csv)]
        format: PlotFormat,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotFormat {
    Csv,
    Json,
}

#[derive(Args)]
struct RunArgs {
    spec: PathBuf,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iter: Option<u64>,
    /// Continue past failed certificates (negative controls only).
    #[arg(long)]
    allow_uncertified: bool,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            eps: self.eps,
            gamma: self.gamma,
            seed: self.seed,
            max_iter: self.max_iter,
            allow_uncertified: self.allow_uncertified,
            report: self.report.clone(),
            trace: self.trace.clone(),
        }
    }
}

fn exit(status: Status) -> ExitCode {
    ExitCode::from(status as u8)
}

fn load(args: &RunArgs) -> Result<ProblemSpec, RunError> {
    let text = fs::read_to_string(&args.spec).map_err(|e| retractor::spec::SpecError::Invalid(format!("{}: {e}", args.spec.display())))?;
    let mut spec = ProblemSpec::from_json(&text)?;
    spec.apply(&args.overrides())?;
    Ok(spec)
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    fs::write(path, bytes).map_err(|source| RunError::Io { path: path.to_path_buf(), source })
}

fn write_artifacts(spec: &ProblemSpec, report: &RunReport, trace: &[TraceRecord]) -> Result<(), RunError> {
    if let Some(path) = &spec.outputs.report {
        write(path, report.to_json().as_bytes())?;
    }
    if let Some(path) = &spec.outputs.trace {
        let mut buf = Vec::new();
        write_trace(&mut buf, trace).expect("in-memory CSV");
        write(path, &buf)?;
    }
    Ok(())
}

fn run(args: &RunArgs, verify: bool) -> ExitCode {
    let spec = match load(args) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return exit(e.status());
        }
    };
    let result = if verify { run_property_suite(&spec, &AuditConfig::default()) } else { run_solve(&spec) };
    match result {
        Ok(report) => {
            if let Err(e) = write_artifacts(&spec, &report, &report.trace) {
                eprintln!("error: {e}");
                return exit(e.status());
            }
            if verify {
                let failed: Vec<_> = report.failed_audits().collect();
                let total = report.audits.len();
                let skipped = report.audits.iter().filter(|a| a.skipped).count();
                if failed.is_empty() {
                    println!("all {total} audits passed ({skipped} skipped)");
                    return exit(Status::Ok);
                }
                for a in &failed {
                    println!("FAIL {}: {}", a.id, a.detail);
                }
                println!("{} of {total} audits failed", failed.len());
                exit(Status::Audit)
            } else {
                let s = report.summary.as_ref().expect("solve fills the summary");
                println!(
                    "max residual {:.3e} over {} maps, {} stages, {} KM + {} inner iterations, contract {}",
                    s.max_residual,
                    spec.family_indices().len(),
                    s.stages,
                    s.total_km_iterations,
                    s.total_inner_iterations,
                    if s.contract_held { "held" } else { "VIOLATED" }
                );
                exit(if s.contract_held { Status::Ok } else { Status::Convergence })
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            let artifacts = match &e {
                RunError::Certification { report, .. } => write_artifacts(&spec, report, &[]),
                RunError::Convergence { report, trace, .. } => {
                    let written = write_artifacts(&spec, report, trace);
                    if let Some(p) = &spec.outputs.trace {
                        eprintln!("trace: {}", p.display());
                    }
                    written
                }
                _ => Ok(()),
            };
            if let Err(io) = artifacts {
                eprintln!("error: {io}");
            }
            exit(e.status())
        }
    }
}

fn plotdata(path: &Path, format: PlotFormat) -> ExitCode {
    let records = match fs::File::open(path).map_err(csv::Error::from).and_then(read_trace) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return exit(Status::Parse);
        }
    };
    let series = plot_series(&records);
    let out = std::io::stdout().lock();
    let written = match format {
        PlotFormat::Csv => write_plot_csv(out, &series).map_err(|e| e.to_string()),
        PlotFormat::Json => serde_json::to_writer_pretty(out, &series).map_err(|e| e.to_string()),
    };
    match written {
        Ok(()) => {
            if matches!(format, PlotFormat::Json) {
                println!();
            }
            exit(Status::Ok)
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit(Status::Io)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RETRACTOR_LOG", "warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Solve(args) => run(args, false),
        Command::Verify(args) => run(args, true),
        Command::TracePlotdata { trace, format } => plotdata(trace, *format),
    }
}
