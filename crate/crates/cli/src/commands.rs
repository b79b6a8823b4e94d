//! The four subcommands. Each returns the process exit code it earned; errors
//! carry their own.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sketchdecomp::pipeline::{detect, Detection, PipelineError};
use sketchdecomp::report::{
    check_flow_sets, evaluate, group_flows, write_metrics_csv, write_plot_csv, Evaluation,
};
use sketchdecomp::solver::{write_history_csv, SolverError};
use sketchdecomp::traffic::{delay_histogram, generate_trace, TrafficError};
use sketchdecomp::windowing::WindowingError;
use sketchdecomp::{GroundTruth, LossReport, PacketTrace, SolveStatus, Thresholds};

use crate::config::RunConfig;
use crate::error::{CliError, EXIT_NON_CONVERGED, EXIT_OK};

pub const TRACE_FILE: &str = "trace.ndjson";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const SERIES_FILE: &str = "series.json";
pub const STACK_FILE: &str = "stack.json";
pub const RESIDUALS_FILE: &str = "residuals.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const REPORT_FILE: &str = "report.json";
pub const ROUNDED_REPORT_FILE: &str = "report_rounded.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const DELAY_HISTOGRAM_FILE: &str = "delay_histogram.csv";
pub const LOSS_SERIES_FILE: &str = "loss_series.csv";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OutputOptions {
    /// Write the delay histogram and the actual-vs-estimated series.
    pub emit_plot_data: bool,
    /// Also write a copy of the report with estimates rounded to whole packets.
    pub round: bool,
}

pub fn cmd_simulate(cfg: &RunConfig, out: &Path, opts: OutputOptions) -> Result<i32, CliError> {
    simulate(cfg, out, opts)?;
    Ok(EXIT_OK)
}

pub fn cmd_detect(
    cfg: &RunConfig,
    trace_path: &Path,
    out: &Path,
    opts: OutputOptions,
) -> Result<i32, CliError> {
    let trace = read_trace(trace_path)?;
    let det = run_detection(cfg, &trace, trace_path, out, opts)?;
    Ok(detection_exit(&det))
}

pub fn cmd_evaluate(
    report_path: &Path,
    gt_path: &Path,
    thresholds: &Thresholds,
    out: &Path,
    opts: OutputOptions,
) -> Result<i32, CliError> {
    let report: LossReport = read_json(report_path)?;
    let gt: GroundTruth = read_json(gt_path)?;
    evaluate_and_write(&report, &gt, thresholds, out, opts, report_path)?;
    Ok(EXIT_OK)
}

/// Simulate, detect and evaluate in one go. The exit code is the worst stage's.
pub fn cmd_run(cfg: &RunConfig, out: &Path, opts: OutputOptions) -> Result<i32, CliError> {
    let (trace, gt) = simulate(cfg, out, opts)?;
    let det = run_detection(cfg, &trace, &out.join(TRACE_FILE), out, opts)?;
    evaluate_and_write(
        &det.report,
        &gt,
        &cfg.thresholds(),
        out,
        opts,
        &out.join(REPORT_FILE),
    )?;
    Ok(detection_exit(&det))
}

fn simulate(
    cfg: &RunConfig,
    out: &Path,
    opts: OutputOptions,
) -> Result<(PacketTrace, GroundTruth), CliError> {
    let scenario = cfg
        .scenario()
        .ok_or_else(|| CliError::Input("config has no [simulator] section".into()))?;
    let (trace, gt) = generate_trace(
        &scenario.flows,
        &scenario.delay,
        &scenario.losses,
        scenario.windows,
        scenario.seed,
    )
    .map_err(|e| CliError::Input(format!("simulator: {e}")))?;
    log::info!(
        "simulated {} packets over {} flows, {} lost",
        trace.records.len(),
        gt.flows.len(),
        gt.total_lost()
    );
    create_dir(out)?;
    write_with(&out.join(TRACE_FILE), |w| {
        trace.write_ndjson(w).map_err(|e| match e {
            TrafficError::Io(io) => io,
            other => std::io::Error::other(other.to_string()),
        })
    })?;
    write_json(&out.join(GROUND_TRUTH_FILE), &gt)?;
    if opts.emit_plot_data {
        let bins = delay_histogram(&trace, cfg.report.histogram_bin_ns.max(1));
        write_with(&out.join(DELAY_HISTOGRAM_FILE), |w| {
            writeln!(w, "delay_ns,packets")?;
            for (lo, count) in bins {
                writeln!(w, "{lo},{count}")?;
            }
            Ok(())
        })?;
    }
    Ok((trace, gt))
}

fn run_detection(
    cfg: &RunConfig,
    trace: &PacketTrace,
    trace_path: &Path,
    out: &Path,
    opts: OutputOptions,
) -> Result<Detection, CliError> {
    let wcfg = cfg.windowing_config();
    let det = match detect(trace, &wcfg, &cfg.solver_params()) {
        Ok(det) => det,
        Err(PipelineError::Windowing(e @ WindowingError::SendOutOfRange { .. }))
        | Err(PipelineError::Windowing(e @ WindowingError::BranchOutOfRange { .. })) => {
            return Err(CliError::invalid(trace_path, e.to_string()));
        }
        Err(PipelineError::Solver(SolverError::Svd {
            iteration,
            checkpoint,
        })) => {
            create_dir(out)?;
            let path = out.join(CHECKPOINT_FILE);
            write_with(&path, |w| w.write_all(checkpoint.as_bytes()))?;
            return Err(CliError::Internal(format!(
                "SVD failed at iteration {iteration}; state saved to {}",
                path.display()
            )));
        }
        Err(e) => return Err(CliError::Internal(e.to_string())),
    };
    let outcome = &det.outcome;
    log::info!(
        "solver {:?} after {} sweeps, max residual {:.3e}",
        outcome.status,
        outcome.iterations,
        outcome.residuals.max()
    );
    create_dir(out)?;
    write_json(&out.join(SERIES_FILE), &det.series)?;
    write_json(&out.join(STACK_FILE), &outcome.stack)?;
    write_with(&out.join(RESIDUALS_FILE), |w| {
        write_history_csv(outcome.history(), w)
    })?;
    write_with(&out.join(CHECKPOINT_FILE), |w| {
        w.write_all(outcome.state.checkpoint_json().as_bytes())
    })?;
    write_json(&out.join(REPORT_FILE), &det.report)?;
    if opts.round {
        write_json(&out.join(ROUNDED_REPORT_FILE), &det.report.rounded())?;
    }
    Ok(det)
}

fn detection_exit(det: &Detection) -> i32 {
    match det.outcome.status {
        SolveStatus::Converged => EXIT_OK,
        SolveStatus::NonConverged => {
            log::warn!(
                "solver did not converge within {} sweeps; report written anyway",
                det.outcome.iterations
            );
            EXIT_NON_CONVERGED
        }
    }
}

fn evaluate_and_write(
    report: &LossReport,
    gt: &GroundTruth,
    thresholds: &Thresholds,
    out: &Path,
    opts: OutputOptions,
    report_path: &Path,
) -> Result<Evaluation, CliError> {
    check_flow_sets(&report.estimates, gt)
        .map_err(|e| CliError::invalid(report_path, e.to_string()))?;
    if gt.n < report.reportable_windows {
        return Err(CliError::invalid(
            report_path,
            format!(
                "report covers {} windows but ground truth only {}",
                report.reportable_windows, gt.n
            ),
        ));
    }
    let partition = group_flows(gt, thresholds, report.reportable_windows)
        .map_err(|e| CliError::Input(e.to_string()))?;
    let eval = evaluate(&report.estimates, gt, &partition)
        .map_err(|e| CliError::invalid(report_path, e.to_string()))?;
    for w in &eval.warnings {
        log::warn!("{w}");
    }
    create_dir(out)?;
    write_with(&out.join(METRICS_FILE), |w| {
        write_metrics_csv(&eval.metrics, w)
    })?;
    if opts.emit_plot_data {
        write_with(&out.join(LOSS_SERIES_FILE), |w| {
            write_plot_csv(&report.estimates, gt, &partition, w)
        })?;
    }
    Ok(eval)
}

pub fn read_trace(path: &Path) -> Result<PacketTrace, CliError> {
    let file = File::open(path).map_err(|e| CliError::invalid(path, e.to_string()))?;
    PacketTrace::read_ndjson(BufReader::new(file))
        .map_err(|e| CliError::invalid(path, e.to_string()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let file = File::open(path).map_err(|e| CliError::invalid(path, e.to_string()))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| CliError::invalid(path, e.to_string()))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_with<F>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let io = |e| CliError::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    f(&mut w).map_err(io)?;
    w.flush().map_err(io)?;
    log::debug!("wrote {}", path.display());
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::other)?;
        writeln!(w)
    })
}

/// Paths of every artifact a full run writes, in the order it writes them.
pub fn run_artifacts(out: &Path, opts: OutputOptions) -> Vec<PathBuf> {
    let mut names = vec![TRACE_FILE, GROUND_TRUTH_FILE];
    if opts.emit_plot_data {
        names.push(DELAY_HISTOGRAM_FILE);
    }
    names.extend([
        SERIES_FILE,
        STACK_FILE,
        RESIDUALS_FILE,
        CHECKPOINT_FILE,
        REPORT_FILE,
    ]);
    if opts.round {
        names.push(ROUNDED_REPORT_FILE);
    }
    names.push(METRICS_FILE);
    if opts.emit_plot_data {
        names.push(LOSS_SERIES_FILE);
    }
    names.into_iter().map(|n| out.join(n)).collect()
}
