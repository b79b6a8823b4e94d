//! Detection end to end: trace to sketches, sketches to sub-sketches, sub-sketches
//! to per-flow loss.

use thiserror::Error;

use crate::constraints::{recover_loss_sketches, ConstraintError, ConstraintSystem, LossSketchSet};
use crate::report::{estimate_flow_loss, LossReport, ReportError, SolverSummary};
use crate::solver::{solve, SolveOutcome, SolverError, SolverParams};
use crate::traffic::PacketTrace;
use crate::windowing::{build_series, SketchSeries, WindowingConfig, WindowingError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Windowing(#[from] WindowingError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub series: SketchSeries,
    pub outcome: SolveOutcome,
    pub loss_sketches: LossSketchSet,
    pub report: LossReport,
}

pub fn detect(
    trace: &PacketTrace,
    cfg: &WindowingConfig,
    params: &SolverParams,
) -> Result<Detection, PipelineError> {
    let series = build_series(trace, cfg)?;
    let system = ConstraintSystem::from_series(&series)?;
    let outcome = solve(&system, params)?;
    let loss_sketches = recover_loss_sketches(&outcome.stack, &series.upstream)?;
    let flows = trace.flow_keys();
    let estimates = estimate_flow_loss(&loss_sketches, &series.upstream, &flows)?;
    let report = LossReport {
        n: cfg.n,
        m: cfg.m,
        reportable_windows: system.dims.reportable_windows(),
        solver: Some(SolverSummary {
            status: outcome.status,
            iterations: outcome.iterations,
            residuals: outcome.residuals,
            nuclear_norm: outcome.stack.nuclear_norm(),
        }),
        estimates,
    };
    Ok(Detection {
        series,
        outcome,
        loss_sketches,
        report,
    })
}
