//! Per-flow loss estimates and severity-group evaluation.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::LossSketchSet;
use crate::sketch::{CmSketch, FlowKey};
use crate::solver::{KktResiduals, SolveStatus};
use crate::traffic::GroundTruth;

/// Denominator guard for loss rates of flows with no observed traffic.
pub const RATE_EPSILON: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("loss sketch for window {0} does not share the upstream hash family")]
    FamilyMismatch(usize),
    #[error("need {needed} upstream sketches, got {got}")]
    MissingWindows { needed: usize, got: usize },
    #[error("thresholds must satisfy t_extreme > t_severe > 0, got {t_severe} / {t_extreme}")]
    BadThresholds { t_severe: f64, t_extreme: f64 },
    #[error("report and ground truth cover different flows: {0}")]
    FlowMismatch(String),
    #[error("no estimate for flow {flow} in window {window}")]
    MissingEstimate { flow: FlowKey, window: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowLossEstimate {
    pub flow: FlowKey,
    pub window: usize,
    pub estimated_loss: f64,
    pub sent_estimate: f64,
    pub loss_rate: f64,
}

/// Point queries of every flow against `phi_k` and `S_k`, for each reportable
/// window in order.
pub fn estimate_flow_loss(
    phi: &LossSketchSet,
    upstream: &[CmSketch],
    flows: &[FlowKey],
) -> Result<Vec<FlowLossEstimate>, ReportError> {
    if upstream.len() < phi.len() {
        return Err(ReportError::MissingWindows {
            needed: phi.len(),
            got: upstream.len(),
        });
    }
    for (i, (p, s)) in phi.sketches.iter().zip(upstream).enumerate() {
        if p.family() != s.family() {
            return Err(ReportError::FamilyMismatch(i + 1));
        }
    }
    let mut out = Vec::with_capacity(flows.len() * phi.len());
    for flow in flows {
        for (i, (p, s)) in phi.sketches.iter().zip(upstream).enumerate() {
            let estimated_loss = p.query(flow);
            let sent_estimate = s.query(flow);
            out.push(FlowLossEstimate {
                flow: flow.clone(),
                window: i + 1,
                estimated_loss,
                sent_estimate,
                loss_rate: estimated_loss / sent_estimate.max(RATE_EPSILON),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    ExtremelySevere,
    Severe,
    Slight,
}

impl Severity {
    pub const ALL: [Severity; 3] = [
        Severity::ExtremelySevere,
        Severity::Severe,
        Severity::Slight,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Severity::ExtremelySevere => "extremely_severe",
            Severity::Severe => "severe",
            Severity::Slight => "slight",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub t_severe: f64,
    pub t_extreme: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            t_severe: 20.0,
            t_extreme: 300.0,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), ReportError> {
        if !(self.t_severe > 0.0 && self.t_extreme > self.t_severe) {
            return Err(ReportError::BadThresholds {
                t_severe: self.t_severe,
                t_extreme: self.t_extreme,
            });
        }
        Ok(())
    }

    pub fn classify(&self, mean_loss: f64) -> Severity {
        if mean_loss > self.t_extreme {
            Severity::ExtremelySevere
        } else if mean_loss > self.t_severe {
            Severity::Severe
        } else {
            Severity::Slight
        }
    }
}

/// Flows grouped by severity, plus the window horizon the grouping used.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub horizon: usize,
    pub groups: BTreeMap<Severity, Vec<FlowKey>>,
}

/// Groups flows by their mean true loss over windows `1..=horizon`.
pub fn group_flows(
    gt: &GroundTruth,
    thresholds: &Thresholds,
    horizon: usize,
) -> Result<Partition, ReportError> {
    thresholds.validate()?;
    let horizon = horizon.min(gt.n);
    let mut groups: BTreeMap<Severity, Vec<FlowKey>> = BTreeMap::new();
    for t in &gt.flows {
        let total: u64 = t.lost[..horizon].iter().sum();
        let mean = if horizon == 0 {
            0.0
        } else {
            total as f64 / horizon as f64
        };
        groups
            .entry(thresholds.classify(mean))
            .or_default()
            .push(t.flow.clone());
    }
    Ok(Partition { horizon, groups })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub group: Severity,
    pub flows: usize,
    /// Number of (flow, window) pairs averaged over.
    pub samples: usize,
    pub avg_actual: f64,
    pub avg_estimated: f64,
    /// Mean absolute error.
    pub avg_error: f64,
    /// `avg_error / avg_actual`; `None` when the group has no actual loss
    /// but a nonzero error.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub metrics: Vec<GroupMetrics>,
    pub warnings: Vec<String>,
}

/// Averages over every (flow, window) pair of each group within the
/// partition horizon.
pub fn evaluate(
    estimates: &[FlowLossEstimate],
    gt: &GroundTruth,
    partition: &Partition,
) -> Result<Evaluation, ReportError> {
    let by_key: BTreeMap<(&FlowKey, usize), &FlowLossEstimate> =
        estimates.iter().map(|e| ((&e.flow, e.window), e)).collect();
    let mut metrics = Vec::new();
    let mut warnings = Vec::new();
    for severity in Severity::ALL {
        let flows = partition
            .groups
            .get(&severity)
            .map_or(&[][..], Vec::as_slice);
        if flows.is_empty() {
            warnings.push(format!("group {} is empty; omitted", severity.label()));
            continue;
        }
        let (mut actual, mut estimated, mut error, mut samples) = (0.0, 0.0, 0.0, 0usize);
        for flow in flows {
            for k in 1..=partition.horizon {
                let e = by_key
                    .get(&(flow, k))
                    .ok_or_else(|| ReportError::MissingEstimate {
                        flow: flow.clone(),
                        window: k,
                    })?;
                let a = gt.loss_count(k, flow) as f64;
                actual += a;
                estimated += e.estimated_loss;
                error += (a - e.estimated_loss).abs();
                samples += 1;
            }
        }
        if samples == 0 {
            warnings.push(format!(
                "group {} has no windows; omitted",
                severity.label()
            ));
            continue;
        }
        let n = samples as f64;
        let (avg_actual, avg_estimated, avg_error) = (actual / n, estimated / n, error / n);
        let ratio = if avg_actual > 0.0 {
            Some(avg_error / avg_actual)
        } else if avg_error == 0.0 {
            Some(0.0)
        } else {
            warnings.push(format!(
                "group {} has no actual loss; ratio undefined",
                severity.label()
            ));
            None
        };
        metrics.push(GroupMetrics {
            group: severity,
            flows: flows.len(),
            samples,
            avg_actual,
            avg_estimated,
            avg_error,
            ratio,
        });
    }
    Ok(Evaluation { metrics, warnings })
}

/// Verifies that the report and the ground truth describe the same flows.
pub fn check_flow_sets(
    estimates: &[FlowLossEstimate],
    gt: &GroundTruth,
) -> Result<(), ReportError> {
    let reported: BTreeSet<&FlowKey> = estimates.iter().map(|e| &e.flow).collect();
    let truth: BTreeSet<&FlowKey> = gt.flows.iter().map(|t| &t.flow).collect();
    if reported != truth {
        let only_report: Vec<String> = reported.difference(&truth).map(|f| f.to_string()).collect();
        let only_truth: Vec<String> = truth.difference(&reported).map(|f| f.to_string()).collect();
        return Err(ReportError::FlowMismatch(format!(
            "only in report: [{}], only in ground truth: [{}]",
            only_report.join(", "),
            only_truth.join(", ")
        )));
    }
    Ok(())
}

/// Metrics table: one row per statistic, one column per group.
pub fn write_metrics_csv<W: Write>(metrics: &[GroupMetrics], mut out: W) -> std::io::Result<()> {
    let header: Vec<&str> = metrics.iter().map(|m| m.group.label()).collect();
    writeln!(out, "metric,{}", header.join(","))?;
    let row = |name: &str, f: &dyn Fn(&GroupMetrics) -> String| {
        let cells: Vec<String> = metrics.iter().map(f).collect();
        format!("{name},{}", cells.join(","))
    };
    writeln!(out, "{}", row("avg_actual", &|m| m.avg_actual.to_string()))?;
    writeln!(
        out,
        "{}",
        row("avg_estimated", &|m| m.avg_estimated.to_string())
    )?;
    writeln!(out, "{}", row("avg_error", &|m| m.avg_error.to_string()))?;
    writeln!(
        out,
        "{}",
        row("ratio", &|m| m
            .ratio
            .map_or("NA".to_string(), |r| r.to_string()))
    )?;
    Ok(())
}

/// Actual vs. estimated loss per (flow, window).
pub fn write_plot_csv<W: Write>(
    estimates: &[FlowLossEstimate],
    gt: &GroundTruth,
    partition: &Partition,
    mut out: W,
) -> std::io::Result<()> {
    let group_of: BTreeMap<&FlowKey, Severity> = partition
        .groups
        .iter()
        .flat_map(|(s, flows)| flows.iter().map(move |f| (f, *s)))
        .collect();
    writeln!(out, "flow,group,window,actual,estimated")?;
    for e in estimates.iter().filter(|e| e.window <= partition.horizon) {
        let group = group_of.get(&e.flow).map_or("unknown", Severity::label);
        writeln!(
            out,
            "{},{},{},{},{}",
            e.flow,
            group,
            e.window,
            gt.loss_count(e.window, &e.flow),
            e.estimated_loss
        )?;
    }
    Ok(())
}

/// Solver outcome attached to a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub status: SolveStatus,
    pub iterations: usize,
    pub residuals: KktResiduals,
    pub nuclear_norm: f64,
}

/// Full per-flow detail written by detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub n: usize,
    pub m: usize,
    pub reportable_windows: usize,
    pub solver: Option<SolverSummary>,
    pub estimates: Vec<FlowLossEstimate>,
}

impl LossReport {
    /// Copy with estimates rounded to whole packets, for display.
    pub fn rounded(&self) -> LossReport {
        let mut out = self.clone();
        for e in &mut out.estimates {
            e.estimated_loss = e.estimated_loss.round();
            e.sent_estimate = e.sent_estimate.round();
            e.loss_rate = e.estimated_loss / e.sent_estimate.max(RATE_EPSILON);
        }
        out
    }
}
