//! Flow-level packet loss detection from upstream and downstream Count-Min
//! sketches.
//!
//! Packets sent in one upstream window can arrive in any of the next `m`
//! downstream windows, so comparing `S_k` with `R_k` directly mixes loss with
//! delay jitter. Each upstream sketch is instead split into `m` delay-branch
//! sub-sketches plus a loss sketch; the sub-sketches are recovered by
//! minimizing the nuclear norm of their stack subject to the downstream
//! observations, and the loss sketches are what is left over.
//!
//! - [`sketch`]: Count-Min sketch and hash family.
//! - [`traffic`]: synthetic traces with ground truth.
//! - [`windowing`]: window assignment and the observed sketch series.
//! - [`constraints`]: the stacked unknown and its linear constraint maps.
//! - [`solver`]: the sGS-ADMM solver.
//! - [`report`]: per-flow loss and severity-group metrics.
//! - [`pipeline`]: all of the above chained together.

pub mod constraints;
pub mod pipeline;
pub mod report;
pub mod sketch;
pub mod solver;
pub mod traffic;
pub mod windowing;

pub use constraints::{ConstraintSystem, Dims, LossSketchSet, SubSketchStack};
pub use report::{FlowLossEstimate, GroupMetrics, LossReport, Severity, Thresholds};
pub use sketch::{CmSketch, FlowKey, HashFamily};
pub use solver::{KktResiduals, SolveOutcome, SolveStatus, SolverParams, SolverState};
pub use traffic::{DelayModel, FlowSpec, GroundTruth, LossSchedule, PacketTrace};
pub use windowing::{SketchSeries, WindowingConfig};
