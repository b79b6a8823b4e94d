//! Run configuration: one TOML or JSON document plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sketchdecomp::solver::SolverParams;
use sketchdecomp::traffic::{
    DelayModel, FlowSpec, LossEntry, LossMode, LossSchedule, SimWindows, WindowRange,
};
use sketchdecomp::{FlowKey, Thresholds, WindowingConfig};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Simulator seed; also the hash seed unless `sketch.seed` is set.
    #[serde(default)]
    pub seed: u64,
    pub windowing: WindowingSection,
    pub sketch: SketchSection,
    #[serde(default)]
    pub simulator: Option<SimulatorSection>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub report: ReportSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowingSection {
    pub n: usize,
    pub window_ns: u64,
    pub m: usize,
    /// Defaults to the simulator's minimum delay.
    #[serde(default)]
    pub downstream_offset_ns: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SketchSection {
    pub d: usize,
    pub w: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatorSection {
    pub delay: DelayModel,
    #[serde(default)]
    pub flows: Vec<FlowEntry>,
    /// Families of identically configured flows named `{prefix}-{i}`.
    #[serde(default)]
    pub groups: Vec<FlowGroup>,
    #[serde(default)]
    pub losses: Vec<LossConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowEntry {
    pub key: String,
    pub packets_per_window: u64,
    /// All windows when absent.
    #[serde(default)]
    pub active_windows: Option<WindowRange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowGroup {
    pub prefix: String,
    pub count: usize,
    pub packets_per_window: u64,
    #[serde(default)]
    pub active_windows: Option<WindowRange>,
    /// Applied to every member of the group.
    #[serde(default)]
    pub losses: Vec<GroupLoss>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupLoss {
    #[serde(default)]
    pub windows: Option<WindowRange>,
    #[serde(flatten)]
    pub mode: LossMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub flow: String,
    #[serde(default)]
    pub windows: Option<WindowRange>,
    #[serde(flatten)]
    pub mode: LossMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub sigma: f64,
    pub gamma: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let p = SolverParams::default();
        SolverSection {
            sigma: p.sigma,
            gamma: p.gamma,
            tol: p.tol,
            max_iter: p.max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSection {
    pub t_severe: f64,
    pub t_extreme: f64,
    pub out_dir: PathBuf,
    /// Bin width of the delay histogram written with plot data.
    pub histogram_bin_ns: u64,
}

impl Default for ReportSection {
    fn default() -> Self {
        let t = Thresholds::default();
        ReportSection {
            t_severe: t.t_severe,
            t_extreme: t.t_extreme,
            out_dir: PathBuf::from("out"),
            histogram_bin_ns: 1_000_000,
        }
    }
}

/// Command-line values that replace their config counterparts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub d: Option<usize>,
    pub w: Option<usize>,
    pub sigma: Option<f64>,
    pub gamma: Option<f64>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub max_iter: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

/// Simulator inputs with groups expanded and defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub flows: Vec<FlowSpec>,
    pub delay: DelayModel,
    pub losses: LossSchedule,
    pub windows: SimWindows,
    pub seed: u64,
}

impl RunConfig {
    /// Parses TOML, or JSON when the path ends in `.json`, then validates.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let source =
            std::fs::read_to_string(path).map_err(|e| CliError::invalid(path, e.to_string()))?;
        Self::parse(&source, path, overrides)
    }

    pub fn parse(source: &str, path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let is_json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut cfg: RunConfig = if is_json {
            serde_json::from_str(source).map_err(|e| CliError::invalid(path, e.to_string()))?
        } else {
            toml::from_str(source).map_err(|e| CliError::invalid(path, e.to_string()))?
        };
        cfg.apply(overrides);
        cfg.validate().map_err(|(key, message)| {
            let message = match locate(source, key) {
                Some(line) => format!("line {line}: {message}"),
                None => message,
            };
            CliError::invalid(path, message)
        })?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(n) = o.n {
            self.windowing.n = n;
        }
        if let Some(m) = o.m {
            self.windowing.m = m;
        }
        if let Some(d) = o.d {
            self.sketch.d = d;
        }
        if let Some(w) = o.w {
            self.sketch.w = w;
        }
        if let Some(s) = o.sigma {
            self.solver.sigma = s;
        }
        if let Some(g) = o.gamma {
            self.solver.gamma = g;
        }
        if let Some(t) = o.tol {
            self.solver.tol = t;
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
            self.sketch.seed = None;
        }
        if let Some(it) = o.max_iter {
            self.solver.max_iter = it;
        }
        if let Some(dir) = &o.out_dir {
            self.report.out_dir = dir.clone();
        }
    }

    /// Cross-field checks. On failure returns the config key to point at and
    /// a message.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        let wcfg = self.windowing_config();
        wcfg.validate().map_err(|e| {
            let key = if wcfg.n <= wcfg.m {
                "m"
            } else if wcfg.window_ns == 0 {
                "window_ns"
            } else {
                "w"
            };
            (key, e.to_string())
        })?;
        self.solver_params()
            .validate()
            .map_err(|e| ("solver", e.to_string()))?;
        self.thresholds()
            .validate()
            .map_err(|e| ("t_severe", e.to_string()))?;
        if let Some(sim) = &self.simulator {
            let delay = &sim.delay;
            delay
                .validate()
                .map_err(|e| ("distribution", e.to_string()))?;
            let spread = delay.jitter_bound_ns.saturating_add(delay.clock_offset_ns);
            let limit = (self.windowing.m as u64 - 1).saturating_mul(self.windowing.window_ns);
            if spread > limit {
                return Err((
                    "jitter_bound_ns",
                    format!(
                        "jitter bound plus clock offset ({spread} ns) exceeds (m - 1) * T = {limit} ns; \
                         packets would arrive outside their {} branch windows",
                        self.windowing.m
                    ),
                ));
            }
            for g in &sim.groups {
                if g.count == 0 {
                    return Err(("count", format!("flow group {} has no members", g.prefix)));
                }
            }
        }
        Ok(())
    }

    pub fn windowing_config(&self) -> WindowingConfig {
        let offset = self
            .windowing
            .downstream_offset_ns
            .unwrap_or_else(|| self.simulator.as_ref().map_or(0, |s| s.delay.d_min_ns));
        WindowingConfig {
            n: self.windowing.n,
            window_ns: self.windowing.window_ns,
            m: self.windowing.m,
            downstream_offset_ns: offset,
            d: self.sketch.d,
            w: self.sketch.w,
            seed: self.sketch.seed.unwrap_or(self.seed),
        }
    }

    pub fn solver_params(&self) -> SolverParams {
        SolverParams {
            sigma: self.solver.sigma,
            gamma: self.solver.gamma,
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
        }
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            t_severe: self.report.t_severe,
            t_extreme: self.report.t_extreme,
        }
    }

    pub fn scenario(&self) -> Option<Scenario> {
        let sim = self.simulator.as_ref()?;
        let n = self.windowing.n;
        let all = WindowRange::new(1, n);
        let mut flows = Vec::new();
        let mut entries = Vec::new();
        for f in &sim.flows {
            flows.push(FlowSpec {
                key: FlowKey::from(f.key.as_str()),
                packets_per_window: f.packets_per_window,
                active_windows: f.active_windows.unwrap_or(all),
            });
        }
        for g in &sim.groups {
            for i in 0..g.count {
                let key = FlowKey::from(format!("{}-{i}", g.prefix));
                for l in &g.losses {
                    entries.push(LossEntry {
                        flow: key.clone(),
                        windows: l.windows.unwrap_or(all),
                        mode: l.mode,
                    });
                }
                flows.push(FlowSpec {
                    key,
                    packets_per_window: g.packets_per_window,
                    active_windows: g.active_windows.unwrap_or(all),
                });
            }
        }
        for l in &sim.losses {
            entries.push(LossEntry {
                flow: FlowKey::from(l.flow.as_str()),
                windows: l.windows.unwrap_or(all),
                mode: l.mode,
            });
        }
        Some(Scenario {
            flows,
            delay: sim.delay,
            losses: LossSchedule { entries },
            windows: SimWindows {
                n,
                window_ns: self.windowing.window_ns,
            },
            seed: self.seed,
        })
    }
}

/// 1-based line of the first occurrence of `key` as a TOML key or JSON field.
fn locate(source: &str, key: &str) -> Option<usize> {
    let quoted = format!("\"{key}\"");
    let header = format!("[{key}]");
    source
        .lines()
        .position(|line| {
            let t = line.trim();
            t.starts_with(&quoted)
                || t == header
                || t.strip_prefix(key)
                    .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map(|i| i + 1)
}
