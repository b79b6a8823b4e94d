//! Time windows and the observed sketch series.
//!
//! Upstream window `k` covers sends in `[(k-1)T, kT)`. Downstream window `k`
//! covers arrivals in `[offset + (k-1)T, offset + kT)`, where `offset` is the
//! minimum one-way delay. Every upstream and downstream window gets its own
//! Count-Min sketch, all sharing one hash family.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{Dims, SubSketchStack};
use crate::sketch::{CmSketch, FlowKey, HashFamily, SketchError};
use crate::traffic::PacketTrace;

#[derive(Debug, Error, PartialEq)]
pub enum WindowingError {
    #[error("invalid windowing config: {0}")]
    BadConfig(String),
    #[error("packet of flow {flow} sent at {send_ns} ns falls outside upstream windows 1..={n}")]
    SendOutOfRange {
        flow: FlowKey,
        send_ns: u64,
        n: usize,
    },
    #[error("packet of flow {flow} sent in window {send_window} arrives in downstream window {arrival_window}, outside its {m} branches")]
    BranchOutOfRange {
        flow: FlowKey,
        send_window: usize,
        arrival_window: i64,
        m: usize,
    },
    #[error(transparent)]
    Sketch(#[from] SketchError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowingConfig {
    pub n: usize,
    pub window_ns: u64,
    pub m: usize,
    pub downstream_offset_ns: u64,
    pub d: usize,
    pub w: usize,
    pub seed: u64,
}

impl WindowingConfig {
    pub fn validate(&self) -> Result<(), WindowingError> {
        if self.m < 1 || self.n <= self.m {
            return Err(WindowingError::BadConfig(format!(
                "need n > m >= 1, got n={} m={}",
                self.n, self.m
            )));
        }
        if self.window_ns == 0 {
            return Err(WindowingError::BadConfig(
                "window length must be positive".into(),
            ));
        }
        HashFamily::new(self.d, self.w, self.seed)?;
        Ok(())
    }

    pub fn family(&self) -> Result<HashFamily, WindowingError> {
        Ok(HashFamily::new(self.d, self.w, self.seed)?)
    }

    pub fn dims(&self) -> Dims {
        Dims {
            n: self.n,
            m: self.m,
            d: self.d,
            w: self.w,
        }
    }

    pub fn upstream_window(&self, send_ns: u64) -> Option<usize> {
        window_index(send_ns, self.window_ns, 0, self.n)
    }

    pub fn downstream_window(&self, arrival_ns: u64) -> Option<usize> {
        window_index(
            arrival_ns,
            self.window_ns,
            self.downstream_offset_ns,
            self.n,
        )
    }

    /// Downstream window relative to the offset without the `[1, n]` clamp;
    /// may be `<= 0` or `> n`.
    fn raw_downstream_window(&self, arrival_ns: u64) -> i64 {
        let shifted = arrival_ns as i128 - self.downstream_offset_ns as i128;
        shifted.div_euclid(self.window_ns as i128) as i64 + 1
    }
}

/// 1-based window of time `t` for windows `[offset + (k-1)T, offset + kT)`,
/// or `None` when the window falls outside `1..=n`.
pub fn window_index(t_ns: u64, window_ns: u64, offset_ns: u64, n: usize) -> Option<usize> {
    if t_ns < offset_ns || window_ns == 0 {
        return None;
    }
    let k = ((t_ns - offset_ns) / window_ns) as usize + 1;
    (k <= n).then_some(k)
}

/// Observed sketches `S_1..S_n` (upstream) and `R_1..R_n` (downstream).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "SeriesRepr", try_from = "SeriesRepr")]
pub struct SketchSeries {
    pub config: WindowingConfig,
    pub upstream: Vec<CmSketch>,
    pub downstream: Vec<CmSketch>,
    /// Delivered packets arriving after downstream window `n`.
    pub spillover: u64,
    /// Delivered packets arriving before downstream window 1; nonzero only
    /// when the offset overestimates the minimum delay.
    pub early_arrivals: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    S,
    R,
}

#[derive(Serialize, Deserialize)]
struct SeriesEntry {
    window: usize,
    role: Role,
    sketch: CmSketch,
}

#[derive(Serialize, Deserialize)]
struct SeriesRepr {
    config: WindowingConfig,
    spillover: u64,
    early_arrivals: u64,
    sketches: Vec<SeriesEntry>,
}

impl From<SketchSeries> for SeriesRepr {
    fn from(s: SketchSeries) -> Self {
        let up = s
            .upstream
            .into_iter()
            .enumerate()
            .map(|(i, sketch)| SeriesEntry {
                window: i + 1,
                role: Role::S,
                sketch,
            });
        let down = s
            .downstream
            .into_iter()
            .enumerate()
            .map(|(i, sketch)| SeriesEntry {
                window: i + 1,
                role: Role::R,
                sketch,
            });
        SeriesRepr {
            config: s.config,
            spillover: s.spillover,
            early_arrivals: s.early_arrivals,
            sketches: up.chain(down).collect(),
        }
    }
}

impl TryFrom<SeriesRepr> for SketchSeries {
    type Error = WindowingError;

    fn try_from(r: SeriesRepr) -> Result<Self, Self::Error> {
        r.config.validate()?;
        let family = r.config.family()?;
        let n = r.config.n;
        let mut upstream = vec![None; n];
        let mut downstream = vec![None; n];
        for e in r.sketches {
            if e.window < 1 || e.window > n {
                return Err(WindowingError::BadConfig(format!(
                    "sketch window {} outside 1..={n}",
                    e.window
                )));
            }
            if e.sketch.family() != &family {
                return Err(WindowingError::BadConfig(format!(
                    "sketch for window {} does not use the configured hash family",
                    e.window
                )));
            }
            let slot = match e.role {
                Role::S => &mut upstream[e.window - 1],
                Role::R => &mut downstream[e.window - 1],
            };
            *slot = Some(e.sketch);
        }
        let collect = |v: Vec<Option<CmSketch>>, role: &str| {
            v.into_iter()
                .enumerate()
                .map(|(i, s)| {
                    s.ok_or_else(|| {
                        WindowingError::BadConfig(format!(
                            "missing {role} sketch for window {}",
                            i + 1
                        ))
                    })
                })
                .collect::<Result<Vec<_>, _>>()
        };
        Ok(SketchSeries {
            config: r.config,
            upstream: collect(upstream, "S")?,
            downstream: collect(downstream, "R")?,
            spillover: r.spillover,
            early_arrivals: r.early_arrivals,
        })
    }
}

impl SketchSeries {
    pub fn family(&self) -> &HashFamily {
        self.upstream[0].family()
    }
}

fn fingerprints(trace: &PacketTrace) -> HashMap<&FlowKey, u64> {
    let mut fps = HashMap::new();
    for r in &trace.records {
        fps.entry(&r.flow).or_insert_with(|| r.flow.fingerprint());
    }
    fps
}

pub fn build_series(
    trace: &PacketTrace,
    cfg: &WindowingConfig,
) -> Result<SketchSeries, WindowingError> {
    cfg.validate()?;
    let family = cfg.family()?;
    let mut upstream = vec![CmSketch::with_family(family.clone()); cfg.n];
    let mut downstream = vec![CmSketch::with_family(family); cfg.n];
    let mut spillover = 0;
    let mut early_arrivals = 0;
    let fps = fingerprints(trace);

    for r in &trace.records {
        let fp = fps[&r.flow];
        let k = cfg
            .upstream_window(r.send_ns)
            .ok_or_else(|| WindowingError::SendOutOfRange {
                flow: r.flow.clone(),
                send_ns: r.send_ns,
                n: cfg.n,
            })?;
        upstream[k - 1].insert_fingerprint(fp, 1);
        if let Some(arrival) = r.arrival_ns {
            let j = cfg.raw_downstream_window(arrival);
            if j < 1 {
                early_arrivals += 1;
            } else if j as usize > cfg.n {
                spillover += 1;
            } else {
                downstream[j as usize - 1].insert_fingerprint(fp, 1);
            }
        }
    }
    Ok(SketchSeries {
        config: *cfg,
        upstream,
        downstream,
        spillover,
        early_arrivals,
    })
}

/// The true branch decomposition: block `M_{k,i}` counts packets sent in
/// upstream window `k` and delivered in downstream window `k + i - 1`,
/// including arrivals past window `n`.
pub fn branch_stack(
    trace: &PacketTrace,
    cfg: &WindowingConfig,
) -> Result<SubSketchStack, WindowingError> {
    cfg.validate()?;
    let family = cfg.family()?;
    let mut stack = SubSketchStack::zeros(cfg.dims());
    let fps = fingerprints(trace);
    for r in &trace.records {
        let Some(arrival) = r.arrival_ns else {
            continue;
        };
        let k = cfg
            .upstream_window(r.send_ns)
            .ok_or_else(|| WindowingError::SendOutOfRange {
                flow: r.flow.clone(),
                send_ns: r.send_ns,
                n: cfg.n,
            })?;
        let j = cfg.raw_downstream_window(arrival);
        let i = j - k as i64 + 1;
        if i < 1 || i > cfg.m as i64 {
            return Err(WindowingError::BranchOutOfRange {
                flow: r.flow.clone(),
                send_window: k,
                arrival_window: j,
                m: cfg.m,
            });
        }
        let fp = fps[&r.flow];
        for row in 0..cfg.d {
            stack.add_to(
                k,
                i as usize,
                row,
                family.index_of_fingerprint(row, fp),
                1.0,
            );
        }
    }
    Ok(stack)
}

/// Sketches of the dropped packets of each upstream window.
pub fn dropped_series(
    trace: &PacketTrace,
    cfg: &WindowingConfig,
) -> Result<Vec<CmSketch>, WindowingError> {
    cfg.validate()?;
    let mut out = vec![CmSketch::with_family(cfg.family()?); cfg.n];
    for r in trace.records.iter().filter(|r| r.arrival_ns.is_none()) {
        let k = cfg
            .upstream_window(r.send_ns)
            .ok_or_else(|| WindowingError::SendOutOfRange {
                flow: r.flow.clone(),
                send_ns: r.send_ns,
                n: cfg.n,
            })?;
        out[k - 1].insert(&r.flow, 1);
    }
    Ok(out)
}
