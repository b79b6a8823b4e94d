//! Synthetic packet traces with bounded delay jitter and injected loss.
//!
//! Packets of each flow are spaced evenly inside every active window. Each
//! packet is either dropped according to the loss schedule or delivered after
//! `d_min + jitter (+ clock offset)`, with the jitter drawn from a distribution
//! truncated to `[0, jitter_bound)`. The generator also tallies the exact sent
//! and dropped counts per upstream window, which serve as ground truth.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::sketch::FlowKey;

#[derive(Debug, Error)]
pub enum TrafficError {
    #[error("flow {0} is declared more than once")]
    DuplicateFlow(FlowKey),
    #[error("flow {0} must send at least one packet per window")]
    EmptyFlow(FlowKey),
    #[error("window range {first}..={last} is outside 1..={n}")]
    WindowRange { first: usize, last: usize, n: usize },
    #[error("loss schedule references unknown flow {0}")]
    UnknownFlow(FlowKey),
    #[error("drop probability {0} is outside [0, 1]")]
    BadProbability(f64),
    #[error("flow {flow} sends {sent} packets in window {window}, cannot drop {requested}")]
    DropCountTooLarge {
        flow: FlowKey,
        window: usize,
        sent: u64,
        requested: u64,
    },
    #[error("loss entries overlap for flow {flow} in window {window}")]
    OverlappingLoss { flow: FlowKey, window: usize },
    #[error("invalid delay model: {0}")]
    BadDelay(String),
    #[error("window length must be positive and n at least 1")]
    BadWindows,
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Inclusive, 1-based window range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowRange {
    pub first: usize,
    pub last: usize,
}

impl WindowRange {
    pub fn new(first: usize, last: usize) -> Self {
        WindowRange { first, last }
    }

    pub fn contains(&self, k: usize) -> bool {
        self.first <= k && k <= self.last
    }

    fn validate(&self, n: usize) -> Result<(), TrafficError> {
        if self.first < 1 || self.first > self.last || self.last > n {
            return Err(TrafficError::WindowRange {
                first: self.first,
                last: self.last,
                n,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub key: FlowKey,
    pub packets_per_window: u64,
    pub active_windows: WindowRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JitterDistribution {
    /// Lognormal with the given median and log-space standard deviation,
    /// conditioned on falling below the jitter bound.
    TruncatedLognormal {
        median_ns: f64,
        shape: f64,
    },
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayModel {
    pub d_min_ns: u64,
    pub jitter_bound_ns: u64,
    /// Added to every downstream timestamp.
    #[serde(default)]
    pub clock_offset_ns: u64,
    pub distribution: JitterDistribution,
}

impl DelayModel {
    pub fn validate(&self) -> Result<(), TrafficError> {
        if let JitterDistribution::TruncatedLognormal { median_ns, shape } = self.distribution {
            if !(median_ns.is_finite() && median_ns > 0.0) {
                return Err(TrafficError::BadDelay(format!(
                    "lognormal median must be positive, got {median_ns}"
                )));
            }
            if !(shape.is_finite() && shape > 0.0) {
                return Err(TrafficError::BadDelay(format!(
                    "lognormal shape must be positive, got {shape}"
                )));
            }
        }
        Ok(())
    }

    /// Draws a jitter in `[0, jitter_bound_ns)`, or `0` when the bound is zero.
    pub fn sample_jitter<R: Rng>(&self, rng: &mut R) -> u64 {
        let bound = self.jitter_bound_ns;
        if bound == 0 {
            return 0;
        }
        match self.distribution {
            JitterDistribution::Uniform => rng.random_range(0..bound),
            JitterDistribution::TruncatedLognormal { median_ns, shape } => {
                let std = Normal::standard();
                let mu = median_ns.ln();
                let upper = std.cdf(((bound as f64).ln() - mu) / shape);
                let u: f64 = rng.random::<f64>() * upper;
                if u <= 0.0 {
                    return 0;
                }
                let x = (mu + shape * std.inverse_cdf(u)).exp();
                if x.is_finite() {
                    (x.floor() as u64).min(bound - 1)
                } else {
                    0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Each packet is dropped independently with this probability.
    DropProbability(f64),
    /// Exactly this many packets are dropped, chosen uniformly.
    DropCount(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossEntry {
    pub flow: FlowKey,
    pub windows: WindowRange,
    #[serde(flatten)]
    pub mode: LossMode,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossSchedule {
    pub entries: Vec<LossEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimWindows {
    pub n: usize,
    pub window_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub flow: FlowKey,
    pub send_ns: u64,
    pub arrival_ns: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PacketTrace {
    pub records: Vec<PacketRecord>,
}

impl PacketTrace {
    pub fn delivered(&self) -> impl Iterator<Item = (&PacketRecord, u64)> {
        self.records
            .iter()
            .filter_map(|r| r.arrival_ns.map(|a| (r, a)))
    }

    /// Flow keys in order of first appearance.
    pub fn flow_keys(&self) -> Vec<FlowKey> {
        let mut seen = HashMap::new();
        let mut keys = Vec::new();
        for r in &self.records {
            if !seen.contains_key(&r.flow) {
                seen.insert(r.flow.clone(), ());
                keys.push(r.flow.clone());
            }
        }
        keys
    }

    /// Newline-delimited JSON, one record per line.
    pub fn write_ndjson<W: Write>(&self, mut out: W) -> Result<(), TrafficError> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r).map_err(std::io::Error::other)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_ndjson<R: BufRead>(input: R) -> Result<Self, TrafficError> {
        let mut records = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: PacketRecord = serde_json::from_str(&line).map_err(|e| {
                let full = e.to_string();
                let suffix = format!(" at line {} column {}", e.line(), e.column());
                TrafficError::Parse {
                    line: i + 1,
                    column: e.column(),
                    message: full.strip_suffix(&suffix).unwrap_or(&full).to_string(),
                }
            })?;
            records.push(record);
        }
        Ok(PacketTrace { records })
    }
}

/// Exact per-window tallies. `sent[f][k - 1]` and `lost[f][k - 1]` follow the
/// order of `flows`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub n: usize,
    pub flows: Vec<FlowTally>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowTally {
    pub flow: FlowKey,
    pub sent: Vec<u64>,
    pub lost: Vec<u64>,
}

impl GroundTruth {
    pub fn empty(n: usize) -> Self {
        GroundTruth {
            n,
            flows: Vec::new(),
        }
    }

    pub fn tally(&self, flow: &FlowKey) -> Option<&FlowTally> {
        self.flows.iter().find(|t| &t.flow == flow)
    }

    pub fn loss_count(&self, k: usize, flow: &FlowKey) -> u64 {
        self.tally(flow).map_or(0, |t| t.lost[k - 1])
    }

    pub fn sent_count(&self, k: usize, flow: &FlowKey) -> u64 {
        self.tally(flow).map_or(0, |t| t.sent[k - 1])
    }

    pub fn total_sent(&self) -> u64 {
        self.flows.iter().flat_map(|t| &t.sent).sum()
    }

    pub fn total_lost(&self) -> u64 {
        self.flows.iter().flat_map(|t| &t.lost).sum()
    }

    /// Rebuilds the tallies from a trace, attributing each packet to the
    /// upstream window of its send time.
    pub fn recount(trace: &PacketTrace, windows: SimWindows) -> Result<Self, TrafficError> {
        let mut index: HashMap<FlowKey, usize> = HashMap::new();
        let mut gt = GroundTruth::empty(windows.n);
        for r in &trace.records {
            let k = (r.send_ns / windows.window_ns) as usize + 1;
            if k > windows.n {
                return Err(TrafficError::WindowRange {
                    first: k,
                    last: k,
                    n: windows.n,
                });
            }
            let f = *index.entry(r.flow.clone()).or_insert_with(|| {
                gt.flows.push(FlowTally {
                    flow: r.flow.clone(),
                    sent: vec![0; windows.n],
                    lost: vec![0; windows.n],
                });
                gt.flows.len() - 1
            });
            gt.flows[f].sent[k - 1] += 1;
            if r.arrival_ns.is_none() {
                gt.flows[f].lost[k - 1] += 1;
            }
        }
        Ok(gt)
    }
}

/// Generates a deterministic trace and its ground truth.
pub fn generate_trace(
    flows: &[FlowSpec],
    delay: &DelayModel,
    losses: &LossSchedule,
    windows: SimWindows,
    seed: u64,
) -> Result<(PacketTrace, GroundTruth), TrafficError> {
    if windows.n == 0 || windows.window_ns == 0 {
        return Err(TrafficError::BadWindows);
    }
    delay.validate()?;

    let mut flow_index: HashMap<&FlowKey, usize> = HashMap::new();
    for (i, f) in flows.iter().enumerate() {
        if flow_index.insert(&f.key, i).is_some() {
            return Err(TrafficError::DuplicateFlow(f.key.clone()));
        }
        if f.packets_per_window == 0 {
            return Err(TrafficError::EmptyFlow(f.key.clone()));
        }
        f.active_windows.validate(windows.n)?;
    }

    let mut loss_at: HashMap<(usize, usize), LossMode> = HashMap::new();
    for entry in &losses.entries {
        let &fi = flow_index
            .get(&entry.flow)
            .ok_or_else(|| TrafficError::UnknownFlow(entry.flow.clone()))?;
        entry.windows.validate(windows.n)?;
        for k in entry.windows.first..=entry.windows.last {
            let spec = &flows[fi];
            let sent = if spec.active_windows.contains(k) {
                spec.packets_per_window
            } else {
                0
            };
            match entry.mode {
                LossMode::DropProbability(p) if !(0.0..=1.0).contains(&p) => {
                    return Err(TrafficError::BadProbability(p));
                }
                LossMode::DropCount(c) if c > sent => {
                    return Err(TrafficError::DropCountTooLarge {
                        flow: entry.flow.clone(),
                        window: k,
                        sent,
                        requested: c,
                    });
                }
                _ => {}
            }
            if loss_at.insert((fi, k), entry.mode).is_some() {
                return Err(TrafficError::OverlappingLoss {
                    flow: entry.flow.clone(),
                    window: k,
                });
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    let mut gt = GroundTruth {
        n: windows.n,
        flows: flows
            .iter()
            .map(|f| FlowTally {
                flow: f.key.clone(),
                sent: vec![0; windows.n],
                lost: vec![0; windows.n],
            })
            .collect(),
    };
    let t = windows.window_ns;

    for k in 1..=windows.n {
        let start = (k as u64 - 1) * t;
        for (fi, spec) in flows.iter().enumerate() {
            if !spec.active_windows.contains(k) {
                continue;
            }
            let count = spec.packets_per_window;
            let mut dropped = vec![false; count as usize];
            match loss_at.get(&(fi, k)) {
                Some(LossMode::DropProbability(p)) => {
                    for d in dropped.iter_mut() {
                        *d = rng.random_bool(*p);
                    }
                }
                Some(LossMode::DropCount(c)) => {
                    for i in sample(&mut rng, count as usize, *c as usize) {
                        dropped[i] = true;
                    }
                }
                None => {}
            }
            for (j, &is_dropped) in dropped.iter().enumerate() {
                let send_ns = start + (j as u64 * t) / count;
                let arrival_ns = if is_dropped {
                    None
                } else {
                    Some(
                        send_ns
                            + delay.d_min_ns
                            + delay.sample_jitter(&mut rng)
                            + delay.clock_offset_ns,
                    )
                };
                records.push(PacketRecord {
                    flow: spec.key.clone(),
                    send_ns,
                    arrival_ns,
                });
            }
            let lost = dropped.iter().filter(|&&d| d).count() as u64;
            gt.flows[fi].sent[k - 1] += count;
            gt.flows[fi].lost[k - 1] += lost;
        }
    }
    records.sort_by_key(|r| r.send_ns);
    Ok((PacketTrace { records }, gt))
}

/// True iff every delivered packet's one-way delay (clock offset removed) lies
/// in `[d_min, d_min + jitter_bound)`. With a zero jitter bound the delay must
/// equal `d_min` exactly.
pub fn delay_bounds_check(trace: &PacketTrace, delay: &DelayModel) -> bool {
    trace.delivered().all(|(r, arrival)| {
        let Some(delay_ns) = arrival
            .checked_sub(r.send_ns)
            .and_then(|d| d.checked_sub(delay.clock_offset_ns))
        else {
            return false;
        };
        let lo = delay.d_min_ns;
        if delay.jitter_bound_ns == 0 {
            delay_ns == lo
        } else {
            lo <= delay_ns && delay_ns < lo + delay.jitter_bound_ns
        }
    })
}

/// Histogram of one-way delays of delivered packets, as `(bin_start_ns, count)`.
pub fn delay_histogram(trace: &PacketTrace, bin_ns: u64) -> Vec<(u64, u64)> {
    let bin_ns = bin_ns.max(1);
    let mut bins: std::collections::BTreeMap<u64, u64> = Default::default();
    for (r, arrival) in trace.delivered() {
        let d = arrival.saturating_sub(r.send_ns);
        *bins.entry(d / bin_ns * bin_ns).or_default() += 1;
    }
    bins.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MS: u64 = 1_000_000;

    fn lognormal_delay() -> DelayModel {
        DelayModel {
            d_min_ns: 20 * MS,
            jitter_bound_ns: 20 * MS,
            clock_offset_ns: 0,
            distribution: JitterDistribution::TruncatedLognormal {
                median_ns: 5.0 * MS as f64,
                shape: 0.8,
            },
        }
    }

    fn flow(name: &str, ppw: u64, first: usize, last: usize) -> FlowSpec {
        FlowSpec {
            key: FlowKey::from(name),
            packets_per_window: ppw,
            active_windows: WindowRange::new(first, last),
        }
    }

    fn windows() -> SimWindows {
        SimWindows {
            n: 10,
            window_ns: 10 * MS,
        }
    }

    #[test]
    fn no_losses_means_zero_ground_truth_loss() {
        let flows = [flow("a", 20, 1, 10), flow("b", 5, 3, 7)];
        let (trace, gt) = generate_trace(
            &flows,
            &lognormal_delay(),
            &LossSchedule::default(),
            windows(),
            1,
        )
        .unwrap();
        assert_eq!(gt.total_lost(), 0);
        assert_eq!(gt.total_sent(), 200 + 25);
        assert_eq!(trace.records.len(), 225);
        assert!(delay_bounds_check(&trace, &lognormal_delay()));
        assert_eq!(gt.sent_count(2, &FlowKey::from("b")), 0);
        assert_eq!(gt.sent_count(3, &FlowKey::from("b")), 5);
    }

    #[test]
    fn drop_all_in_one_window() {
        let flows = [flow("f", 30, 1, 10)];
        let losses = LossSchedule {
            entries: vec![LossEntry {
                flow: FlowKey::from("f"),
                windows: WindowRange::new(5, 5),
                mode: LossMode::DropProbability(1.0),
            }],
        };
        let (trace, gt) =
            generate_trace(&flows, &lognormal_delay(), &losses, windows(), 2).unwrap();
        let f = FlowKey::from("f");
        assert_eq!(gt.loss_count(5, &f), gt.sent_count(5, &f));
        assert_eq!(gt.loss_count(5, &f), 30);
        assert_eq!(gt.total_lost(), 30);
        assert_eq!(GroundTruth::recount(&trace, windows()).unwrap(), gt);
    }

    #[test]
    fn exact_count_mode() {
        let flows = [flow("f", 30, 1, 10)];
        let losses = LossSchedule {
            entries: vec![LossEntry {
                flow: FlowKey::from("f"),
                windows: WindowRange::new(2, 4),
                mode: LossMode::DropCount(7),
            }],
        };
        let (trace, gt) =
            generate_trace(&flows, &lognormal_delay(), &losses, windows(), 3).unwrap();
        let f = FlowKey::from("f");
        for k in 2..=4 {
            assert_eq!(gt.loss_count(k, &f), 7);
        }
        assert_eq!(gt.total_lost(), 21);
        assert_eq!(GroundTruth::recount(&trace, windows()).unwrap(), gt);
    }

    #[test]
    fn bernoulli_loss_is_binomial_and_recountable() {
        let flows = [flow("f", 1000, 1, 10)];
        let losses = LossSchedule {
            entries: vec![LossEntry {
                flow: FlowKey::from("f"),
                windows: WindowRange::new(1, 10),
                mode: LossMode::DropProbability(0.3),
            }],
        };
        let (trace, gt) =
            generate_trace(&flows, &lognormal_delay(), &losses, windows(), 4).unwrap();
        let n = 10_000.0;
        let mean = 0.3 * n;
        let sd = (n * 0.3 * 0.7f64).sqrt();
        let lost = gt.total_lost() as f64;
        assert!((lost - mean).abs() <= 5.0 * sd, "lost {lost}");
        let dropped = trace
            .records
            .iter()
            .filter(|r| r.arrival_ns.is_none())
            .count();
        assert_eq!(dropped as u64, gt.total_lost());
        assert_eq!(GroundTruth::recount(&trace, windows()).unwrap(), gt);
    }

    #[test]
    fn same_seed_same_trace() {
        let flows = [flow("a", 40, 1, 10), flow("b", 13, 1, 10)];
        let losses = LossSchedule {
            entries: vec![LossEntry {
                flow: FlowKey::from("b"),
                windows: WindowRange::new(1, 10),
                mode: LossMode::DropProbability(0.1),
            }],
        };
        let run = |seed| {
            let (trace, _) =
                generate_trace(&flows, &lognormal_delay(), &losses, windows(), seed).unwrap();
            let mut buf = Vec::new();
            trace.write_ndjson(&mut buf).unwrap();
            buf
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn send_times_are_spread_and_ordered() {
        let flows = [flow("a", 4, 1, 2)];
        let (trace, _) = generate_trace(
            &flows,
            &lognormal_delay(),
            &LossSchedule::default(),
            windows(),
            5,
        )
        .unwrap();
        let sends: Vec<u64> = trace.records.iter().map(|r| r.send_ns).collect();
        assert_eq!(
            sends,
            vec![
                0, 2_500_000, 5_000_000, 7_500_000, 10_000_000, 12_500_000, 15_000_000, 17_500_000
            ]
        );
    }

    #[test]
    fn rejects_bad_schedules() {
        let flows = [flow("a", 4, 1, 10)];
        let unknown = LossSchedule {
            entries: vec![LossEntry {
                flow: FlowKey::from("zz"),
                windows: WindowRange::new(1, 1),
                mode: LossMode::DropCount(1),
            }],
        };
        assert!(matches!(
            generate_trace(&flows, &lognormal_delay(), &unknown, windows(), 1),
            Err(TrafficError::UnknownFlow(_))
        ));
        let outside = LossSchedule {
            entries: vec![LossEntry {
                flow: FlowKey::from("a"),
                windows: WindowRange::new(3, 11),
                mode: LossMode::DropCount(1),
            }],
        };
        assert!(matches!(
            generate_trace(&flows, &lognormal_delay(), &outside, windows(), 1),
            Err(TrafficError::WindowRange { .. })
        ));
        let too_many = LossSchedule {
            entries: vec![LossEntry {
                flow: FlowKey::from("a"),
                windows: WindowRange::new(1, 1),
                mode: LossMode::DropCount(5),
            }],
        };
        assert!(matches!(
            generate_trace(&flows, &lognormal_delay(), &too_many, windows(), 1),
            Err(TrafficError::DropCountTooLarge { .. })
        ));
        let bad_p = LossSchedule {
            entries: vec![LossEntry {
                flow: FlowKey::from("a"),
                windows: WindowRange::new(1, 1),
                mode: LossMode::DropProbability(1.5),
            }],
        };
        assert!(matches!(
            generate_trace(&flows, &lognormal_delay(), &bad_p, windows(), 1),
            Err(TrafficError::BadProbability(_))
        ));
    }

    #[test]
    fn bounds_check_excludes_upper_edge() {
        let delay = lognormal_delay();
        let mut trace = PacketTrace {
            records: vec![PacketRecord {
                flow: FlowKey::from("x"),
                send_ns: 100,
                arrival_ns: Some(100 + delay.d_min_ns + delay.jitter_bound_ns - 1),
            }],
        };
        assert!(delay_bounds_check(&trace, &delay));
        trace.records[0].arrival_ns = Some(100 + delay.d_min_ns + delay.jitter_bound_ns);
        assert!(!delay_bounds_check(&trace, &delay));
        trace.records[0].arrival_ns = Some(100 + delay.d_min_ns - 1);
        assert!(!delay_bounds_check(&trace, &delay));
    }

    #[test]
    fn zero_jitter_is_constant_delay() {
        let delay = DelayModel {
            d_min_ns: 3 * MS,
            jitter_bound_ns: 0,
            clock_offset_ns: 0,
            distribution: JitterDistribution::Uniform,
        };
        let (trace, _) = generate_trace(
            &[flow("a", 10, 1, 10)],
            &delay,
            &LossSchedule::default(),
            windows(),
            1,
        )
        .unwrap();
        assert!(trace.delivered().all(|(r, a)| a - r.send_ns == 3 * MS));
        assert!(delay_bounds_check(&trace, &delay));
    }

    #[test]
    fn ndjson_round_trip_and_parse_errors() {
        let (trace, _) = generate_trace(
            &[flow("a", 3, 1, 2)],
            &lognormal_delay(),
            &LossSchedule {
                entries: vec![LossEntry {
                    flow: FlowKey::from("a"),
                    windows: WindowRange::new(1, 1),
                    mode: LossMode::DropCount(1),
                }],
            },
            windows(),
            8,
        )
        .unwrap();
        let mut buf = Vec::new();
        trace.write_ndjson(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"arrival_ns\":null"));
        assert_eq!(PacketTrace::read_ndjson(&buf[..]).unwrap(), trace);

        let bad =
            b"{\"flow\":\"a\",\"send_ns\":1,\"arrival_ns\":2}\n{\"flow\":\"a\",\"send_ns\":\n";
        match PacketTrace::read_ndjson(&bad[..]) {
            Err(TrafficError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn fuzzed_traces_respect_delay_bounds() {
        for seed in 0..1000u64 {
            let delay = DelayModel {
                d_min_ns: 1 + seed % 7 * MS,
                jitter_bound_ns: 1 + (seed * 7919) % (25 * MS),
                clock_offset_ns: seed % 3,
                distribution: if seed % 2 == 0 {
                    JitterDistribution::Uniform
                } else {
                    JitterDistribution::TruncatedLognormal {
                        median_ns: 1.0 + (seed % 13) as f64 * MS as f64,
                        shape: 0.2 + (seed % 5) as f64 * 0.3,
                    }
                },
            };
            let (trace, _) = generate_trace(
                &[flow("a", 5, 1, 4)],
                &delay,
                &LossSchedule::default(),
                SimWindows {
                    n: 4,
                    window_ns: 10 * MS,
                },
                seed,
            )
            .unwrap();
            assert!(delay_bounds_check(&trace, &delay), "seed {seed}");
        }
    }
}
