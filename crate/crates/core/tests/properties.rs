use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use sketchdecomp::constraints::{
    apply_b1, apply_b1_adjoint, apply_b2, apply_b2_adjoint, apply_b3_rowsum,
    apply_b3_rowsum_adjoint, recover_loss_sketches, Dims,
};
use sketchdecomp::report::estimate_flow_loss;
use sketchdecomp::solver::{project_spectral_ball, solve_second_difference};
use sketchdecomp::traffic::{
    delay_bounds_check, generate_trace, JitterDistribution, LossEntry, LossMode, SimWindows,
    WindowRange,
};
use sketchdecomp::windowing::{branch_stack, build_series};
use sketchdecomp::{
    CmSketch, DelayModel, FlowKey, FlowSpec, GroundTruth, LossSchedule, WindowingConfig,
};

fn stream() -> impl Strategy<Value = Vec<(u8, u64)>> {
    prop::collection::vec((0u8..40, 1u64..50), 0..80)
}

fn sketch_of(items: &[(u8, u64)], d: usize, w: usize, seed: u64) -> CmSketch {
    let mut s = CmSketch::new(d, w, seed).unwrap();
    for (k, c) in items {
        s.insert(&FlowKey::from(format!("f{k}")), *c);
    }
    s
}

fn dims() -> impl Strategy<Value = Dims> {
    (1usize..4, 2usize..5, 2usize..6)
        .prop_flat_map(|(m, d, w)| (m + 1..m + 5).prop_map(move |n| Dims::new(n, m, d, w).unwrap()))
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-10.0f64..10.0, rows * cols)
        .prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #[test]
    fn sketch_never_underestimates(items in stream(), d in 2usize..5, w in 2usize..12, seed: u64) {
        let s = sketch_of(&items, d, w, seed);
        let mut exact: HashMap<u8, u64> = HashMap::new();
        for (k, c) in &items {
            *exact.entry(*k).or_default() += c;
        }
        for k in 0u8..40 {
            let truth = exact.get(&k).copied().unwrap_or(0) as f64;
            let key = FlowKey::from(format!("f{k}"));
            prop_assert!(s.query(&key) >= truth, "key {} underestimated", key);
        }
        prop_assert_eq!(s.row_sum_residual(), 0.0);
    }

    #[test]
    fn sketch_is_linear_in_the_stream(a in stream(), b in stream(), seed: u64) {
        let joined: Vec<_> = a.iter().chain(&b).copied().collect();
        let whole = sketch_of(&joined, 3, 7, seed);
        let parts = sketch_of(&a, 3, 7, seed).add(&sketch_of(&b, 3, 7, seed)).unwrap();
        prop_assert_eq!(whole.counts(), parts.counts());
    }

    #[test]
    fn b1_and_b2_adjoints((dims, x, y, z) in dims().prop_flat_map(|dims| (
        Just(dims),
        matrix(dims.lambda(), dims.w),
        matrix(dims.eq_rows(), dims.w),
        matrix(dims.ineq_rows(), dims.w),
    ))) {
        let lhs = apply_b1(&dims, &x).unwrap().dot(&y);
        let rhs = x.dot(&apply_b1_adjoint(&dims, &y).unwrap());
        prop_assert!(rel(lhs, rhs) <= 1e-12, "{} vs {}", lhs, rhs);
        let lhs = apply_b2(&dims, &x).unwrap().dot(&z);
        let rhs = x.dot(&apply_b2_adjoint(&dims, &z).unwrap());
        prop_assert!(rel(lhs, rhs) <= 1e-12, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn b3_rowsum_adjoint((dims, x, y) in dims().prop_flat_map(|dims| (
        Just(dims),
        matrix(dims.lambda(), dims.w),
        prop::collection::vec(-10.0f64..10.0, dims.rowsum_len()),
    ))) {
        let y = DVector::from_vec(y);
        let lhs = apply_b3_rowsum(&dims, &x).unwrap().dot(&y);
        let rhs = x.dot(&apply_b3_rowsum_adjoint(&dims, &y).unwrap());
        prop_assert!(rel(lhs, rhs) <= 1e-12, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn spectral_projection_lands_in_ball_and_is_idempotent(x in matrix(6, 4)) {
        let p = project_spectral_ball(&x).unwrap();
        let top = p.singular_values().max();
        prop_assert!(top <= 1.0 + 1e-9, "spectral norm {}", top);
        let again = project_spectral_ball(&p).unwrap();
        prop_assert!((&again - &p).amax() <= 1e-9);
        // optimality: <X - P, Z - P> <= 0 for Z = 0 and Z = P scaled into the ball
        prop_assert!((&x - &p).dot(&(-&p)) <= 1e-8 * (1.0 + x.norm()));
    }

    #[test]
    fn second_difference_solve(b in prop::collection::vec(-100.0f64..100.0, 1..12)) {
        let mut z = b.clone();
        solve_second_difference(&mut z);
        for i in 0..b.len() {
            let left = if i > 0 { z[i - 1] } else { 0.0 };
            let right = if i + 1 < b.len() { z[i + 1] } else { 0.0 };
            prop_assert!((2.0 * z[i] - left - right - b[i]).abs() <= 1e-9 * (1.0 + b[i].abs()));
        }
    }
}

const MS: u64 = 1_000_000;

fn scenario(seed: u64, jitter_ms: u64, lossy: bool) -> (Vec<FlowSpec>, DelayModel, LossSchedule) {
    let flows: Vec<FlowSpec> = (0..5)
        .map(|i| FlowSpec {
            key: FlowKey::from(format!("flow-{i}")),
            packets_per_window: 20 + 15 * i,
            active_windows: WindowRange::new(1, 12),
        })
        .collect();
    let delay = DelayModel {
        d_min_ns: 15 * MS,
        jitter_bound_ns: jitter_ms * MS,
        clock_offset_ns: 0,
        distribution: JitterDistribution::TruncatedLognormal {
            median_ns: 4.0 * MS as f64,
            shape: 0.5 + (seed % 3) as f64 * 0.2,
        },
    };
    let entries = if lossy {
        vec![
            LossEntry {
                flow: FlowKey::from("flow-1"),
                windows: WindowRange::new(2, 7),
                mode: LossMode::DropProbability(0.3),
            },
            LossEntry {
                flow: FlowKey::from("flow-4"),
                windows: WindowRange::new(5, 9),
                mode: LossMode::DropCount(11),
            },
        ]
    } else {
        Vec::new()
    };
    (flows, delay, LossSchedule { entries })
}

fn windowing(seed: u64) -> WindowingConfig {
    WindowingConfig {
        n: 12,
        window_ns: 10 * MS,
        m: 3,
        downstream_offset_ns: 15 * MS,
        d: 3,
        w: 8,
        seed,
    }
}

#[test]
fn simulated_traces_respect_delay_bounds_and_recount() {
    for seed in 0..25 {
        let (flows, delay, losses) = scenario(seed, 20, true);
        let windows = SimWindows {
            n: 12,
            window_ns: 10 * MS,
        };
        let (trace, gt) = generate_trace(&flows, &delay, &losses, windows, seed).unwrap();
        assert!(delay_bounds_check(&trace, &delay), "seed {seed}");
        assert_eq!(
            GroundTruth::recount(&trace, windows).unwrap(),
            gt,
            "seed {seed}"
        );
    }
}

#[test]
fn upstream_mass_balance() {
    let (flows, delay, losses) = scenario(3, 20, true);
    let windows = SimWindows {
        n: 12,
        window_ns: 10 * MS,
    };
    let (trace, gt) = generate_trace(&flows, &delay, &losses, windows, 3).unwrap();
    let cfg = windowing(11);
    let series = build_series(&trace, &cfg).unwrap();
    for k in 1..=cfg.n {
        let sent: u64 = gt.flows.iter().map(|t| t.sent[k - 1]).sum();
        let total: f64 = series.upstream[k - 1].counts().iter().sum();
        assert_eq!(total, (cfg.d as u64 * sent) as f64, "window {k}");
    }
}

#[test]
fn true_branches_never_underestimate_loss() {
    for seed in 0..10 {
        let (flows, delay, losses) = scenario(seed, 20, true);
        let windows = SimWindows {
            n: 12,
            window_ns: 10 * MS,
        };
        let (trace, gt) = generate_trace(&flows, &delay, &losses, windows, seed).unwrap();
        let cfg = windowing(seed + 100);
        let series = build_series(&trace, &cfg).unwrap();
        let stack = branch_stack(&trace, &cfg).unwrap();
        let phi = recover_loss_sketches(&stack, &series.upstream).unwrap();
        let est = estimate_flow_loss(&phi, &series.upstream, &trace.flow_keys()).unwrap();
        for e in est {
            let truth = gt.loss_count(e.window, &e.flow) as f64;
            assert!(
                e.estimated_loss >= truth,
                "seed {seed}: {e:?} truth {truth}"
            );
        }
    }
}

#[test]
fn lossless_true_branches_give_zero_loss_sketches() {
    let (flows, delay, losses) = scenario(5, 20, false);
    let windows = SimWindows {
        n: 12,
        window_ns: 10 * MS,
    };
    let (trace, _) = generate_trace(&flows, &delay, &losses, windows, 5).unwrap();
    let cfg = windowing(8);
    let series = build_series(&trace, &cfg).unwrap();
    let stack = branch_stack(&trace, &cfg).unwrap();
    let phi = recover_loss_sketches(&stack, &series.upstream).unwrap();
    for k in 1..=phi.len() {
        assert!(phi.get(k).counts().iter().all(|&c| c == 0.0), "window {k}");
    }
}
