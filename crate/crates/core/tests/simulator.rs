mod common;

use common::*;
use imemplan::runtime::Mode;
use imemplan::simulator::{audit_causality, simulate, Planning, SimOutput, TimingConfig};
use imemplan::scenario::Scenario;
use proptest::prelude::*;

fn run(s: &Scenario, mode: Mode) -> SimOutput {
    let planning = Planning::from_scenario(s, 0).unwrap();
    simulate(s, mode, &planning, &TimingConfig::default(), 0).unwrap()
}

#[test]
fn cold_start_is_one_hard_switch() {
    let s = single_kernel(&[(0, "t")]);
    let r = run(&s, Mode::Dp).report;
    assert_eq!((r.hard_count, r.soft_count, r.no_count), (1, 0, 0));
    assert_eq!(r.offchip_fetch_bytes, 1024);
    assert_eq!(r.subbands_processed, 1);
}

#[test]
fn preplacement_removes_the_fetch() {
    let s = single_kernel(&[(0, "t")]);
    let out = run(&s, Mode::FpipDp);
    assert_eq!((out.report.hard_count, out.report.no_count), (0, 1));
    assert_eq!(out.report.offchip_fetch_bytes, 0);
    assert_eq!(out.preplaced, vec![0]);
    assert!(out.final_state.cluster(0).unwrap().fixed);
}

#[test]
fn second_sequential_subband_finds_kernel_active() {
    let s = single_kernel(&[(0, "t"), (100_000, "t")]);
    let out = run(&s, Mode::Dp);
    let kinds: Vec<String> = out.events.iter().map(|e| e.switch_kind.to_string()).collect();
    assert_eq!(kinds, ["HARD", "NO"]);
}

#[test]
fn single_kernel_timeline() {
    let s = single_kernel(&[(0, "t")]);
    let e = &run(&s, Mode::Dp).events[0];
    // lookup + one cluster probe... the empty array needs only the first-fit probe
    assert_eq!(e.sched_ns, e.sched_units * 5);
    assert_eq!(e.instr_start, e.sched_ns);
    assert_eq!(e.instr_ns, 1000 + 1024);
    // hop 2 * (1 + col 0) plus 64 bytes at 8 B/ns
    assert_eq!(e.data_ns, 10);
    assert_eq!(e.compute_end, e.compute_start + 100);
}

#[test]
fn plan_is_required_for_preplacing_modes() {
    let s = single_kernel(&[(0, "t")]);
    let mut planning = Planning::from_scenario(&s, 0).unwrap();
    planning.plan = None;
    assert!(simulate(&s, Mode::PipDp, &planning, &TimingConfig::default(), 0).is_err());
    assert!(simulate(&s, Mode::Dp, &planning, &TimingConfig::default(), 0).is_ok());
}

#[test]
fn admission_limit_serializes_subbands() {
    let s = scenario(
        vec![kernel("K", 1024, 1, 1, 100)],
        vec![chain("t", &["K"])],
        &[(0, "t"), (0, "t"), (0, "t")],
        1,
        hardware(2, 2),
    );
    let out = run(&s, Mode::Dp);
    for w in out.events.windows(2) {
        assert!(w[1].time >= w[0].compute_end);
    }
    assert_eq!(out.report.subbands_processed, 3);
}

#[test]
fn fixed_clusters_survive_pressure() {
    // Overlapping subbands spawn extra instances that were never profiled together.
    let s = scenario(
        vec![kernel("A", 1024, 2, 2, 50), kernel("B", 1024, 2, 2, 50), kernel("C", 1024, 2, 1, 50)],
        vec![chain("t", &["A", "B"]), chain("u", &["C"])],
        &[(0, "t"), (0, "t"), (10, "u"), (20, "t"), (20, "u")],
        8,
        hardware(2, 16),
    );
    let planning = Planning::from_scenario(&s, 0).unwrap();
    let out = simulate(&s, Mode::FpipDp, &planning, &TimingConfig::default(), 0).unwrap();
    for id in &out.preplaced {
        assert!(out.final_state.cluster(*id).is_some());
    }
    assert!(out.events.iter().all(|e| e.evicted_ids().iter().all(|id| !out.preplaced.contains(id))));
}

fn arb_scenario() -> impl Strategy<Value = Scenario> {
    let kernels = prop::collection::vec((1u64..5, 1u32..3, 1u32..3, 1u64..200), 2..5);
    (kernels, prop::collection::vec(0u64..2000, 1..12), 1u32..5, 0usize..4).prop_map(|(ks, times, max_c, branchy)| {
        let ids: Vec<String> = (0..ks.len()).map(|i| format!("K{i}")).collect();
        let kernels = ks
            .iter()
            .zip(&ids)
            .map(|(&(kb, r, c, lat), id)| kernel(id, kb * 512, r, c, lat))
            .collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let mut tree = chain("t", &refs);
        // Optionally give the root a probabilistic early exit.
        if branchy > 0 && refs.len() > 1 {
            let edges = tree["edges"].as_array_mut().unwrap();
            edges[0]["probability"] = serde_json::json!(0.6);
            edges.push(serde_json::json!({ "from": "n0", "outcome": "drop", "to": "DROP", "probability": 0.4 }));
        }
        let mut times = times;
        times.sort_unstable();
        let arrivals: Vec<(u64, &str)> = times.iter().map(|&t| (t, "t")).collect();
        scenario(kernels, vec![tree], &arrivals, max_c, hardware(4, 6))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn runs_are_deterministic_and_conserve_switches(s in arb_scenario(), mode_ix in 0usize..4) {
        let mode = Mode::ALL[mode_ix];
        let planning = Planning::from_scenario(&s, 3).unwrap();
        let t = TimingConfig::default();
        let a = simulate(&s, mode, &planning, &t, 3).unwrap();
        let b = simulate(&s, mode, &planning, &t, 3).unwrap();
        prop_assert_eq!(&a.report, &b.report);
        prop_assert_eq!(&a.events, &b.events);

        let r = &a.report;
        prop_assert_eq!(r.hard_count + r.soft_count + r.no_count, a.events.len() as u64);
        let fetched: u64 = a.events.iter().map(|e| e.fetch_bytes).sum();
        prop_assert_eq!(fetched, r.offchip_fetch_bytes);
        if r.hard_count == 0 {
            prop_assert_eq!(r.offchip_fetch_bytes, 0);
        }
        prop_assert!((r.avg_switching - (r.avg_instruction_load + r.avg_data_load)).abs() < 1e-9);
        prop_assert_eq!(r.subbands_processed, s.stream.arrivals.len() as u64);
        if mode == Mode::Baseline {
            prop_assert_eq!(r.soft_count, 0);
        }
        prop_assert!(audit_causality(&a.events).is_empty());
        prop_assert!(a.final_state.check_invariants().is_empty());
    }

    #[test]
    fn slower_fetches_never_shorten_the_makespan(s in arb_scenario(), mode_ix in 0usize..4, extra in 1u64..5000) {
        let mode = Mode::ALL[mode_ix];
        let planning = Planning::from_scenario(&s, 1).unwrap();
        let fast = TimingConfig::default();
        let slow = TimingConfig { o_hard_fixed: fast.o_hard_fixed + extra, ..fast.clone() };
        let a = simulate(&s, mode, &planning, &fast, 1).unwrap().report;
        let b = simulate(&s, mode, &planning, &slow, 1).unwrap().report;
        prop_assert!(b.makespan >= a.makespan, "{} < {}", b.makespan, a.makespan);
    }
}
