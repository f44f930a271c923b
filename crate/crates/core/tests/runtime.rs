use std::collections::BTreeSet;

use imemplan::clustering::{build_conflict_matrix, Cluster};
use imemplan::placement::{ArrayGeometry, Assignment, PlacementPlan};
use imemplan::profiler::{ActivityRecord, Trace};
use imemplan::runtime::{apply_preplacement, classify_switch, dynamic_place, ArrayState, Mode, SwitchKind};
use imemplan::scenario::KernelSpec;
use imemplan::{Entity, Footprint};
use proptest::prelude::*;

fn spec(k: usize, size: u64, fp: (u32, u32)) -> KernelSpec {
    KernelSpec {
        id: format!("K{k}"),
        name: format!("K{k}"),
        binary_size: size,
        footprint: Footprint::new(fp.0, fp.1),
        compute_latency: 1,
        input_volume: 0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn state_invariants_hold_under_random_activity(
        kernels in prop::collection::vec((1u64..9, 1u32..3, 1u32..3), 4..7),
        profiled in prop::collection::vec((0usize..7, 0u32..2, 0u64..100, 1u64..30), 0..12),
        ops in prop::collection::vec((0usize..7, 0u32..3, 1u64..60, 0u64..40), 1..60),
        mode_ix in 0usize..4,
    ) {
        let mode = Mode::ALL[mode_ix];
        let specs: Vec<KernelSpec> = kernels.iter().enumerate().map(|(k, &(s, r, c))| spec(k, s * 512, (r, c))).collect();
        let n = specs.len();
        // Conflict matrix from a random trace; overlapping intervals of one entity are dropped.
        let mut records: Vec<ActivityRecord> = Vec::new();
        for &(k, inst, start, len) in &profiled {
            let kernel = format!("K{}", k % n);
            let clash = records.iter().any(|r| r.kernel == kernel && r.instance == inst && r.start < start + len && start < r.end);
            if !clash {
                records.push(ActivityRecord { kernel, instance: inst, start, end: start + len, subband: 0 });
            }
        }
        let matrix = build_conflict_matrix(&Trace::new(records).unwrap());

        let mut state = ArrayState::new(ArrayGeometry::new(3, 4), 4608, mode);
        // Under FPIP the first cluster is fixed from the start.
        let fixed: BTreeSet<usize> = if mode == Mode::FpipDp {
            let cluster = Cluster {
                id: 0,
                members: vec![Entity::new("K0", 0)],
                imem_used: specs[0].binary_size,
                footprint: specs[0].footprint,
            };
            let plan = PlacementPlan {
                geometry: ArrayGeometry::new(3, 4),
                assignments: vec![Assignment { cluster: 0, row: 0, col: 0 }],
            };
            let catalog = specs.iter().map(|s| (s.id.clone(), s.clone())).collect();
            apply_preplacement(&plan, &[cluster], &catalog, &mut state, mode).unwrap();
            [0].into()
        } else {
            BTreeSet::new()
        };

        let mut now = 0;
        for (k, inst, dur, gap) in ops {
            now += gap;
            let s = &specs[k % n];
            let entity = Entity::new(s.id.clone(), inst);
            let kind = classify_switch(&entity, &state).0;
            if mode == Mode::Baseline {
                prop_assert_ne!(kind, SwitchKind::Soft);
            }
            if kind == SwitchKind::Hard {
                match dynamic_place(&entity, s, &state, mode, now, &matrix) {
                    Ok(d) => {
                        state.apply(&d, &entity, s.binary_size, now);
                    }
                    Err(_) => continue,
                }
            }
            state.reserve(&entity, now + dur, now);
            prop_assert_eq!(state.check_invariants(), Vec::<String>::new());
            let still_fixed: BTreeSet<usize> = state.clusters.values().filter(|c| c.fixed).map(|c| c.id).collect();
            prop_assert_eq!(&still_fixed, &fixed);
            prop_assert_eq!(classify_switch(&entity, &state).0, SwitchKind::No);
        }
    }
}
