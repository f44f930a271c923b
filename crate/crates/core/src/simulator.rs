//! Deterministic discrete-event replay of the subband stream against the
//! runtime array model.
//!
//! For every kernel step of a subband the engine picks the lowest idle
//! instance index of the kernel, classifies the switch, and (for HARD)
//! asks the dynamic placer for a location. The step then runs through four
//! back-to-back phases: scheduling, instruction load, data load and
//! compute. Instruction load waits until the target rectangle is idle.
//! Events are processed strictly in `(time, sequence)` order.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::fs::{self, File};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{build_conflict_matrix, cluster_kernels, Cluster, ConflictMatrix};
use crate::error::{Error, Result};
use crate::placement::{access_frequency, place_clusters, PlacementPlan, Rect};
use crate::profiler::{admission_times, profile, Trace};
use crate::rng::OutcomeStream;
use crate::runtime::{apply_preplacement, classify_switch, dynamic_place, ArrayState, Mode, PlaceKind, SwitchKind};
use crate::scenario::{DecisionTree, Scenario};
use crate::types::{Entity, Ns};

/// Timing constants. Durations are integer ns, bandwidths bytes per ns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingConfig {
    pub o_hard_fixed: Ns,
    pub offchip_bandwidth: f64,
    pub o_soft: Ns,
    pub o_no: Ns,
    pub hop_latency: Ns,
    pub onchip_bandwidth: f64,
    pub congestion_factor: f64,
    /// ns per scheduler scan unit.
    pub sched_unit: Ns,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            o_hard_fixed: 1000,
            offchip_bandwidth: 1.0,
            o_soft: 10,
            o_no: 0,
            hop_latency: 2,
            onchip_bandwidth: 8.0,
            congestion_factor: 0.25,
            sched_unit: 5,
        }
    }
}

impl TimingConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if [self.offchip_bandwidth, self.onchip_bandwidth].iter().any(|b| b.is_nan() || *b <= 0.0) {
            out.push("bandwidths must be positive".into());
        }
        if self.congestion_factor.is_nan() || self.congestion_factor < 0.0 {
            out.push("congestion_factor must be non-negative".into());
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TimingConfig> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let timing: TimingConfig = serde_path_to_error::deserialize(de).map_err(|err| {
            let field = err.path().to_string();
            let inner = err.into_inner();
            Error::Parse {
                path: path.to_path_buf(),
                line: inner.line(),
                column: inner.column(),
                field,
                message: inner.to_string(),
            }
        })?;
        let violations = timing.validate();
        if violations.is_empty() {
            Ok(timing)
        } else {
            Err(Error::Invalid {
                what: "timing config",
                violations,
            })
        }
    }

    /// Off-chip load of `bytes` of binary.
    pub fn hard_load(&self, bytes: u64) -> Ns {
        self.o_hard_fixed + (bytes as f64 / self.offchip_bandwidth).ceil() as Ns
    }

    /// Data streaming time from the SRAM edge to a rectangle at `origin_col`
    /// while `sharing_flows` other transfers share its rows.
    pub fn data_load(&self, origin_col: u32, sharing_flows: usize, input_volume: u64) -> Ns {
        let hops = self.hop_latency as f64 * (1.0 + f64::from(origin_col));
        let congestion = 1.0 + self.congestion_factor * sharing_flows as f64;
        (hops * congestion + input_volume as f64 / self.onchip_bandwidth).ceil() as Ns
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SwitchCounts {
    pub hard: u64,
    pub soft: u64,
    pub no: u64,
}

impl SwitchCounts {
    pub fn total(&self) -> u64 {
        self.hard + self.soft + self.no
    }
}

/// Per-switch instruction-load overheads in ns.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SwitchOverheads {
    pub hard: f64,
    pub soft: f64,
    pub no: f64,
}

/// Mean instruction load time over all switches:
/// `(N_hard*O_hard + N_soft*O_soft + N_no*O_no) / (N_hard + N_soft + N_no)`.
pub fn avg_instruction_load(counts: SwitchCounts, overheads: SwitchOverheads) -> Result<f64> {
    let total = counts.total();
    if total == 0 {
        return Err(Error::AllZero);
    }
    let weighted = counts.hard as f64 * overheads.hard + counts.soft as f64 * overheads.soft + counts.no as f64 * overheads.no;
    Ok(weighted / total as f64)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub hard_count: u64,
    pub soft_count: u64,
    pub no_count: u64,
    pub avg_instruction_load: f64,
    pub avg_data_load: f64,
    pub avg_switching: f64,
    pub avg_scheduling: f64,
    pub avg_exec_per_subband: f64,
    pub makespan: Ns,
    pub subbands_processed: u64,
    pub offchip_fetch_bytes: u64,
}

impl MetricsReport {
    pub fn counts(&self) -> SwitchCounts {
        SwitchCounts {
            hard: self.hard_count,
            soft: self.soft_count,
            no: self.no_count,
        }
    }
}

/// One kernel activation in the per-event log. The first seven columns are
/// the summary view; the rest carry the phase timestamps for auditing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    /// When the scheduler handled the activation.
    pub time: Ns,
    pub subband: u32,
    pub kernel: String,
    pub switch_kind: SwitchKind,
    pub instr_ns: Ns,
    pub data_ns: Ns,
    pub sched_units: u64,
    pub instance: u32,
    pub step: u32,
    pub sched_ns: Ns,
    pub instr_start: Ns,
    pub data_start: Ns,
    pub compute_start: Ns,
    pub compute_end: Ns,
    pub fetch_bytes: u64,
    pub cluster: usize,
    pub origin_col: u32,
    /// Clusters evicted to make room, `;`-separated; empty if none.
    pub evicted: String,
}

impl EventRecord {
    pub fn evicted_ids(&self) -> Vec<usize> {
        self.evicted
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().expect("evicted ids are integers"))
            .collect()
    }
}

pub fn write_event_log<W: Write>(events: &[EventRecord], writer: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    for e in events {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_event_log(events: &[EventRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_event_log(events, file).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn read_event_log(path: impl AsRef<Path>) -> Result<Vec<EventRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

/// Checks phase ordering within each activation and step ordering within
/// each subband. Returns one message per violation.
pub fn audit_causality(events: &[EventRecord]) -> Vec<String> {
    let mut out = Vec::new();
    let mut by_subband: BTreeMap<u32, Vec<&EventRecord>> = BTreeMap::new();
    for e in events {
        let tag = format!("subband {} step {} ({})", e.subband, e.step, e.kernel);
        if e.instr_start < e.time + e.sched_ns {
            out.push(format!("{tag}: instruction load starts before scheduling ends"));
        }
        if e.data_start < e.instr_start + e.instr_ns {
            out.push(format!("{tag}: data load starts before instruction load completes"));
        }
        if e.compute_start < e.data_start + e.data_ns {
            out.push(format!("{tag}: compute starts before data load completes"));
        }
        if e.compute_end < e.compute_start {
            out.push(format!("{tag}: compute ends before it starts"));
        }
        by_subband.entry(e.subband).or_default().push(e);
    }
    for (subband, mut steps) in by_subband {
        steps.sort_by_key(|e| e.step);
        for w in steps.windows(2) {
            if w[1].step != w[0].step + 1 {
                out.push(format!("subband {subband}: step {} follows step {}", w[1].step, w[0].step));
            }
            if w[1].time < w[0].compute_end {
                out.push(format!("subband {subband}: step {} starts before step {} ends", w[1].step, w[0].step));
            }
        }
    }
    out
}

/// Offline planning artifacts the simulator consumes.
#[derive(Clone, Debug)]
pub struct Planning {
    pub conflict: ConflictMatrix,
    pub clusters: Vec<Cluster>,
    /// Needed only by the preplacing modes.
    pub plan: Option<PlacementPlan>,
}

impl Planning {
    /// Profiles the scenario, clusters at the hardware IMEM limit and places
    /// the clusters on the hardware array.
    pub fn from_scenario(scenario: &Scenario, seed: u64) -> Result<Planning> {
        let trace = profile(scenario, seed);
        Planning::from_trace(scenario, &trace)
    }

    /// A cluster set that does not fit the array leaves `plan` empty, which
    /// only the preplacing modes reject.
    pub fn from_trace(scenario: &Scenario, trace: &Trace) -> Result<Planning> {
        let clusters = cluster_kernels(trace, &scenario.catalog(), scenario.hardware.imem_limit)?;
        let plan = match place_clusters(
            &clusters,
            scenario.hardware.geometry(),
            &access_frequency(trace),
            &scenario.entry_kernels(),
        ) {
            Ok(plan) => Some(plan),
            Err(Error::DoesNotFit(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Planning {
            conflict: build_conflict_matrix(trace),
            clusters,
            plan,
        })
    }
}

#[derive(Clone, Debug)]
pub struct SimOutput {
    pub report: MetricsReport,
    pub events: Vec<EventRecord>,
    pub final_state: ArrayState,
    /// Ids of the clusters loaded before the first arrival.
    pub preplaced: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Payload {
    Arrival { subband: u32 },
    Ready { subband: u32, carried_units: u64 },
    Done { subband: u32, entity: Entity },
}

#[derive(Debug)]
struct Event {
    time: Ns,
    seq: u64,
    payload: Payload,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

struct Subband<'a> {
    tree: &'a DecisionTree,
    node: String,
    step: u32,
    stream: OutcomeStream,
}

struct Flow {
    start: Ns,
    end: Ns,
    rect: Rect,
}

struct Engine<'a> {
    scenario: &'a Scenario,
    mode: Mode,
    planning: &'a Planning,
    timing: &'a TimingConfig,
    state: ArrayState,
    queue: BinaryHeap<Event>,
    seq: u64,
    subbands: Vec<Option<Subband<'a>>>,
    waiting: VecDeque<u32>,
    in_flight: u32,
    active_instances: BTreeMap<String, Vec<bool>>,
    flows: Vec<Flow>,
    events: Vec<EventRecord>,
    counts: SwitchCounts,
    hard_load_total: u64,
    data_total: u64,
    sched_total: u64,
    fetch_bytes: u64,
    completed: u64,
    last_completion: Ns,
}

impl<'a> Engine<'a> {
    fn push(&mut self, time: Ns, payload: Payload) {
        self.queue.push(Event {
            time,
            seq: self.seq,
            payload,
        });
        self.seq += 1;
    }

    fn run(&mut self, seed: u64) -> Result<()> {
        for (i, a) in self.scenario.stream.arrivals.iter().enumerate() {
            let tree = self.scenario.tree(&a.tree).ok_or_else(|| Error::Invalid {
                what: "scenario",
                violations: vec![format!("arrival {i} references undefined tree `{}`", a.tree)],
            })?;
            self.subbands.push(Some(Subband {
                tree,
                node: tree.root.clone(),
                step: 0,
                stream: OutcomeStream::for_subband(seed, i as u32),
            }));
            self.push(a.time, Payload::Arrival { subband: i as u32 });
        }

        while let Some(event) = self.queue.pop() {
            let now = event.time;
            match event.payload {
                Payload::Arrival { subband } => {
                    if self.in_flight < self.scenario.stream.max_concurrent {
                        self.in_flight += 1;
                        self.push(now, Payload::Ready { subband, carried_units: 0 });
                    } else {
                        self.waiting.push_back(subband);
                    }
                }
                Payload::Ready { subband, carried_units } => self.step(now, subband, carried_units)?,
                Payload::Done { subband, entity } => self.finish_step(now, subband, &entity),
            }
        }
        Ok(())
    }

    fn claim_instance(&mut self, kernel: &str) -> u32 {
        let slots = self.active_instances.entry(kernel.to_string()).or_default();
        let i = match slots.iter().position(|busy| !busy) {
            Some(i) => i,
            None => {
                slots.push(false);
                slots.len() - 1
            }
        };
        slots[i] = true;
        i as u32
    }

    fn release_instance(&mut self, entity: &Entity) {
        if let Some(slot) = self
            .active_instances
            .get_mut(&entity.kernel)
            .and_then(|s| s.get_mut(entity.instance as usize))
        {
            *slot = false;
        }
    }

    fn step(&mut self, now: Ns, subband: u32, carried_units: u64) -> Result<()> {
        let sb = self.subbands[subband as usize].as_ref().expect("subband is in flight");
        let node = sb.tree.node(&sb.node).expect("validated tree");
        let step = sb.step;
        let spec = self
            .scenario
            .kernel(&node.kernel)
            .ok_or_else(|| Error::UnknownKernel(node.kernel.clone()))?;

        let entity = Entity::new(spec.id.clone(), self.claim_instance(&spec.id));
        // The residency lookup itself costs one unit.
        let mut units = carried_units + 1;
        let (kind, _) = classify_switch(&entity, &self.state);
        let mut evicted = String::new();
        let (instr_ns, fetch_bytes) = match kind {
            SwitchKind::No => (self.timing.o_no, 0),
            SwitchKind::Soft => (self.timing.o_soft, 0),
            SwitchKind::Hard => {
                match dynamic_place(&entity, spec, &self.state, self.mode, now, &self.planning.conflict) {
                    Ok(decision) => {
                        units += decision.scan_cost_units;
                        if let PlaceKind::EvictThenPlace { evicted: ids, .. } = &decision.kind {
                            evicted = ids.iter().map(usize::to_string).collect::<Vec<_>>().join(";");
                        }
                        self.state.apply(&decision, &entity, spec.binary_size, now);
                    }
                    Err(blocked) => {
                        self.release_instance(&entity);
                        let Some(retry_at) = blocked.retry_at else {
                            return Err(Error::Unplaceable {
                                entity,
                                time: now,
                                reason: "no cluster can be evicted to host the footprint".into(),
                            });
                        };
                        let carried = units + blocked.scan_cost_units;
                        self.push(retry_at, Payload::Ready { subband, carried_units: carried });
                        return Ok(());
                    }
                }
                let bytes = spec.binary_size * spec.footprint.area();
                (self.timing.hard_load(bytes), bytes)
            }
        };

        let cluster = self.state.cluster_of(&entity).expect("instance is resident").clone();
        let sched_ns = units * self.timing.sched_unit;
        let instr_start = (now + sched_ns).max(cluster.busy_until);
        let data_start = instr_start + instr_ns;

        self.flows.retain(|f| f.end > now);
        let sharing = self
            .flows
            .iter()
            .filter(|f| f.start <= data_start && data_start < f.end && f.rect.rows_overlap(&cluster.rect))
            .count();
        let data_ns = self.timing.data_load(cluster.rect.col, sharing, spec.input_volume);
        let compute_start = data_start + data_ns;
        let compute_end = compute_start + spec.compute_latency;
        if data_ns > 0 {
            self.flows.push(Flow {
                start: data_start,
                end: compute_start,
                rect: cluster.rect,
            });
        }
        self.state.reserve(&entity, compute_end, now);

        match kind {
            SwitchKind::Hard => {
                self.counts.hard += 1;
                self.hard_load_total += instr_ns;
            }
            SwitchKind::Soft => self.counts.soft += 1,
            SwitchKind::No => self.counts.no += 1,
        }
        self.data_total += data_ns;
        self.sched_total += sched_ns;
        self.fetch_bytes += fetch_bytes;
        self.events.push(EventRecord {
            time: now,
            subband,
            kernel: entity.kernel.clone(),
            switch_kind: kind,
            instr_ns,
            data_ns,
            sched_units: units,
            instance: entity.instance,
            step,
            sched_ns,
            instr_start,
            data_start,
            compute_start,
            compute_end,
            fetch_bytes,
            cluster: cluster.id,
            origin_col: cluster.rect.col,
            evicted,
        });
        self.push(compute_end, Payload::Done { subband, entity });
        Ok(())
    }

    fn finish_step(&mut self, now: Ns, subband: u32, entity: &Entity) {
        self.release_instance(entity);
        let sb = self.subbands[subband as usize].as_mut().expect("subband is in flight");
        let draw = sb.stream.draw();
        match sb.tree.next(&sb.node, draw) {
            Some(next) => {
                sb.node = next.id.clone();
                sb.step += 1;
                self.push(now, Payload::Ready { subband, carried_units: 0 });
            }
            None => {
                self.subbands[subband as usize] = None;
                self.completed += 1;
                self.last_completion = self.last_completion.max(now);
                self.in_flight -= 1;
                if let Some(next) = self.waiting.pop_front() {
                    self.in_flight += 1;
                    self.push(now, Payload::Ready { subband: next, carried_units: 0 });
                }
            }
        }
    }

    fn report(&self) -> MetricsReport {
        let total = self.counts.total();
        let per_switch = |sum: u64| if total == 0 { 0.0 } else { sum as f64 / total as f64 };
        let overheads = SwitchOverheads {
            hard: if self.counts.hard == 0 {
                0.0
            } else {
                self.hard_load_total as f64 / self.counts.hard as f64
            },
            soft: self.timing.o_soft as f64,
            no: self.timing.o_no as f64,
        };
        let avg_instruction_load = avg_instruction_load(self.counts, overheads).unwrap_or(0.0);
        let avg_data_load = per_switch(self.data_total);
        let first_arrival = self.scenario.stream.arrivals.first().map_or(0, |a| a.time);
        let makespan = if self.completed == 0 {
            0
        } else {
            self.last_completion - first_arrival
        };
        MetricsReport {
            hard_count: self.counts.hard,
            soft_count: self.counts.soft,
            no_count: self.counts.no,
            avg_instruction_load,
            avg_data_load,
            avg_switching: avg_instruction_load + avg_data_load,
            avg_scheduling: per_switch(self.sched_total),
            avg_exec_per_subband: if self.completed == 0 {
                0.0
            } else {
                makespan as f64 / self.completed as f64
            },
            makespan,
            subbands_processed: self.completed,
            offchip_fetch_bytes: self.fetch_bytes,
        }
    }
}

/// Runs one simulation from a cold (or preplaced) array.
pub fn simulate(
    scenario: &Scenario,
    mode: Mode,
    planning: &Planning,
    timing: &TimingConfig,
    seed: u64,
) -> Result<SimOutput> {
    let hw = &scenario.hardware;
    let mut state = ArrayState::new(hw.geometry(), hw.imem_limit, mode);
    if mode.preplaces() {
        let plan = planning
            .plan
            .as_ref()
            .ok_or_else(|| {
                Error::PlanMismatch(format!(
                    "mode {} needs a placement plan and the clusters do not fit the {}x{} array",
                    mode.label(),
                    hw.rows,
                    hw.cols
                ))
            })?;
        apply_preplacement(plan, &planning.clusters, &scenario.catalog(), &mut state, mode)?;
    }
    let preplaced = state.clusters.keys().copied().collect();

    let mut engine = Engine {
        scenario,
        mode,
        planning,
        timing,
        state,
        queue: BinaryHeap::new(),
        seq: 0,
        subbands: Vec::with_capacity(scenario.stream.arrivals.len()),
        waiting: VecDeque::new(),
        in_flight: 0,
        active_instances: BTreeMap::new(),
        flows: Vec::new(),
        events: Vec::new(),
        counts: SwitchCounts::default(),
        hard_load_total: 0,
        data_total: 0,
        sched_total: 0,
        fetch_bytes: 0,
        completed: 0,
        last_completion: 0,
    };
    engine.run(seed)?;
    let report = engine.report();
    Ok(SimOutput {
        report,
        events: engine.events,
        final_state: engine.state,
        preplaced,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeRow {
    pub mode: Mode,
    #[serde(flatten)]
    pub report: MetricsReport,
    pub speedup_vs_baseline: Option<f64>,
    pub speedup_vs_dp: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ModeRow>,
}

impl Comparison {
    pub fn from_reports(reports: Vec<(Mode, MetricsReport)>) -> Comparison {
        let exec_of = |m: Mode| {
            reports
                .iter()
                .find(|(mode, _)| *mode == m)
                .map(|(_, r)| r.avg_exec_per_subband)
        };
        let ratio = |base: Option<f64>, x: f64| base.filter(|_| x > 0.0).map(|b| b / x);
        let baseline = exec_of(Mode::Baseline);
        let dp = exec_of(Mode::Dp);
        let rows = reports
            .into_iter()
            .map(|(mode, report)| {
                let exec = report.avg_exec_per_subband;
                ModeRow {
                    mode,
                    speedup_vs_baseline: ratio(baseline, exec),
                    speedup_vs_dp: if mode == Mode::Baseline { None } else { ratio(dp, exec) },
                    report,
                }
            })
            .collect();
        Comparison { rows }
    }

    pub fn row(&self, mode: Mode) -> Option<&ModeRow> {
        self.rows.iter().find(|r| r.mode == mode)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> std::result::Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "mode",
            "hard_count",
            "soft_count",
            "no_count",
            "avg_instruction_load_ns",
            "avg_data_load_ns",
            "avg_switching_ns",
            "avg_scheduling_ns",
            "avg_exec_per_subband_ns",
            "makespan_ns",
            "subbands_processed",
            "offchip_fetch_bytes",
            "speedup_vs_baseline",
            "speedup_vs_dp",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "N/A".into());
        for row in &self.rows {
            let r = &row.report;
            w.write_record([
                row.mode.label().to_string(),
                r.hard_count.to_string(),
                r.soft_count.to_string(),
                r.no_count.to_string(),
                format!("{:.4}", r.avg_instruction_load),
                format!("{:.4}", r.avg_data_load),
                format!("{:.4}", r.avg_switching),
                format!("{:.4}", r.avg_scheduling),
                format!("{:.4}", r.avg_exec_per_subband),
                r.makespan.to_string(),
                r.subbands_processed.to_string(),
                r.offchip_fetch_bytes.to_string(),
                opt(row.speedup_vs_baseline),
                opt(row.speedup_vs_dp),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("comparison serializes");
        s.push('\n');
        s
    }
}

/// Simulates `modes` with a shared seed, in parallel, keeping the input order.
pub fn run_modes(
    scenario: &Scenario,
    modes: &[Mode],
    planning: &Planning,
    timing: &TimingConfig,
    seed: u64,
) -> Result<Vec<(Mode, SimOutput)>> {
    modes
        .par_iter()
        .map(|&m| simulate(scenario, m, planning, timing, seed).map(|out| (m, out)))
        .collect()
}

/// All four strategies side by side, with speedups relative to Baseline and DP.
pub fn compare_modes(
    scenario: &Scenario,
    planning: &Planning,
    timing: &TimingConfig,
    seed: u64,
) -> Result<(Comparison, Vec<(Mode, SimOutput)>)> {
    let outputs = run_modes(scenario, &Mode::ALL, planning, timing, seed)?;
    let comparison = Comparison::from_reports(outputs.iter().map(|(m, o)| (*m, o.report.clone())).collect());
    Ok((comparison, outputs))
}

/// Admission times a contention-free run would give, exposed for tests.
#[doc(hidden)]
pub fn ideal_admissions(scenario: &Scenario, durations: &[Ns]) -> Vec<Ns> {
    let arrivals: Vec<Ns> = scenario.stream.arrivals.iter().map(|a| a.time).collect();
    admission_times(&arrivals, durations, scenario.stream.max_concurrent)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instruction_load_examples() {
        let c = |hard, soft, no| SwitchCounts { hard, soft, no };
        let o = |hard, soft, no| SwitchOverheads { hard, soft, no };
        assert_eq!(avg_instruction_load(c(2, 3, 5), o(100.0, 10.0, 0.0)).unwrap(), 23.0);
        assert_eq!(avg_instruction_load(c(0, 0, 5), o(7.0, 3.0, 0.0)).unwrap(), 0.0);
        assert_eq!(avg_instruction_load(c(1, 1, 0), o(50.0, 10.0, 0.0)).unwrap(), 30.0);
        assert!(matches!(avg_instruction_load(c(0, 0, 0), o(1.0, 1.0, 1.0)), Err(Error::AllZero)));
    }

    #[test]
    fn timing_formulas() {
        let t = TimingConfig::default();
        assert_eq!(t.hard_load(1024), 2024);
        // 2 * 1 * (1 + 0) + 64 / 8
        assert_eq!(t.data_load(0, 0, 64), 10);
        // 2 * 3 * 1.5 + 0
        assert_eq!(t.data_load(2, 2, 0), 9);
    }

    #[test]
    fn events_pop_in_time_then_sequence_order() {
        let mut heap = BinaryHeap::new();
        for (time, seq) in [(5, 2), (1, 3), (5, 1), (0, 9)] {
            heap.push(Event {
                time,
                seq,
                payload: Payload::Arrival { subband: 0 },
            });
        }
        let order: Vec<_> = std::iter::from_fn(|| heap.pop().map(|e| (e.time, e.seq))).collect();
        assert_eq!(order, vec![(0, 9), (1, 3), (5, 1), (5, 2)]);
    }
}
