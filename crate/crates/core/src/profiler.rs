//! Contention-free replay of a scenario producing the kernel activity trace
//! that drives clustering.
//!
//! Each subband walks its tree with its own seeded outcome stream. A node
//! starts when its predecessor ends (or when the subband is admitted) and
//! runs for the kernel's compute latency. At most `max_concurrent` subbands
//! are in flight; later arrivals wait for the earliest completion.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::OutcomeStream;
use crate::scenario::Scenario;
use crate::types::{Entity, KernelId, Ns};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityRecord {
    #[serde(rename = "kernel_id")]
    pub kernel: KernelId,
    #[serde(rename = "instance_index")]
    pub instance: u32,
    #[serde(rename = "start_ns")]
    pub start: Ns,
    #[serde(rename = "end_ns")]
    pub end: Ns,
    #[serde(rename = "subband_id")]
    pub subband: u32,
}

impl ActivityRecord {
    pub fn entity(&self) -> Entity {
        Entity::new(self.kernel.clone(), self.instance)
    }

    /// End-exclusive overlap test.
    pub fn overlaps(&self, other: &ActivityRecord) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    pub records: Vec<ActivityRecord>,
    pub horizon: Ns,
}

impl Trace {
    /// Builds a trace, checking record invariants. The horizon is the latest end.
    pub fn new(records: Vec<ActivityRecord>) -> Result<Trace> {
        let trace = Trace {
            horizon: records.iter().map(|r| r.end).max().unwrap_or(0),
            records,
        };
        let violations = trace.validate();
        if violations.is_empty() {
            Ok(trace)
        } else {
            Err(Error::Invalid {
                what: "trace",
                violations,
            })
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, r) in self.records.iter().enumerate() {
            if r.start >= r.end {
                out.push(format!("record {i} ({}) has start {} >= end {}", r.entity(), r.start, r.end));
            }
            if r.end > self.horizon {
                out.push(format!("record {i} ends after the horizon"));
            }
        }
        for (entity, intervals) in self.intervals_by_entity() {
            for w in intervals.windows(2) {
                if w[1].0 < w[0].1 {
                    out.push(format!("{entity} has overlapping intervals at {}", w[1].0));
                }
            }
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Sorted `(start, end)` intervals per entity.
    pub fn intervals_by_entity(&self) -> BTreeMap<Entity, Vec<(Ns, Ns)>> {
        let mut map: BTreeMap<Entity, Vec<(Ns, Ns)>> = BTreeMap::new();
        for r in &self.records {
            map.entry(r.entity()).or_default().push((r.start, r.end));
        }
        for v in map.values_mut() {
            v.sort_unstable();
        }
        map
    }

    /// Maximum number of simultaneously active intervals of `kernel`; zero
    /// when the kernel never appears.
    pub fn max_concurrency(&self, kernel: &str) -> usize {
        sweep_max(
            self.records
                .iter()
                .filter(|r| r.kernel == kernel)
                .map(|r| (r.start, r.end)),
        )
    }

    /// Maximum number of simultaneously active entities of any kernel.
    pub fn peak_activity(&self) -> usize {
        sweep_max(self.records.iter().map(|r| (r.start, r.end)))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(file).map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn write_csv_to<W: Write>(&self, writer: W) -> std::result::Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        if self.records.is_empty() {
            w.write_record(["kernel_id", "instance_index", "start_ns", "end_ns", "subband_id"])?;
        }
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Trace> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::Reader::from_reader(file);
        let records = reader
            .deserialize()
            .collect::<std::result::Result<Vec<ActivityRecord>, _>>()
            .map_err(|e| Error::Csv {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        Trace::new(records)
    }
}

/// Sweep-line maximum over end-exclusive intervals.
fn sweep_max(intervals: impl Iterator<Item = (Ns, Ns)>) -> usize {
    let mut points: Vec<(Ns, i32)> = Vec::new();
    for (s, e) in intervals {
        points.push((s, 1));
        points.push((e, -1));
    }
    // Ends sort before starts at the same instant.
    points.sort_unstable();
    let mut active = 0i32;
    let mut best = 0i32;
    for (_, d) in points {
        active += d;
        best = best.max(active);
    }
    best as usize
}

/// Like [`Trace::max_concurrency`], but rejects kernels the scenario does not define.
pub fn max_concurrency(trace: &Trace, scenario: &Scenario, kernel: &str) -> Result<usize> {
    if scenario.kernel(kernel).is_none() {
        return Err(Error::UnknownKernel(kernel.to_string()));
    }
    Ok(trace.max_concurrency(kernel))
}

/// Subband admission times under the `max_concurrent` cap, given each
/// subband's total duration once admitted.
pub(crate) fn admission_times(arrivals: &[Ns], durations: &[Ns], max_concurrent: u32) -> Vec<Ns> {
    let cap = max_concurrent.max(1) as usize;
    let mut finishing: BinaryHeap<Reverse<Ns>> = BinaryHeap::new();
    let mut out = Vec::with_capacity(arrivals.len());
    for (&arrival, &duration) in arrivals.iter().zip(durations) {
        let start = if finishing.len() < cap {
            arrival
        } else {
            let Reverse(free) = finishing.pop().expect("heap is full");
            arrival.max(free)
        };
        finishing.push(Reverse(start + duration));
        out.push(start);
    }
    out
}

/// Replays the scenario with idealized timing. Records are ordered by start
/// time, then subband, then position along the subband's walk.
pub fn profile(scenario: &Scenario, seed: u64) -> Trace {
    struct Step<'a> {
        kernel: &'a str,
        offset: Ns,
        latency: Ns,
    }

    let mut walks: Vec<Vec<Step>> = Vec::with_capacity(scenario.stream.arrivals.len());
    for (subband, arrival) in scenario.stream.arrivals.iter().enumerate() {
        let mut steps = Vec::new();
        if let Some(tree) = scenario.tree(&arrival.tree) {
            let mut stream = OutcomeStream::for_subband(seed, subband as u32);
            let mut offset = 0;
            for node in tree.walk(&mut stream) {
                let latency = scenario.kernel(&node.kernel).map_or(0, |k| k.compute_latency);
                steps.push(Step {
                    kernel: &node.kernel,
                    offset,
                    latency,
                });
                offset += latency;
            }
        }
        walks.push(steps);
    }

    let arrivals: Vec<Ns> = scenario.stream.arrivals.iter().map(|a| a.time).collect();
    let durations: Vec<Ns> = walks
        .iter()
        .map(|w| w.last().map_or(0, |s| s.offset + s.latency))
        .collect();
    let admitted = admission_times(&arrivals, &durations, scenario.stream.max_concurrent);

    // (start, subband, step, kernel, end); zero-latency kernels leave no activity.
    let mut activations = Vec::new();
    for (subband, steps) in walks.iter().enumerate() {
        for (i, step) in steps.iter().enumerate() {
            if step.latency == 0 {
                continue;
            }
            let start = admitted[subband] + step.offset;
            activations.push((start, subband as u32, i, step.kernel, start + step.latency));
        }
    }
    activations.sort_unstable();

    // Lowest instance index whose previous interval has ended.
    let mut busy_until: BTreeMap<&str, Vec<Ns>> = BTreeMap::new();
    let mut records = Vec::with_capacity(activations.len());
    for (start, subband, _, kernel, end) in activations {
        let slots = busy_until.entry(kernel).or_default();
        let instance = match slots.iter().position(|&free| free <= start) {
            Some(i) => i,
            None => {
                slots.push(0);
                slots.len() - 1
            }
        };
        slots[instance] = end;
        records.push(ActivityRecord {
            kernel: kernel.to_string(),
            instance: instance as u32,
            start,
            end,
            subband,
        });
    }

    Trace {
        horizon: records.iter().map(|r| r.end).max().unwrap_or(0),
        records,
    }
}
