//! Live PE-array state and the dynamic placer.
//!
//! A resident cluster owns a rectangle of PEs. Every member kernel instance
//! holds one IMEM bank in every PE of that rectangle, and the rectangle
//! executes one member at a time through its active bank. Activating a
//! kernel is one of three switches:
//!
//! * NO: the instance is resident and its bank is already active.
//! * SOFT: the instance is resident in an inactive bank.
//! * HARD: the binary must be fetched off-chip, placed either by absorption
//!   into an existing cluster, in a new cluster on free PEs, or after
//!   evicting the least recently used idle cluster.
//!
//! Baseline keeps one kernel per PE (no absorption, so no soft switches).
//! PIP+DP and FPIP+DP start from a preplaced array; FPIP+DP never evicts the
//! preplaced clusters.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::clustering::{Cluster, ConflictMatrix};
use crate::error::{Error, Result};
use crate::placement::{ArrayGeometry, OccupancyGrid, PlacementPlan, Rect};
use crate::scenario::KernelSpec;
use crate::types::{Entity, Footprint, KernelId, Ns};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "baseline")]
    Baseline,
    #[serde(rename = "dp")]
    Dp,
    #[serde(rename = "pip-dp")]
    PipDp,
    #[serde(rename = "fpip-dp")]
    FpipDp,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Baseline, Mode::Dp, Mode::PipDp, Mode::FpipDp];

    /// Command-line spelling.
    pub fn name(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Dp => "dp",
            Mode::PipDp => "pip-dp",
            Mode::FpipDp => "fpip-dp",
        }
    }

    /// Report label.
    pub fn label(self) -> &'static str {
        match self {
            Mode::Baseline => "Baseline",
            Mode::Dp => "DP",
            Mode::PipDp => "PIP+DP",
            Mode::FpipDp => "FPIP+DP",
        }
    }

    pub fn preplaces(self) -> bool {
        matches!(self, Mode::PipDp | Mode::FpipDp)
    }

    pub fn absorbs(self) -> bool {
        self != Mode::Baseline
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == lower || m.label().to_ascii_lowercase() == lower)
            .ok_or_else(|| {
                let valid: Vec<_> = Mode::ALL.iter().map(|m| m.name()).collect();
                format!("unknown mode `{s}`; valid modes: {}, all", valid.join(", "))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SwitchKind {
    #[serde(rename = "NO")]
    No,
    #[serde(rename = "SOFT")]
    Soft,
    #[serde(rename = "HARD")]
    Hard,
}

impl fmt::Display for SwitchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SwitchKind::No => "NO",
            SwitchKind::Soft => "SOFT",
            SwitchKind::Hard => "HARD",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Bank {
    pub entity: Entity,
    pub bytes: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PeState {
    pub banks: Vec<Bank>,
    pub active_bank: Option<usize>,
    pub busy_until: Ns,
    pub fixed: bool,
}

impl PeState {
    pub fn occupied(&self) -> u64 {
        self.banks.iter().map(|b| b.bytes).sum()
    }

    pub fn bank_of(&self, entity: &Entity) -> Option<usize> {
        self.banks.iter().position(|b| &b.entity == entity)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ResidentCluster {
    pub id: usize,
    pub members: Vec<Entity>,
    pub rect: Rect,
    pub imem_used: u64,
    pub fixed: bool,
    pub preplaced: bool,
    pub last_used: Ns,
    pub busy_until: Ns,
}

impl ResidentCluster {
    pub fn is_busy(&self, now: Ns) -> bool {
        self.busy_until > now
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ArrayState {
    pub geometry: ArrayGeometry,
    pub imem_limit: u64,
    /// One kernel per PE (Baseline discipline).
    pub single_bank: bool,
    pub pes: Vec<PeState>,
    pub clusters: BTreeMap<usize, ResidentCluster>,
    #[serde(skip)]
    grid: OccupancyGrid,
    #[serde(skip)]
    location: BTreeMap<Entity, usize>,
    #[serde(skip)]
    next_id: usize,
}

impl ArrayState {
    pub fn new(geometry: ArrayGeometry, imem_limit: u64, mode: Mode) -> Self {
        Self {
            geometry,
            imem_limit,
            single_bank: !mode.absorbs(),
            pes: vec![PeState::default(); geometry.pe_count() as usize],
            clusters: BTreeMap::new(),
            grid: OccupancyGrid::new(geometry),
            location: BTreeMap::new(),
            next_id: 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn pe(&self, row: u32, col: u32) -> &PeState {
        &self.pes[(row * self.geometry.cols + col) as usize]
    }

    fn for_pes_in(&mut self, rect: Rect, mut f: impl FnMut(&mut PeState)) {
        let cols = self.geometry.cols;
        for (r, c) in rect.cells() {
            f(&mut self.pes[(r * cols + c) as usize]);
        }
    }

    pub fn cluster_of(&self, entity: &Entity) -> Option<&ResidentCluster> {
        self.location.get(entity).map(|id| &self.clusters[id])
    }

    pub fn cluster(&self, id: usize) -> Option<&ResidentCluster> {
        self.clusters.get(&id)
    }

    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    fn insert_cluster(&mut self, id: usize, rect: Rect, fixed: bool, preplaced: bool, now: Ns) {
        self.grid.fill(&rect, Some(id));
        self.for_pes_in(rect, |pe| pe.fixed = fixed);
        self.clusters.insert(
            id,
            ResidentCluster {
                id,
                members: Vec::new(),
                rect,
                imem_used: 0,
                fixed,
                preplaced,
                last_used: now,
                busy_until: 0,
            },
        );
        self.next_id = self.next_id.max(id + 1);
    }

    fn add_member(&mut self, id: usize, entity: &Entity, bytes: u64) {
        let cluster = self.clusters.get_mut(&id).expect("cluster is resident");
        cluster.members.push(entity.clone());
        cluster.imem_used += bytes;
        let rect = cluster.rect;
        let solo = self.single_bank;
        self.for_pes_in(rect, |pe| {
            pe.banks.push(Bank {
                entity: entity.clone(),
                bytes,
            });
            if pe.active_bank.is_none() || solo {
                pe.active_bank = Some(pe.banks.len() - 1);
            }
        });
        self.location.insert(entity.clone(), id);
    }

    fn evict(&mut self, id: usize) -> ResidentCluster {
        let cluster = self.clusters.remove(&id).expect("cluster is resident");
        self.grid.fill(&cluster.rect, None);
        self.for_pes_in(cluster.rect, |pe| *pe = PeState::default());
        for m in &cluster.members {
            self.location.remove(m);
        }
        cluster
    }

    /// Commits a placement decision for `entity`, returning its cluster id.
    pub fn apply(&mut self, decision: &PlacementDecision, entity: &Entity, bytes: u64, now: Ns) -> usize {
        let id = match decision.kind {
            PlaceKind::Absorb { cluster } => cluster,
            PlaceKind::NewCluster { rect } => {
                let id = self.next_id;
                self.insert_cluster(id, rect, false, false, now);
                id
            }
            PlaceKind::EvictThenPlace { ref evicted, rect } => {
                for &victim in evicted {
                    self.evict(victim);
                }
                let id = self.next_id;
                self.insert_cluster(id, rect, false, false, now);
                id
            }
        };
        self.add_member(id, entity, bytes);
        id
    }

    /// Makes `entity` the active bank of its rectangle and reserves the
    /// rectangle until `until`.
    pub fn reserve(&mut self, entity: &Entity, until: Ns, now: Ns) {
        let id = self.location[entity];
        let cluster = self.clusters.get_mut(&id).expect("cluster is resident");
        cluster.busy_until = cluster.busy_until.max(until);
        cluster.last_used = now;
        let rect = cluster.rect;
        self.for_pes_in(rect, |pe| {
            pe.active_bank = pe.bank_of(entity);
            pe.busy_until = pe.busy_until.max(until);
        });
    }

    /// Every violated state invariant, for tests and debugging.
    pub fn check_invariants(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, pe) in self.pes.iter().enumerate() {
            if pe.occupied() >= self.imem_limit && !pe.banks.is_empty() {
                out.push(format!("PE {i} IMEM occupancy {} not below {}", pe.occupied(), self.imem_limit));
            }
            if let Some(b) = pe.active_bank {
                if b >= pe.banks.len() {
                    out.push(format!("PE {i} active bank {b} is empty"));
                }
            }
            if self.single_bank && pe.banks.len() > 1 {
                out.push(format!("PE {i} holds {} kernels under single-bank mode", pe.banks.len()));
            }
        }
        for c in self.clusters.values() {
            for (r, col) in c.rect.cells() {
                if self.grid.owner(r, col) != Some(c.id) {
                    out.push(format!("cluster {} does not own PE ({r},{col})", c.id));
                }
                let pe = self.pe(r, col);
                for m in &c.members {
                    if pe.bank_of(m).is_none() {
                        out.push(format!("{m} missing from PE ({r},{col}) of cluster {}", c.id));
                    }
                }
            }
        }
        out
    }

    pub fn snapshot_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("state serializes");
        s.push('\n');
        s
    }
}

/// NO when the instance's bank is active in every PE of its rectangle, SOFT
/// when resident but inactive somewhere, HARD when not resident.
pub fn classify_switch(entity: &Entity, state: &ArrayState) -> (SwitchKind, Option<Rect>) {
    let Some(cluster) = state.cluster_of(entity) else {
        return (SwitchKind::Hard, None);
    };
    let active = cluster.rect.cells().all(|(r, c)| {
        let pe = state.pe(r, c);
        pe.active_bank.is_some() && pe.active_bank == pe.bank_of(entity)
    });
    let kind = if active { SwitchKind::No } else { SwitchKind::Soft };
    (kind, Some(cluster.rect))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum PlaceKind {
    Absorb { cluster: usize },
    NewCluster { rect: Rect },
    /// Evicts whole clusters, least recently used first.
    EvictThenPlace { evicted: Vec<usize>, rect: Rect },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PlacementDecision {
    pub kind: PlaceKind,
    /// Clusters inspected plus array positions probed.
    pub scan_cost_units: u64,
}

/// No legal placement right now. `retry_at` is when the earliest busy
/// eviction candidate frees up; `None` means no eviction can ever help.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Unplaceable {
    pub retry_at: Option<Ns>,
    pub scan_cost_units: u64,
}

fn evictable(c: &ResidentCluster, needed: Footprint, mode: Mode) -> bool {
    !(mode == Mode::FpipDp && c.fixed) && c.rect.size().covers(&needed)
}

/// Least recently used idle cluster whose rectangle can host `needed`.
/// Fixed clusters are protected only under FPIP+DP.
pub fn evict_candidate(state: &ArrayState, needed: Footprint, mode: Mode, now: Ns) -> Option<usize> {
    state
        .clusters
        .values()
        .filter(|c| !c.is_busy(now) && evictable(c, needed, mode))
        .min_by_key(|c| (c.last_used, c.id))
        .map(|c| c.id)
}

/// Chooses where a HARD-switched instance goes. Does not mutate `state`.
pub fn dynamic_place(
    entity: &Entity,
    spec: &KernelSpec,
    state: &ArrayState,
    mode: Mode,
    now: Ns,
    conflict: &ConflictMatrix,
) -> std::result::Result<PlacementDecision, Unplaceable> {
    let footprint = spec.footprint;
    let mut units = 0;

    if mode.absorbs() {
        for c in state.clusters.values() {
            units += 1;
            let fits = c.rect.size().covers(&footprint) && c.imem_used + spec.binary_size < state.imem_limit;
            if fits && c.members.iter().all(|m| !conflict.conflicts(m, entity)) {
                return Ok(PlacementDecision {
                    kind: PlaceKind::Absorb { cluster: c.id },
                    scan_cost_units: units,
                });
            }
        }
    }

    if spec.binary_size >= state.imem_limit {
        return Err(Unplaceable {
            retry_at: None,
            scan_cost_units: units,
        });
    }

    let (slot, probes) = state.grid.first_fit(footprint);
    units += probes;
    if let Some(rect) = slot {
        return Ok(PlacementDecision {
            kind: PlaceKind::NewCluster { rect },
            scan_cost_units: units,
        });
    }

    units += state.clusters.len() as u64;
    if let Some(victim) = evict_candidate(state, footprint, mode, now) {
        let mut grid = state.grid.clone();
        grid.fill(&state.clusters[&victim].rect, None);
        let (slot, probes) = grid.first_fit(footprint);
        units += probes;
        let rect = slot.expect("evicted rectangle hosts the footprint");
        return Ok(PlacementDecision {
            kind: PlaceKind::EvictThenPlace { evicted: vec![victim], rect },
            scan_cost_units: units,
        });
    }

    // No single idle cluster is large enough: free idle clusters in LRU
    // order until a hole opens up.
    let mut idle: Vec<&ResidentCluster> = state
        .clusters
        .values()
        .filter(|c| !c.is_busy(now) && !(mode == Mode::FpipDp && c.fixed))
        .collect();
    idle.sort_by_key(|c| (c.last_used, c.id));
    let mut grid = state.grid.clone();
    let mut evicted = Vec::new();
    for c in idle {
        grid.fill(&c.rect, None);
        evicted.push(c.id);
        let (slot, probes) = grid.first_fit(footprint);
        units += probes;
        if let Some(rect) = slot {
            return Ok(PlacementDecision {
                kind: PlaceKind::EvictThenPlace { evicted, rect },
                scan_cost_units: units,
            });
        }
    }

    // Waiting helps only if the footprint fits once every evictable
    // cluster, busy ones included, is gone.
    let mut cleared = state.grid.clone();
    let mut busy_until = None::<Ns>;
    for c in state.clusters.values().filter(|c| !(mode == Mode::FpipDp && c.fixed)) {
        cleared.fill(&c.rect, None);
        if c.is_busy(now) {
            busy_until = Some(busy_until.map_or(c.busy_until, |t| t.min(c.busy_until)));
        }
    }
    let retry_at = busy_until.filter(|_| cleared.first_fit(footprint).0.is_some());
    Err(Unplaceable {
        retry_at,
        scan_cost_units: units,
    })
}

/// Loads the planned clusters at their planned origins for the
/// preplacing modes. Other modes leave the array empty.
pub fn apply_preplacement(
    plan: &PlacementPlan,
    clusters: &[Cluster],
    catalog: &BTreeMap<KernelId, KernelSpec>,
    state: &mut ArrayState,
    mode: Mode,
) -> Result<()> {
    if !mode.preplaces() {
        return Ok(());
    }
    if !state.is_empty() {
        return Err(Error::PlanMismatch("array is not empty".into()));
    }
    if plan.geometry.rows > state.geometry.rows || plan.geometry.cols > state.geometry.cols {
        return Err(Error::PlanMismatch(format!(
            "plan is {}x{} but the array is {}x{}",
            plan.geometry.rows, plan.geometry.cols, state.geometry.rows, state.geometry.cols
        )));
    }
    let problems = plan.validate(clusters);
    if !problems.is_empty() {
        return Err(Error::PlanMismatch(problems.join("; ")));
    }
    let fixed = mode == Mode::FpipDp;
    for a in &plan.assignments {
        let cluster = clusters.iter().find(|c| c.id == a.cluster).expect("validated above");
        if cluster.imem_used >= state.imem_limit {
            return Err(Error::PlanMismatch(format!(
                "cluster {} uses {} B of IMEM, limit is {}",
                cluster.id, cluster.imem_used, state.imem_limit
            )));
        }
        let rect = Rect::new(a.row, a.col, cluster.footprint);
        state.insert_cluster(cluster.id, rect, fixed, true, 0);
        for m in &cluster.members {
            let spec = catalog.get(&m.kernel).ok_or_else(|| Error::UnknownKernel(m.kernel.clone()))?;
            state.add_member(cluster.id, m, spec.binary_size);
        }
    }
    Ok(())
}
