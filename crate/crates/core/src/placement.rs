//! Static placement of clusters onto the PE array.
//!
//! SRAM buffers sit on the left edge, one per row, and data flows to the
//! right. Clusters holding tree entry kernels and high-traffic kernels are
//! placed first, so first-fit (columns left to right, rows top to bottom)
//! puts them in the lowest columns.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clustering::Cluster;
use crate::error::{Error, Result};
use crate::profiler::Trace;
use crate::types::{Entity, Footprint, KernelId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub rows: u32,
    pub cols: u32,
}

impl ArrayGeometry {
    pub fn new(rows: u32, cols: u32) -> Self {
        Self { rows, cols }
    }

    pub fn pe_count(&self) -> u64 {
        u64::from(self.rows) * u64::from(self.cols)
    }
}

/// Axis-aligned PE rectangle; `row`/`col` is the top-left origin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub row: u32,
    pub col: u32,
    pub rows: u32,
    pub cols: u32,
}

impl Rect {
    pub fn new(row: u32, col: u32, size: Footprint) -> Self {
        Self {
            row,
            col,
            rows: size.rows,
            cols: size.cols,
        }
    }

    pub fn size(&self) -> Footprint {
        Footprint::new(self.rows, self.cols)
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.row < other.row + other.rows
            && other.row < self.row + self.rows
            && self.col < other.col + other.cols
            && other.col < self.col + self.cols
    }

    pub fn rows_overlap(&self, other: &Rect) -> bool {
        self.row < other.row + other.rows && other.row < self.row + self.rows
    }

    pub fn within(&self, geometry: &ArrayGeometry) -> bool {
        self.row + self.rows <= geometry.rows && self.col + self.cols <= geometry.cols
    }

    pub fn cells(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (self.row..self.row + self.rows).flat_map(move |r| (self.col..self.col + self.cols).map(move |c| (r, c)))
    }
}

/// Which cluster (if any) owns each PE.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OccupancyGrid {
    geometry: ArrayGeometry,
    cells: Vec<Option<usize>>,
}

impl OccupancyGrid {
    pub fn new(geometry: ArrayGeometry) -> Self {
        Self {
            geometry,
            cells: vec![None; geometry.pe_count() as usize],
        }
    }

    fn idx(&self, row: u32, col: u32) -> usize {
        (row * self.geometry.cols + col) as usize
    }

    pub fn owner(&self, row: u32, col: u32) -> Option<usize> {
        self.cells[self.idx(row, col)]
    }

    pub fn is_free(&self, rect: &Rect) -> bool {
        rect.within(&self.geometry) && rect.cells().all(|(r, c)| self.owner(r, c).is_none())
    }

    pub fn fill(&mut self, rect: &Rect, owner: Option<usize>) {
        for (r, c) in rect.cells() {
            let i = self.idx(r, c);
            self.cells[i] = owner;
        }
    }

    /// First free origin for `size`, scanning columns left to right and rows
    /// top to bottom within each column. Also returns the number of
    /// positions probed.
    pub fn first_fit(&self, size: Footprint) -> (Option<Rect>, u64) {
        let mut probes = 0;
        if size.rows > self.geometry.rows || size.cols > self.geometry.cols {
            return (None, probes);
        }
        for col in 0..=(self.geometry.cols - size.cols) {
            for row in 0..=(self.geometry.rows - size.rows) {
                probes += 1;
                let rect = Rect::new(row, col, size);
                if self.is_free(&rect) {
                    return (Some(rect), probes);
                }
            }
        }
        (None, probes)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub cluster: usize,
    pub row: u32,
    pub col: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementPlan {
    pub geometry: ArrayGeometry,
    pub assignments: Vec<Assignment>,
}

impl PlacementPlan {
    pub fn origin_of(&self, cluster: usize) -> Option<(u32, u32)> {
        self.assignments
            .iter()
            .find(|a| a.cluster == cluster)
            .map(|a| (a.row, a.col))
    }

    /// Checks bounds and pairwise overlap of the placed rectangles.
    pub fn validate(&self, clusters: &[Cluster]) -> Vec<String> {
        let mut out = Vec::new();
        let mut rects = Vec::new();
        for a in &self.assignments {
            let Some(c) = clusters.iter().find(|c| c.id == a.cluster) else {
                out.push(format!("assignment references unknown cluster {}", a.cluster));
                continue;
            };
            let rect = Rect::new(a.row, a.col, c.footprint);
            if !rect.within(&self.geometry) {
                out.push(format!("cluster {} extends outside the array", a.cluster));
            }
            rects.push((a.cluster, rect));
        }
        for (i, (ca, ra)) in rects.iter().enumerate() {
            for (cb, rb) in &rects[i + 1..] {
                if ra.intersects(rb) {
                    out.push(format!("clusters {ca} and {cb} overlap"));
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plan serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<PlacementPlan> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            field: String::new(),
            message: e.to_string(),
        })
    }
}

/// Activations per kernel over the trace.
pub fn access_frequency(trace: &Trace) -> BTreeMap<KernelId, u64> {
    let mut freq = BTreeMap::new();
    for r in &trace.records {
        *freq.entry(r.kernel.clone()).or_insert(0) += 1;
    }
    freq
}

/// Activations per kernel instance over the trace.
pub fn entity_frequency(trace: &Trace) -> BTreeMap<Entity, u64> {
    let mut freq = BTreeMap::new();
    for r in &trace.records {
        *freq.entry(r.entity()).or_insert(0) += 1;
    }
    freq
}

/// First-fit placement of clusters in entry-first, frequency-descending order.
pub fn place_clusters(
    clusters: &[Cluster],
    geometry: ArrayGeometry,
    freq: &BTreeMap<KernelId, u64>,
    entry_kernels: &BTreeSet<KernelId>,
) -> Result<PlacementPlan> {
    let mut order: Vec<&Cluster> = clusters.iter().collect();
    order.sort_by_key(|c| {
        let has_entry = c.members.iter().any(|m| entry_kernels.contains(&m.kernel));
        let max_freq = c
            .members
            .iter()
            .map(|m| freq.get(&m.kernel).copied().unwrap_or(0))
            .max()
            .unwrap_or(0);
        (Reverse(has_entry), Reverse(max_freq), c.id)
    });

    let mut grid = OccupancyGrid::new(geometry);
    let mut assignments = Vec::with_capacity(clusters.len());
    for c in order {
        let (slot, _) = grid.first_fit(c.footprint);
        let rect = slot.ok_or(Error::DoesNotFit(c.id))?;
        grid.fill(&rect, Some(c.id));
        assignments.push(Assignment {
            cluster: c.id,
            row: rect.row,
            col: rect.col,
        });
    }
    Ok(PlacementPlan {
        geometry,
        assignments,
    })
}

/// Frequency-weighted hop count from the SRAM edge:
/// sum over placed members of `freq(member) * (1 + origin_col)`.
pub fn dataflow_cost(plan: &PlacementPlan, clusters: &[Cluster], freq: &BTreeMap<Entity, u64>) -> u64 {
    plan.assignments
        .iter()
        .filter_map(|a| clusters.iter().find(|c| c.id == a.cluster).map(|c| (a, c)))
        .map(|(a, c)| {
            let weight: u64 = c.members.iter().map(|m| freq.get(m).copied().unwrap_or(0)).sum();
            weight * (1 + u64::from(a.col))
        })
        .sum()
}
