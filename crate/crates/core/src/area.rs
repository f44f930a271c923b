//! Array area model and the IMEM-capacity sweep.
//!
//! Total area is `n_pe * (a_logic + a_imem(size)) + rows * a_sram`, with
//! `a_imem` linear in capacity (`a_imem_per_kb` area units per KiB).

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{cluster_kernels, Cluster};
use crate::error::{Error, Result};
use crate::placement::{access_frequency, place_clusters, ArrayGeometry, PlacementPlan};
use crate::profiler::Trace;
use crate::scenario::Scenario;

pub const DEFAULT_IMEM_LIMIT: u64 = 4608;

fn default_imem_limit() -> u64 {
    DEFAULT_IMEM_LIMIT
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareConfig {
    /// Fixed logic area of one PE.
    pub a_logic: f64,
    /// IMEM area per KiB of capacity.
    pub a_imem_per_kb: f64,
    /// Area of one SRAM row buffer.
    pub a_sram: f64,
    /// PE rows; one SRAM buffer per row.
    pub rows: u32,
    /// PE columns of the simulated array.
    pub cols: u32,
    /// Per-PE IMEM capacity in bytes; occupancy must stay strictly below it.
    #[serde(default = "default_imem_limit")]
    pub imem_limit: u64,
}

impl HardwareConfig {
    pub fn geometry(&self) -> ArrayGeometry {
        ArrayGeometry::new(self.rows, self.cols)
    }

    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("a_logic", self.a_logic),
            ("a_imem_per_kb", self.a_imem_per_kb),
            ("a_sram", self.a_sram),
        ] {
            if v.is_nan() || v <= 0.0 {
                out.push(format!("hardware {name} must be positive"));
            }
        }
        if self.rows == 0 || self.cols == 0 {
            out.push("hardware rows and cols must be at least 1".into());
        }
        if self.imem_limit == 0 {
            out.push("hardware imem_limit must be positive".into());
        }
        out
    }
}

pub fn total_area(n_pe: u64, imem_size: u64, hw: &HardwareConfig) -> f64 {
    let kb = imem_size as f64 / 1024.0;
    n_pe as f64 * (hw.a_logic + hw.a_imem_per_kb * kb) + f64::from(hw.rows) * hw.a_sram
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "imem_size_bytes")]
    pub imem_size: u64,
    pub n_clusters: usize,
    pub n_pes: u64,
    pub total_area: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub rows: Vec<SweepRow>,
    /// IMEM size with the smallest total area; ties go to the smaller size.
    pub argmin: u64,
}

impl Sweep {
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
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Places `clusters` on `rows` PE rows, widening the array one column at a
/// time until first-fit succeeds.
pub fn place_growing_cols(
    clusters: &[Cluster],
    rows: u32,
    scenario: &Scenario,
    trace: &Trace,
) -> Result<PlacementPlan> {
    let freq = access_frequency(trace);
    let entries = scenario.entry_kernels();
    if let Some(tall) = clusters.iter().find(|c| c.footprint.rows > rows) {
        return Err(Error::DoesNotFit(tall.id));
    }
    let widest: u32 = clusters.iter().map(|c| c.footprint.cols).sum::<u32>().max(1);
    let mut cols = clusters.iter().map(|c| c.footprint.cols).max().unwrap_or(1);
    loop {
        match place_clusters(clusters, ArrayGeometry::new(rows, cols), &freq, &entries) {
            Ok(plan) => return Ok(plan),
            Err(Error::DoesNotFit(_)) if cols < widest => cols += 1,
            Err(e) => return Err(e),
        }
    }
}

/// Clusters and places the trace at every IMEM size and evaluates the array area.
pub fn sweep_imem(scenario: &Scenario, trace: &Trace, sizes: &[u64]) -> Result<Sweep> {
    if sizes.is_empty() {
        return Err(Error::Invalid {
            what: "sweep",
            violations: vec!["no IMEM sizes given".into()],
        });
    }
    let hw = &scenario.hardware;
    let catalog = scenario.catalog();
    let rows = sizes
        .par_iter()
        .map(|&size| {
            let clusters = cluster_kernels(trace, &catalog, size)?;
            let plan = place_growing_cols(&clusters, hw.rows, scenario, trace)?;
            let n_pes = plan.geometry.pe_count();
            Ok(SweepRow {
                imem_size: size,
                n_clusters: clusters.len(),
                n_pes,
                total_area: total_area(n_pes, size, hw),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let argmin = rows
        .iter()
        .min_by(|a, b| {
            a.total_area
                .total_cmp(&b.total_area)
                .then(a.imem_size.cmp(&b.imem_size))
        })
        .map(|r| r.imem_size)
        .expect("sizes is non-empty");
    Ok(Sweep { rows, argmin })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hw() -> HardwareConfig {
        HardwareConfig {
            a_logic: 2.0,
            a_imem_per_kb: 1.0,
            a_sram: 5.0,
            rows: 4,
            cols: 4,
            imem_limit: DEFAULT_IMEM_LIMIT,
        }
    }

    #[test]
    fn worked_area_example() {
        assert_eq!(total_area(16, 1024, &hw()), 68.0);
    }

    #[test]
    fn empty_array_is_sram_only() {
        assert_eq!(total_area(0, 4096, &hw()), 20.0);
    }

    #[test]
    fn area_is_linear_in_imem() {
        let h = hw();
        let delta = total_area(16, 4096, &h) - total_area(16, 2048, &h);
        assert_eq!(delta, 16.0 * h.a_imem_per_kb * 2.0);
    }

    #[test]
    fn config_validation() {
        let mut h = hw();
        assert!(h.validate().is_empty());
        h.a_sram = 0.0;
        h.rows = 0;
        assert_eq!(h.validate().len(), 2);
    }
}
