//! Temporal-independence clustering of kernel instances.
//!
//! Two entities (kernel instances) are independent when none of their trace
//! intervals overlap. Independent entities may share the IMEM banks of one
//! PE sub-array as long as their summed per-PE binary sizes stay strictly
//! below the IMEM limit.
//!
//! [`cluster_kernels`] runs in two phases. The first grows clusters
//! ignoring capacity: the most independent remaining entity seeds a
//! cluster, which then absorbs, in trace order, every remaining entity that
//! is independent of all current members. The second phase clips each
//! over-budget cluster by moving tail members into spill clusters, which are
//! appended and clipped in turn.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiler::Trace;
use crate::scenario::KernelSpec;
use crate::types::{Entity, Footprint, KernelId, Ns};

/// Symmetric overlap relation between the entities of a trace.
///
/// Entities are kept in trace order: by first start time, ties broken by
/// `(kernel, instance)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConflictMatrix {
    entities: Vec<Entity>,
    index: BTreeMap<Entity, usize>,
    overlap: Vec<Vec<bool>>,
}

impl ConflictMatrix {
    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn index_of(&self, entity: &Entity) -> Option<usize> {
        self.index.get(entity).copied()
    }

    pub fn contains(&self, entity: &Entity) -> bool {
        self.index.contains_key(entity)
    }

    /// Overlap by matrix position.
    pub fn overlaps(&self, a: usize, b: usize) -> bool {
        self.overlap[a][b]
    }

    /// Overlap by entity. Entities missing from the matrix conflict with
    /// everything, themselves included.
    pub fn conflicts(&self, a: &Entity, b: &Entity) -> bool {
        match (self.index_of(a), self.index_of(b)) {
            (Some(i), Some(j)) => self.overlap[i][j],
            _ => true,
        }
    }
}

fn interval_sets_overlap(a: &[(Ns, Ns)], b: &[(Ns, Ns)]) -> bool {
    // Both inputs are sorted and internally disjoint.
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        let (s1, e1) = a[i];
        let (s2, e2) = b[j];
        if s1 < e2 && s2 < e1 {
            return true;
        }
        if e1 <= e2 {
            i += 1;
        } else {
            j += 1;
        }
    }
    false
}

pub fn build_conflict_matrix(trace: &Trace) -> ConflictMatrix {
    let by_entity = trace.intervals_by_entity();
    let mut order: Vec<(Ns, Entity)> = by_entity
        .iter()
        .map(|(e, iv)| (iv[0].0, e.clone()))
        .collect();
    order.sort_unstable();

    let entities: Vec<Entity> = order.into_iter().map(|(_, e)| e).collect();
    let intervals: Vec<&[(Ns, Ns)]> = entities.iter().map(|e| by_entity[e].as_slice()).collect();
    let n = entities.len();
    let mut overlap = vec![vec![false; n]; n];
    for a in 0..n {
        for b in (a + 1)..n {
            let o = interval_sets_overlap(intervals[a], intervals[b]);
            overlap[a][b] = o;
            overlap[b][a] = o;
        }
    }
    let index = entities.iter().cloned().enumerate().map(|(i, e)| (e, i)).collect();
    ConflictMatrix {
        entities,
        index,
        overlap,
    }
}

/// Number of other entities `entity` never overlaps with.
pub fn independence_score(entity: &Entity, matrix: &ConflictMatrix) -> Result<usize> {
    let i = matrix
        .index_of(entity)
        .ok_or_else(|| Error::UnknownEntity(entity.clone()))?;
    Ok((0..matrix.len()).filter(|&j| j != i && !matrix.overlaps(i, j)).count())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: usize,
    pub members: Vec<Entity>,
    pub imem_used: u64,
    pub footprint: Footprint,
}

impl Cluster {
    fn from_members(id: usize, members: Vec<Entity>, catalog: &BTreeMap<KernelId, KernelSpec>) -> Cluster {
        let mut imem_used = 0;
        let mut footprint = Footprint::new(1, 1);
        for m in &members {
            let spec = &catalog[&m.kernel];
            imem_used += spec.binary_size;
            footprint = footprint.union(&spec.footprint);
        }
        Cluster {
            id,
            members,
            imem_used,
            footprint,
        }
    }

    pub fn contains_kernel(&self, kernel: &str) -> bool {
        self.members.iter().any(|m| m.kernel == kernel)
    }
}

/// Serialized cluster plan.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterPlan {
    pub imem_limit: u64,
    pub clusters: Vec<Cluster>,
}

impl ClusterPlan {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("cluster plan serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ClusterPlan> {
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

fn check_sizes(
    matrix: &ConflictMatrix,
    catalog: &BTreeMap<KernelId, KernelSpec>,
    imem_limit: u64,
) -> Result<()> {
    for e in matrix.entities() {
        let spec = catalog
            .get(&e.kernel)
            .ok_or_else(|| Error::UnknownKernel(e.kernel.clone()))?;
        if spec.binary_size >= imem_limit {
            return Err(Error::OversizedKernel {
                kernel: spec.id.clone(),
                binary_size: spec.binary_size,
                imem_limit,
            });
        }
    }
    Ok(())
}

/// Groups trace entities into conflict-free clusters whose IMEM use stays
/// strictly below `imem_limit`. Cluster ids are positions in the result.
pub fn cluster_kernels(
    trace: &Trace,
    catalog: &BTreeMap<KernelId, KernelSpec>,
    imem_limit: u64,
) -> Result<Vec<Cluster>> {
    let matrix = build_conflict_matrix(trace);
    cluster_with_matrix(&matrix, catalog, imem_limit)
}

pub fn cluster_with_matrix(
    matrix: &ConflictMatrix,
    catalog: &BTreeMap<KernelId, KernelSpec>,
    imem_limit: u64,
) -> Result<Vec<Cluster>> {
    if matrix.is_empty() {
        return Err(Error::Invalid {
            what: "trace",
            violations: vec!["trace has no records to cluster".into()],
        });
    }
    check_sizes(matrix, catalog, imem_limit)?;

    // Phase 1: unbounded IMEM.
    let mut remaining: Vec<usize> = (0..matrix.len()).collect();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    while !remaining.is_empty() {
        let score = |i: usize| remaining.iter().filter(|&&j| j != i && !matrix.overlaps(i, j)).count();
        // Highest score wins; ties go to the lexicographically smallest entity.
        let seed = *remaining
            .iter()
            .max_by(|&&a, &&b| {
                score(a)
                    .cmp(&score(b))
                    .then_with(|| matrix.entities[b].cmp(&matrix.entities[a]))
            })
            .expect("remaining is non-empty");

        let mut members = vec![seed];
        for &candidate in &remaining {
            if candidate != seed && members.iter().all(|&m| !matrix.overlaps(m, candidate)) {
                members.push(candidate);
            }
        }
        remaining.retain(|i| !members.contains(i));
        groups.push(members);
    }

    // Phase 2: clip to the IMEM limit, tail first.
    let size = |i: usize| catalog[&matrix.entities[i].kernel].binary_size;
    let mut k = 0;
    while k < groups.len() {
        let mut used: u64 = groups[k].iter().map(|&i| size(i)).sum();
        let mut spill = Vec::new();
        while used >= imem_limit {
            let tail = groups[k].pop().expect("cluster over the limit is non-empty");
            used -= size(tail);
            spill.push(tail);
        }
        if !spill.is_empty() {
            groups.push(spill);
        }
        k += 1;
    }

    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(id, g)| {
            let members = g.into_iter().map(|i| matrix.entities[i].clone()).collect();
            Cluster::from_members(id, members, catalog)
        })
        .collect())
}

/// Default entity cap for [`exact_min_clusters`].
pub const EXACT_MAX_ENTITIES: usize = 10;

/// Minimum feasible cluster count by branch and bound over set partitions,
/// under the same conflict and capacity rules as [`cluster_kernels`].
pub fn exact_min_clusters(
    trace: &Trace,
    catalog: &BTreeMap<KernelId, KernelSpec>,
    imem_limit: u64,
    max_entities: usize,
) -> Result<usize> {
    let matrix = build_conflict_matrix(trace);
    if matrix.len() > max_entities {
        return Err(Error::TooLarge {
            entities: matrix.len(),
            max: max_entities,
        });
    }
    check_sizes(&matrix, catalog, imem_limit)?;
    if matrix.is_empty() {
        return Ok(0);
    }

    let sizes: Vec<u64> = matrix
        .entities()
        .iter()
        .map(|e| catalog[&e.kernel].binary_size)
        .collect();
    // Most constrained entities first tightens the bound early.
    let mut order: Vec<usize> = (0..matrix.len()).collect();
    order.sort_by_key(|&i| {
        let degree = (0..matrix.len()).filter(|&j| matrix.overlaps(i, j)).count();
        (std::cmp::Reverse(degree), std::cmp::Reverse(sizes[i]), i)
    });

    struct Search<'a> {
        matrix: &'a ConflictMatrix,
        sizes: &'a [u64],
        order: &'a [usize],
        limit: u64,
        bins: Vec<(Vec<usize>, u64)>,
        best: usize,
    }

    impl Search<'_> {
        fn run(&mut self, depth: usize) {
            if self.bins.len() >= self.best {
                return;
            }
            if depth == self.order.len() {
                self.best = self.bins.len();
                return;
            }
            let e = self.order[depth];
            for b in 0..self.bins.len() {
                let (members, used) = &self.bins[b];
                if used + self.sizes[e] < self.limit && members.iter().all(|&m| !self.matrix.overlaps(m, e)) {
                    self.bins[b].0.push(e);
                    self.bins[b].1 += self.sizes[e];
                    self.run(depth + 1);
                    self.bins[b].1 -= self.sizes[e];
                    self.bins[b].0.pop();
                }
            }
            self.bins.push((vec![e], self.sizes[e]));
            self.run(depth + 1);
            self.bins.pop();
        }
    }

    let mut search = Search {
        matrix: &matrix,
        sizes: &sizes,
        order: &order,
        limit: imem_limit,
        bins: Vec::new(),
        best: matrix.len() + 1,
    };
    search.run(0);
    Ok(search.best)
}

/// Clique lower bound on the cluster count: the peak number of entities
/// active at one instant.
pub fn concurrency_lower_bound(trace: &Trace) -> usize {
    trace.peak_activity()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiler::ActivityRecord;

    fn rec(kernel: &str, start: Ns, end: Ns) -> ActivityRecord {
        ActivityRecord {
            kernel: kernel.into(),
            instance: 0,
            start,
            end,
            subband: 0,
        }
    }

    fn catalog(sizes: &[(&str, u64)]) -> BTreeMap<KernelId, KernelSpec> {
        sizes
            .iter()
            .map(|(id, size)| {
                (
                    id.to_string(),
                    KernelSpec {
                        id: id.to_string(),
                        name: id.to_string(),
                        binary_size: *size,
                        footprint: Footprint::new(1, 1),
                        compute_latency: 1,
                        input_volume: 0,
                    },
                )
            })
            .collect()
    }

    fn e(k: &str) -> Entity {
        Entity::new(k, 0)
    }

    fn kernels(c: &Cluster) -> Vec<&str> {
        c.members.iter().map(|m| m.kernel.as_str()).collect()
    }

    #[test]
    fn conflict_matrix_overlap_rules() {
        let touching = Trace::new(vec![rec("A", 0, 10), rec("B", 10, 20)]).unwrap();
        assert!(!build_conflict_matrix(&touching).conflicts(&e("A"), &e("B")));

        let direct = Trace::new(vec![rec("A", 0, 10), rec("B", 5, 15)]).unwrap();
        assert!(build_conflict_matrix(&direct).conflicts(&e("A"), &e("B")));

        let gapped = Trace::new(vec![rec("A", 0, 5), rec("A", 20, 25), rec("B", 6, 19)]).unwrap();
        let m = build_conflict_matrix(&gapped);
        assert!(!m.conflicts(&e("A"), &e("B")));
        assert!(!m.conflicts(&e("A"), &e("A")));
        assert!(m.conflicts(&e("Z"), &e("A")));
    }

    #[test]
    fn matrix_is_symmetric_with_false_diagonal() {
        let t = Trace::new(vec![rec("A", 0, 10), rec("B", 5, 15), rec("C", 12, 20)]).unwrap();
        let m = build_conflict_matrix(&t);
        for i in 0..m.len() {
            assert!(!m.overlaps(i, i));
            for j in 0..m.len() {
                assert_eq!(m.overlaps(i, j), m.overlaps(j, i));
            }
        }
    }

    #[test]
    fn scores_count_non_conflicts() {
        // A conflicts only with B; C is free of both.
        let t = Trace::new(vec![rec("A", 0, 10), rec("B", 5, 15), rec("C", 20, 30)]).unwrap();
        let m = build_conflict_matrix(&t);
        assert_eq!(independence_score(&e("A"), &m).unwrap(), 1);

        let all = Trace::new(vec![rec("A", 0, 10), rec("B", 0, 10), rec("C", 0, 10)]).unwrap();
        assert_eq!(independence_score(&e("A"), &build_conflict_matrix(&all)).unwrap(), 0);

        let sole = Trace::new(vec![rec("A", 0, 10)]).unwrap();
        assert_eq!(independence_score(&e("A"), &build_conflict_matrix(&sole)).unwrap(), 0);

        assert!(matches!(independence_score(&e("Q"), &m), Err(Error::UnknownEntity(_))));
    }

    #[test]
    fn chain_of_three_clusters_into_two() {
        let t = Trace::new(vec![rec("A", 0, 10), rec("B", 5, 15), rec("C", 12, 20)]).unwrap();
        let cat = catalog(&[("A", 1024), ("B", 1024), ("C", 1024)]);
        let clusters = cluster_kernels(&t, &cat, 4608).unwrap();
        assert_eq!(clusters.len(), 2);
        assert_eq!(kernels(&clusters[0]), vec!["A", "C"]);
        assert_eq!(kernels(&clusters[1]), vec!["B"]);
        assert_eq!(clusters[0].imem_used, 2048);
    }

    #[test]
    fn overlapping_entities_become_singletons() {
        let t = Trace::new(vec![rec("A", 0, 10), rec("B", 1, 10), rec("C", 2, 10)]).unwrap();
        let cat = catalog(&[("A", 10), ("B", 10), ("C", 10)]);
        let clusters = cluster_kernels(&t, &cat, 4608).unwrap();
        assert_eq!(clusters.len(), 3);
        assert!(clusters.iter().all(|c| c.members.len() == 1));
    }

    #[test]
    fn phase_two_clips_tail_into_spill() {
        let t = Trace::new(vec![rec("A", 0, 10), rec("B", 10, 20), rec("C", 20, 30)]).unwrap();
        let cat = catalog(&[("A", 2048), ("B", 2048), ("C", 2048)]);
        let clusters = cluster_kernels(&t, &cat, 4608).unwrap();
        assert_eq!(clusters.len(), 2);
        assert_eq!(kernels(&clusters[0]), vec!["A", "B"]);
        assert_eq!(kernels(&clusters[1]), vec!["C"]);
        assert_eq!(clusters[1].id, 1);
    }

    #[test]
    fn limit_is_strict() {
        let t = Trace::new(vec![rec("A", 0, 10), rec("B", 10, 20)]).unwrap();
        let cat = catalog(&[("A", 2304), ("B", 2304)]);
        // 4608 is not below 4608.
        assert_eq!(cluster_kernels(&t, &cat, 4608).unwrap().len(), 2);
        assert_eq!(cluster_kernels(&t, &cat, 4609).unwrap().len(), 1);
    }

    #[test]
    fn oversized_kernel_is_rejected() {
        let t = Trace::new(vec![rec("A", 0, 10)]).unwrap();
        let cat = catalog(&[("A", 4608)]);
        assert!(matches!(
            cluster_kernels(&t, &cat, 4608),
            Err(Error::OversizedKernel { kernel, .. }) if kernel == "A"
        ));
        assert!(cluster_kernels(&Trace::default(), &cat, 4608).is_err());
    }

    #[test]
    fn exact_search_small_cases() {
        let cat = catalog(&[("A", 1024), ("B", 1024), ("C", 1024), ("D", 1024)]);
        let chain = Trace::new(vec![rec("A", 0, 10), rec("B", 5, 15), rec("C", 12, 20)]).unwrap();
        assert_eq!(exact_min_clusters(&chain, &cat, 1 << 20, 10).unwrap(), 2);

        let disjoint = Trace::new(vec![rec("A", 0, 1), rec("B", 1, 2), rec("C", 2, 3), rec("D", 3, 4)]).unwrap();
        assert_eq!(exact_min_clusters(&disjoint, &cat, 1 << 20, 10).unwrap(), 1);

        let clique = Trace::new(vec![rec("A", 0, 5), rec("B", 0, 5), rec("C", 0, 5), rec("D", 0, 5)]).unwrap();
        assert_eq!(exact_min_clusters(&clique, &cat, 1 << 20, 10).unwrap(), 4);

        assert!(matches!(
            exact_min_clusters(&clique, &cat, 1 << 20, 3),
            Err(Error::TooLarge { entities: 4, max: 3 })
        ));
    }

    #[test]
    fn cluster_plan_json_round_trips() {
        let t = Trace::new(vec![rec("A", 0, 10), rec("B", 5, 15)]).unwrap();
        let cat = catalog(&[("A", 100), ("B", 100)]);
        let plan = ClusterPlan {
            imem_limit: 4608,
            clusters: cluster_kernels(&t, &cat, 4608).unwrap(),
        };
        let back: ClusterPlan = serde_json::from_str(&plan.to_json()).unwrap();
        assert_eq!(back, plan);
    }
}
