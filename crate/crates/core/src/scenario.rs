//! Workload model: kernels, decision trees and the subband arrival stream.
//!
//! Scenarios are stored as a single JSON document with the top-level keys
//! `kernels`, `trees`, `stream` and `hardware`. Sizes are bytes, times are
//! integer nanoseconds and branch probabilities are decimals. Saving a loaded
//! scenario produces the canonical pretty-printed form.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::area::HardwareConfig;
use crate::error::{Error, Result};
use crate::rng::OutcomeStream;
use crate::types::{Footprint, KernelId, Ns};

/// Tolerance on the sum of outgoing branch probabilities.
pub const PROBABILITY_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub id: KernelId,
    pub name: String,
    /// Bytes of instruction binary loaded into every PE of the footprint.
    pub binary_size: u64,
    pub footprint: Footprint,
    pub compute_latency: Ns,
    /// Bytes streamed from SRAM per invocation.
    pub input_volume: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeNode {
    pub id: String,
    pub kernel: KernelId,
}

/// Where a branch leads. Serialized as the node id, or `"DROP"`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Target {
    Drop,
    Node(String),
}

impl Target {
    pub const DROP: &'static str = "DROP";
}

impl From<String> for Target {
    fn from(s: String) -> Self {
        if s == Target::DROP {
            Target::Drop
        } else {
            Target::Node(s)
        }
    }
}

impl From<Target> for String {
    fn from(t: Target) -> Self {
        match t {
            Target::Drop => Target::DROP.to_string(),
            Target::Node(n) => n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub from: String,
    pub outcome: String,
    pub to: Target,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionTree {
    pub id: String,
    pub root: String,
    pub nodes: Vec<TreeNode>,
    pub edges: Vec<Edge>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arrival {
    pub time: Ns,
    pub tree: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubbandStream {
    pub max_concurrent: u32,
    pub arrivals: Vec<Arrival>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kernels: Vec<KernelSpec>,
    pub trees: Vec<DecisionTree>,
    pub stream: SubbandStream,
    pub hardware: HardwareConfig,
}

/// A broken decision-tree invariant.
#[derive(Clone, Debug, PartialEq)]
pub enum TreeViolation {
    DuplicateNode(String),
    MissingRoot(String),
    UnknownEdgeEndpoint { edge: usize, node: String },
    ProbabilityRange { edge: usize, probability: f64 },
    ProbabilitySum { node: String, sum: f64 },
    Cycle { node: String },
    Unreachable(String),
}

impl fmt::Display for TreeViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeViolation::DuplicateNode(n) => write!(f, "duplicate node `{n}`"),
            TreeViolation::MissingRoot(n) => write!(f, "root `{n}` is not a node"),
            TreeViolation::UnknownEdgeEndpoint { edge, node } => {
                write!(f, "edge {edge} references unknown node `{node}`")
            }
            TreeViolation::ProbabilityRange { edge, probability } => {
                write!(f, "edge {edge} probability {probability} outside [0, 1]")
            }
            TreeViolation::ProbabilitySum { node, sum } => {
                write!(f, "outgoing probabilities of node `{node}` sum to {sum}, not 1")
            }
            TreeViolation::Cycle { node } => write!(f, "cycle through node `{node}`"),
            TreeViolation::Unreachable(n) => write!(f, "node `{n}` unreachable from root"),
        }
    }
}

/// Checks every decision-tree invariant. An empty result means the tree is valid.
pub fn validate_tree(tree: &DecisionTree) -> Vec<TreeViolation> {
    let mut violations = Vec::new();

    let mut ids = BTreeSet::new();
    for node in &tree.nodes {
        if !ids.insert(node.id.as_str()) {
            violations.push(TreeViolation::DuplicateNode(node.id.clone()));
        }
    }
    if !ids.contains(tree.root.as_str()) {
        violations.push(TreeViolation::MissingRoot(tree.root.clone()));
    }

    let mut out_edges: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut sums: BTreeMap<&str, f64> = BTreeMap::new();
    for (i, edge) in tree.edges.iter().enumerate() {
        if !ids.contains(edge.from.as_str()) {
            violations.push(TreeViolation::UnknownEdgeEndpoint {
                edge: i,
                node: edge.from.clone(),
            });
            continue;
        }
        if !(0.0..=1.0).contains(&edge.probability) {
            violations.push(TreeViolation::ProbabilityRange {
                edge: i,
                probability: edge.probability,
            });
        }
        *sums.entry(edge.from.as_str()).or_default() += edge.probability;
        if let Target::Node(to) = &edge.to {
            if !ids.contains(to.as_str()) {
                violations.push(TreeViolation::UnknownEdgeEndpoint {
                    edge: i,
                    node: to.clone(),
                });
                continue;
            }
            out_edges.entry(edge.from.as_str()).or_default().push(to.as_str());
        }
    }
    for (node, sum) in &sums {
        if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
            violations.push(TreeViolation::ProbabilitySum {
                node: node.to_string(),
                sum: *sum,
            });
        }
    }

    // Iterative DFS from the root: grey nodes on the stack detect back edges.
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        White,
        Grey,
        Black,
    }
    let mut marks: BTreeMap<&str, Mark> = ids.iter().map(|id| (*id, Mark::White)).collect();
    if ids.contains(tree.root.as_str()) {
        let mut stack: Vec<(&str, usize)> = vec![(tree.root.as_str(), 0)];
        marks.insert(tree.root.as_str(), Mark::Grey);
        while let Some((node, next)) = stack.pop() {
            let children = out_edges.get(node).map(Vec::as_slice).unwrap_or(&[]);
            if next < children.len() {
                stack.push((node, next + 1));
                let child = children[next];
                match marks[child] {
                    Mark::White => {
                        marks.insert(child, Mark::Grey);
                        stack.push((child, 0));
                    }
                    Mark::Grey => violations.push(TreeViolation::Cycle {
                        node: child.to_string(),
                    }),
                    Mark::Black => {}
                }
            } else {
                marks.insert(node, Mark::Black);
            }
        }
        for (id, mark) in &marks {
            if *mark == Mark::White {
                violations.push(TreeViolation::Unreachable(id.to_string()));
            }
        }
    }

    violations
}

impl DecisionTree {
    pub fn node(&self, id: &str) -> Option<&TreeNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn root_node(&self) -> Option<&TreeNode> {
        self.node(&self.root)
    }

    /// Picks the branch out of `node` for a uniform draw in `[0, 1)`, scanning
    /// edges in document order. `None` means the subband terminates here,
    /// either through a DROP branch or because `node` is a leaf.
    pub fn next(&self, node: &str, draw: f64) -> Option<&TreeNode> {
        let mut last = None;
        let mut cumulative = 0.0;
        for edge in self.edges.iter().filter(|e| e.from == node) {
            cumulative += edge.probability;
            last = Some(&edge.to);
            if draw < cumulative {
                return self.resolve(&edge.to);
            }
        }
        // Rounding can leave the cumulative sum a hair below 1.
        last.and_then(|t| self.resolve(t))
    }

    fn resolve(&self, target: &Target) -> Option<&TreeNode> {
        match target {
            Target::Drop => None,
            Target::Node(id) => self.node(id),
        }
    }

    /// Root-to-termination walk drawing one outcome per visited node.
    pub fn walk(&self, stream: &mut OutcomeStream) -> Vec<&TreeNode> {
        let mut path = Vec::new();
        let mut current = self.root_node();
        while let Some(node) = current {
            path.push(node);
            if path.len() >= self.nodes.len() {
                break;
            }
            current = self.next(&node.id, stream.draw());
        }
        path
    }
}

impl Scenario {
    pub fn kernel(&self, id: &str) -> Option<&KernelSpec> {
        self.kernels.iter().find(|k| k.id == id)
    }

    pub fn tree(&self, id: &str) -> Option<&DecisionTree> {
        self.trees.iter().find(|t| t.id == id)
    }

    pub fn catalog(&self) -> BTreeMap<KernelId, KernelSpec> {
        self.kernels.iter().map(|k| (k.id.clone(), k.clone())).collect()
    }

    /// Kernels at the root of some decision tree.
    pub fn entry_kernels(&self) -> BTreeSet<KernelId> {
        self.trees
            .iter()
            .filter_map(|t| t.root_node().map(|n| n.kernel.clone()))
            .collect()
    }

    /// Returns one message per violated invariant.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut kernel_ids = BTreeSet::new();
        for k in &self.kernels {
            if !kernel_ids.insert(k.id.as_str()) {
                out.push(format!("duplicate kernel id `{}`", k.id));
            }
            if k.binary_size == 0 {
                out.push(format!("kernel `{}` has zero binary_size", k.id));
            }
            if k.footprint.rows == 0 || k.footprint.cols == 0 {
                out.push(format!("kernel `{}` has an empty footprint", k.id));
            }
        }

        let mut tree_ids = BTreeSet::new();
        for tree in &self.trees {
            if !tree_ids.insert(tree.id.as_str()) {
                out.push(format!("duplicate tree id `{}`", tree.id));
            }
            for node in &tree.nodes {
                if !kernel_ids.contains(node.kernel.as_str()) {
                    out.push(format!(
                        "tree `{}` node `{}` references undefined kernel `{}`",
                        tree.id, node.id, node.kernel
                    ));
                }
            }
            for v in validate_tree(tree) {
                out.push(format!("tree `{}`: {v}", tree.id));
            }
        }

        if self.stream.max_concurrent == 0 {
            out.push("stream max_concurrent must be at least 1".to_string());
        }
        if self.stream.arrivals.windows(2).any(|w| w[0].time > w[1].time) {
            out.push("stream arrivals are not sorted by time".to_string());
        }
        for (i, a) in self.stream.arrivals.iter().enumerate() {
            if !tree_ids.contains(a.tree.as_str()) {
                out.push(format!("arrival {i} references undefined tree `{}`", a.tree));
            }
        }

        out.extend(self.hardware.validate());
        out
    }

    /// Parses a scenario document without validating it.
    pub fn from_json(text: &str, origin: &Path) -> Result<Scenario> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|err| {
            let field = err.path().to_string();
            let inner = err.into_inner();
            Error::Parse {
                path: origin.to_path_buf(),
                line: inner.line(),
                column: inner.column(),
                field,
                message: inner.to_string(),
            }
        })
    }

    /// Canonical serialized form: pretty JSON with a trailing newline.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let scenario = Scenario::from_json(&text, path)?;
    let violations = scenario.validate();
    if !violations.is_empty() {
        return Err(Error::Invalid {
            what: "scenario",
            violations,
        });
    }
    Ok(scenario)
}

pub fn save_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, scenario.to_canonical_json()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn edge(from: &str, to: &str, p: f64) -> Edge {
        Edge {
            from: from.into(),
            outcome: format!("to-{to}"),
            to: Target::from(to.to_string()),
            probability: p,
        }
    }

    pub fn tree(nodes: &[(&str, &str)], edges: Vec<Edge>) -> DecisionTree {
        DecisionTree {
            id: "t".into(),
            root: nodes[0].0.into(),
            nodes: nodes
                .iter()
                .map(|(id, k)| TreeNode {
                    id: id.to_string(),
                    kernel: k.to_string(),
                })
                .collect(),
            edges,
        }
    }

    #[test]
    fn probabilities_summing_to_one_are_valid() {
        let t = tree(
            &[("r", "A"), ("x", "B"), ("y", "C")],
            vec![edge("r", "x", 0.6), edge("r", "y", 0.4)],
        );
        assert!(validate_tree(&t).is_empty());
    }

    #[test]
    fn probability_oversum_names_node() {
        let t = tree(
            &[("r", "A"), ("x", "B"), ("y", "C")],
            vec![edge("r", "x", 0.6), edge("r", "y", 0.6)],
        );
        let v = validate_tree(&t);
        assert_eq!(v.len(), 1);
        assert!(matches!(&v[0], TreeViolation::ProbabilitySum { node, .. } if node == "r"));
    }

    #[test]
    fn back_edge_is_one_cycle() {
        let t = tree(
            &[("root", "A"), ("a", "B")],
            vec![edge("root", "a", 1.0), edge("a", "root", 1.0)],
        );
        let v = validate_tree(&t);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].to_string().contains("cycle"));
    }

    #[test]
    fn drop_counts_toward_probability_mass() {
        let t = tree(
            &[("r", "A"), ("x", "B")],
            vec![edge("r", "x", 0.7), edge("r", "DROP", 0.3)],
        );
        assert!(validate_tree(&t).is_empty());
    }

    #[test]
    fn unreachable_and_missing_nodes_reported() {
        let t = tree(&[("r", "A"), ("orphan", "B")], vec![edge("r", "ghost", 1.0)]);
        let v = validate_tree(&t);
        assert!(v.iter().any(|x| matches!(x, TreeViolation::UnknownEdgeEndpoint { node, .. } if node == "ghost")));
        assert!(v.iter().any(|x| matches!(x, TreeViolation::Unreachable(n) if n == "orphan")));
    }

    #[test]
    fn walk_follows_draws_and_terminates() {
        let t = tree(
            &[("r", "A"), ("x", "B"), ("y", "C")],
            vec![edge("r", "x", 0.5), edge("r", "y", 0.5)],
        );
        assert_eq!(t.next("r", 0.1).unwrap().id, "x");
        assert_eq!(t.next("r", 0.9).unwrap().id, "y");
        assert!(t.next("x", 0.3).is_none());
        let mut s = OutcomeStream::for_subband(0, 0);
        let path = t.walk(&mut s);
        assert_eq!(path.len(), 2);
    }

    #[test]
    fn target_serializes_drop_literal() {
        let json = serde_json::to_string(&Target::Drop).unwrap();
        assert_eq!(json, "\"DROP\"");
        let t: Target = serde_json::from_str("\"n3\"").unwrap();
        assert_eq!(t, Target::Node("n3".into()));
    }
}
