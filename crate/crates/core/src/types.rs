//! Small shared domain types.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Simulation and trace time, in integer nanoseconds.
pub type Ns = u64;

pub type KernelId = String;

/// Rectangle of PEs a kernel (or cluster) occupies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Footprint {
    pub rows: u32,
    pub cols: u32,
}

impl Footprint {
    pub const fn new(rows: u32, cols: u32) -> Self {
        Self { rows, cols }
    }

    pub fn area(&self) -> u64 {
        u64::from(self.rows) * u64::from(self.cols)
    }

    /// Element-wise maximum, the bounding footprint of two kernels sharing PEs.
    pub fn union(&self, other: &Footprint) -> Footprint {
        Footprint::new(self.rows.max(other.rows), self.cols.max(other.cols))
    }

    /// Whether a region of this shape can host `other`.
    pub fn covers(&self, other: &Footprint) -> bool {
        self.rows >= other.rows && self.cols >= other.cols
    }
}

/// One copy of a kernel. Concurrently active copies of a kernel get distinct
/// instance indices, and each copy is clustered and placed on its own.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Entity {
    pub kernel: KernelId,
    pub instance: u32,
}

impl Entity {
    pub fn new(kernel: impl Into<KernelId>, instance: u32) -> Self {
        Self {
            kernel: kernel.into(),
            instance,
        }
    }
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.kernel, self.instance)
    }
}
