//! Offline planning and runtime simulation for PE arrays whose processing
//! elements carry multi-bank instruction memories.
//!
//! The pipeline is split into stages that hand data to each other:
//!
//! * [`scenario`]: workload model (kernels, decision trees, subband arrivals).
//! * [`profiler`]: contention-free replay producing a kernel activity trace.
//! * [`clustering`]: groups temporally independent kernel instances into
//!   clusters that share IMEM banks under a capacity limit.
//! * [`placement`]: maps clusters onto rectangular PE regions, entry kernels
//!   nearest the SRAM column.
//! * [`runtime`]: live array state, switch classification, dynamic placer and
//!   eviction for the four switching strategies.
//! * [`simulator`]: deterministic discrete-event engine and metrics.
//! * [`area`]: array area model and IMEM-size sweep.

pub mod area;
pub mod clustering;
pub mod error;
pub mod placement;
pub mod profiler;
pub mod rng;
pub mod runtime;
pub mod scenario;
pub mod simulator;
pub mod types;

pub use error::{Error, Result};
pub use types::{Entity, Footprint, KernelId, Ns};
