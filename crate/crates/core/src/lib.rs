// SPDX-License-Identifier: Apache-2.0

//! Cycle-level model of a reconfigurable DNN accelerator built from a 2D
//! PE array with two-phase reduction (NEST) and a butterfly
//! reduce-and-reorder network (BIRRD), together with a layout-aware
//! dataflow cost model and a per-layer (dataflow, layout) co-search.
//!
//! Module map:
//!
//! * [`workload`]: layer shapes and model files.
//! * [`mapping`]: loop-nest dataflows and mapspace enumeration.
//! * [`layout`]: layout descriptors, banked buffers, reorder regimes.
//! * [`birrd`]: network topology, switch semantics, routing, simulation.
//! * [`nest`]: PE-array timing, execution traces, functional checking.
//! * [`cost`]: slowdown, energy, reorder charges, EDP.
//! * [`search`]: per-layer and per-model co-search.
//! * [`baselines`]: named comparison profiles.

pub mod arch;
pub mod baselines;
pub mod birrd;
pub mod cost;
mod dims;
mod error;
pub mod layout;
pub mod mapping;
pub mod nest;
pub mod search;
pub mod workload;

pub use arch::{ArchSpec, BufferSpec, EnergyTable, Organization};
pub use baselines::BaselineProfile;
pub use birrd::{BirrdProgram, BirrdTopology, EggOp, ReductionSpec};
pub use cost::CostReport;
pub use dims::{Dim, TensorDim};
pub use error::{Error, Result};
pub use layout::{LayoutDescriptor, ReorderRegime, Transition};
pub use mapping::{Flexibility, Mapping, MapspaceConstraint};
pub use nest::ExecutionTrace;
pub use search::{SearchConfig, SearchResult};
pub use workload::{LayerKind, LayerShape, ModelSpec};
