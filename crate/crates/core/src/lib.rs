//! Directed transmission method: tear a sparse SPD system into subgraphs
//! joined by delayed line pairs and solve it asynchronously.

pub mod demo;
pub mod engine;
pub mod error;
pub mod evs;
pub mod experiment;
pub mod graph;
pub mod io;
pub mod matrix;
pub mod sim;
pub mod spectral;

pub use engine::{assemble_all, assemble_local, local_update, vtm_sweep, BoundaryState, DtlpSpec, LocalSolution, LocalSystem};
pub use error::{Error, Result};
pub use evs::{apply_split, multilevel_split, validate_partition, Partition, SplitPlan};
pub use graph::{graph_from_system, ElectricGraph, VertexId};
pub use matrix::{DefinitenessClass, SymmetricSystem};
pub use sim::{run_async, run_vtm, ConvergenceCriterion, SimConfig, Trace};
pub use nalgebra;
