//! Regular vines: structure, joint density, simulation and the model file.

mod io;
mod model;
mod structure;

pub use io::{EdgeRecord, VineModelFile};
pub use model::{RVineModel, CLAMP};
pub use structure::{validate_links, validate_structure, Edge, RVineStructure, ValidationReport, Violation};

pub(crate) use model::{edge_arguments, edge_outputs, open_uniform, EdgeOutputs};
pub(crate) use structure::UnionFind;
