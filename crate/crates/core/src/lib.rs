//! Topology optimization under load and threshold uncertainty with a
//! bi-fidelity (coarse/fine mesh) approximation of the sample solves.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod bifidelity;
pub mod config;
pub mod design;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod mesh;
pub mod optimize;
pub mod output;
pub mod random_field;
pub mod sampling;

pub use config::{parse_config, parse_config_str, Benchmark, Problem, RunConfig, Uncertainty};
pub use design::{DensityField, FilterOperator, ProcessedDesign, Simp, Stage, Threshold};
pub use error::{Error, Result};
pub use fem::{Material, StiffnessMatrix};
pub use mesh::{build_mesh, BcPreset, DomainShape, Mesh};
pub use optimize::{run_bifidelity, run_single_resolution, OptOutcome, OptSettings, OptState, ResolutionModel};
pub use random_field::KLModel;
pub use sampling::{SampleKind, SampleSet};
