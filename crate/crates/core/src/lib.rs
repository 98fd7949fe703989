//! Batch kernel-based optimization of black-box functions.
//!
//! A Gaussian-process posterior ([`posterior`]) drives an upper-confidence
//! rule ([`acquisition`]) that is maximized over the search box by a
//! derivative-free inner optimizer ([`inner_opt`]). Runs start from a
//! well-separated rank-1 lattice ([`lattice`]) and are driven and scored by
//! [`harness`] on the functions in [`benchmarks`].

pub mod acquisition;
pub mod benchmarks;
pub mod domain;
pub mod error;
pub mod harness;
pub mod inner_opt;
pub mod kernels;
mod linalg;
pub mod lattice;
pub mod posterior;

pub use acquisition::{
    batch_acquisition, batch_deviation, select_next, sequential_acquisition, AcquisitionConfig, Mode, Selection,
};
pub use benchmarks::{Objective, ObjectiveKind, Perturbation, PerturbedObjective, RkhsSpan, RunTrace, TraceStep};
pub use domain::BoxDomain;
pub use error::{Error, Result};
pub use harness::{Experiment, RunConfig};
pub use inner_opt::{InnerMaximizer, Maximum, Strategy};
pub use kernels::{kernel_eval, kernel_matrix, KernelFamily, KernelSpec};
pub use lattice::{LatticeSearchConfig, Rank1Lattice};
pub use posterior::{information_gain, ObservationHistory, PosteriorModel};
