//! Desk-scale simulation of a quantum recommendation system.
//!
//! The crate is organised bottom-up:
//!
//! * [`linalg`]: dense matrices, SVD, rank truncation and threshold projections.
//! * [`sample_tree`]: the tree-of-trees store of squared amplitudes used for
//!   l2 sampling and vector-state preparation.
//! * [`subsample`]: entrywise matrix subsampling and the reconstruction bounds.
//! * [`qsim`]: state-vector simulation of the walk operator, phase estimation
//!   and singular value estimation.
//! * [`qproject`]: threshold projection by flag-and-measure rejection sampling.
//! * [`recsys`]: the preference model, recommendation quality bounds and the
//!   end-to-end recommender.
//! * [`experiment`]: seeded experiment runner producing JSON reports.

pub mod error;
pub mod experiment;
pub mod linalg;
pub mod qproject;
pub mod qsim;
pub mod recsys;
pub mod rng;
pub mod sample_tree;
pub mod stats;
pub mod subsample;

pub use error::{Error, Result};
pub use linalg::{DenseMatrix, SvdFactorization};
pub use qproject::{ProjectionOutcome, ProjectionParams, Projector};
pub use qsim::{QuantumState, SveEngine, SveOutput, SvePath, WalkOperator};
pub use recsys::{PreferenceModel, Recommender};
pub use sample_tree::{MatrixStore, RowTree};
