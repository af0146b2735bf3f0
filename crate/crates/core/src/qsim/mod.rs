//! State-vector simulation of vector-state preparation, the walk operator
//! `W = U·V`, phase estimation and singular value estimation.
//!
//! Two execution paths are offered. The exact path reads eigenphases off the
//! SVD and rounds them to the estimate grid; it is real-valued throughout and
//! serves as the oracle. The circuit path materialises the joint
//! system-plus-register state and runs phase estimation unitarily.

mod phase;
mod state;
mod sve;
mod walk;

pub use phase::{
    bin_phase, fold_bin, phase_bits, phase_estimation, phase_estimation_with, sve_bits, PhaseRegister,
    REGISTER_CAP,
};
pub use state::{prepare_vector_state, QuantumState};
pub use sve::{boost_rounds, CircuitSpectrum, Spectrum, SveComponent, SveEngine, SveOutput, SvePath};
pub use walk::{eigenphase_oracle, restricted_rotation, WalkOperator};
