//! Simulation and numerical verification of entanglement gained by
//! transmitting qubits between two parties.
//!
//! A four-qubit register `A, B, C, D` starts with Alice. She prepares it with
//! a global unitary, sends `D` to Bob, both parties act locally, and finally
//! `C` is sent. The crate tracks the entanglement shared across the cut at
//! every step and checks that each transmitted qubit adds at most one ebit,
//! for pure states, mixed states, noisy channels and mixtures of local
//! unitaries.
//!
//! Index convention throughout: the first subsystem label is the most
//! significant tensor factor.

pub mod entanglement;
pub mod error;
pub mod harness;
mod linalg;
pub mod protocol;
pub mod seeding;
pub mod states;
pub mod tensor_core;
pub mod unitaries_channels;

pub use error::{Error, Result};

pub use num_complex::Complex64;

/// Dense complex matrix used for operators and density matrices.
pub type CMatrix = nalgebra::DMatrix<Complex64>;
/// Dense complex column vector used for amplitudes.
pub type CVector = nalgebra::DVector<Complex64>;
