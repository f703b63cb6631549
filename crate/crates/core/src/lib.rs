//! Quantum state tomography with variational circuits.
//!
//! An unknown state is learned by optimizing the angles of a layered
//! RX/RY + CNOT circuit so that its output maximizes the fidelity with the
//! target, either exactly or through a shot-sampled SWAP test. The trained
//! circuit is then replayed on a right-canonical matrix-product-state
//! simulator, which yields the learned state (pure targets) or its reduced
//! density operator as an MPO (mixed targets).
//!
//! Basis ordering used throughout: qubit 0 is the most significant bit of a
//! basis index, so `|q0 q1 ... q(n-1)>` maps to index `q0 * 2^(n-1) + ...`.

// Negated comparisons such as `!(x > 0.0)` are used on purpose to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circuit;
pub mod error;
pub mod mps;
pub mod spinchain;
pub mod statevector;
pub mod tensor;
pub mod tomography;

pub use num_complex::Complex64;

pub use circuit::{AnsatzSpec, Circuit, Gate, GateKind, RotationScheme};
pub use error::{Error, Result};
pub use mps::{MpoOperator, MpsState};
pub use spinchain::{GroundState, XxzParams};
pub use statevector::{DensityMatrix, ShotPlan, StateVector};
pub use tensor::{ComplexTensor, SvdResult};
pub use tomography::{EstimatorConfig, Target, TrainConfig, TrainRecord};
