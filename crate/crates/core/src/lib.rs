//! Simulation and verification toolkit for pairwise fusion gates (PFGs) on
//! photonic qudits.
//!
//! * [`fock`]: sparse Fock-space states and exact linear-optical evolution.
//! * [`qudit`]: qudit states, the d-rail encoding and named entangled states.
//! * [`lemma`]: parity classification of detector patterns behind the
//!   stabilizer-measurement lemma.
//! * [`pfg`]: fusion-gate circuits, pattern classification and empirical Kraus
//!   derivation.
//! * [`swapping`]: qudit-level boosted entanglement swapping.
//! * [`repeater`]: first/second-generation repeater rate model and its Monte
//!   Carlo check.
//!
//! Numeric code is generic over [`Real`]; the `*F64` / `*F32` aliases below fix
//! the scalar for callers that do not care.

pub mod error;
pub mod fock;
pub mod lemma;
pub mod pfg;
pub mod qudit;
pub mod repeater;
pub mod scalar;
pub mod swapping;

pub use error::{Error, Result};
pub use scalar::{Amp, Real};

pub type FockVectorF64 = fock::FockVector<f64>;
pub type FockVectorF32 = fock::FockVector<f32>;
pub type TransferMatrixF64 = fock::TransferMatrix<f64>;
pub type TransferMatrixF32 = fock::TransferMatrix<f32>;
pub type QuditStateF64 = qudit::QuditState<f64>;
pub type QuditStateF32 = qudit::QuditState<f32>;

pub type PfgCircuitF64 = pfg::PfgCircuit<f64>;
pub type PfgCircuitF32 = pfg::PfgCircuit<f32>;
pub type RegisterF64 = swapping::Register<f64>;
pub type RegisterF32 = swapping::Register<f32>;
pub type RepeaterParamsF64 = repeater::RepeaterParams<f64>;
pub type RepeaterParamsF32 = repeater::RepeaterParams<f32>;
