//! Parametrically driven superconducting qubits on a flux-modulated bus:
//! operator algebra, device Hamiltonians, Schrieffer–Wolff analytics,
//! time propagation and adiabatic protocols.

pub mod adiabatic;
pub mod device;
pub mod dynamics;
pub mod linalg;
pub mod operators;
pub mod swt;

pub use linalg::{CMatrix, CVector, C64};
