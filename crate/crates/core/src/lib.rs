//! Pseudospectral toolkit for the 2D semi-relativistic Hartree equation
//! `−i∂ₜu + √(1−Δ)u = λ(|x|^{−γ} ∗ |u|²)u`, `1 < γ < 2`.

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod observables;
pub mod operators;
pub mod spectral;

pub use error::{Error, Result};
pub use spectral::{Field, Grid, Multiplier, Space};
