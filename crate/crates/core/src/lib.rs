//! Numerical toolkit for the harmonic Sierpinski gasket: cells and coding,
//! the Kusuoka matrix measure, the projection field of the derivative
//! cocycle, boundary diagnostics and energy estimators.

pub mod cocycle;
pub mod commands;
pub mod config;
pub mod diagnostics;
pub mod energy;
pub mod error;
pub mod fields;
pub mod gasket;
pub mod linalg;
pub mod measure;
pub mod report;
pub mod verify;

pub use error::{GasketError, Result};
pub use gasket::{AffineMap, Cell, Symbol, Word};
pub use linalg::{Mat2, Vec2};
