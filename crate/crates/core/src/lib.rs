//! Primal-dual proximal splitting for nonsmooth PDE-constrained
//! optimization, where each outer iteration advances the state and adjoint
//! PDEs by a single step of a linear-system splitting (Jacobi, Gauss–Seidel,
//! relaxed variants, quasi-CG, or an exact solve).
//!
//! The crate covers two discrete coefficient inverse problems on the unit
//! square: recovering a scalar reaction coefficient, and recovering a
//! diffusion field together with a reaction coefficient under total
//! variation regularization.

// Negated float comparisons are used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithm;
pub mod error;
pub mod grid;
pub mod harness;
pub mod linalg;
pub mod pde;
pub mod prox;
pub mod splitting;

pub use algorithm::{advance_step_rule, relative_error, IterateState, IterationLog, Problem, Residuals, StepRule};
pub use error::{Error, Result};
pub use grid::{BoundaryTrace, EdgeField, GridFunction, GridSpec};
pub use pde::{ControlParam, MeasurementSet, PdeFamily, StateBundle};
pub use prox::{Coupling, DualVar, RegConfig};
pub use splitting::{DiagnosticsReport, SplitterState, SplittingKind};
