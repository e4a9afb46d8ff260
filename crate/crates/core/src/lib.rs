//! Optimal control of the matrix coefficient in an elliptic obstacle problem.
//!
//! The crate discretizes `−∇·(q∇u) + λ = f`, `u ≤ ψ`, `λ ≥ 0`, `(λ, u − ψ) = 0`
//! on (-1,1)² with bilinear elements and provides
//!
//! * a primal–dual active set solver for the obstacle problem ([`obstacle`]),
//! * the cubic-penalty regularization and its adjoint ([`penalty`]),
//! * reduced gradients with a log-det barrier on the spectral bounds of the
//!   control and a projected-gradient optimizer with penalty path-following
//!   ([`optimizer`], [`control`]),
//! * directional derivatives of the control-to-state map through the
//!   critical-cone variational inequality ([`sensitivity`]),
//! * experiment drivers writing CSV tables and VTK fields ([`experiments`]).

pub mod control;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod linalg;
pub mod obstacle;
pub mod optimizer;
pub mod penalty;
pub mod problem;
pub mod sensitivity;

pub use error::{Error, Result};
