//! Reverse-mode autodiff engine: graph, ops, conv, norm, parameters, Adam
//! and a finite-difference gradient oracle.

mod conv;
pub mod gradcheck;
mod graph;
mod norm;
mod ops;
mod params;

pub use gradcheck::{finite_diff_check, GradCheck};
pub use graph::{BackCtx, Graph, Scalar, Tensor};
pub use params::{kaiming, normal, ones, zeros, Adam, ParamStore};
