//! Layered Petrov-Galerkin discretization of second order elliptic problems
//! on shallow domains, with a layer-parallel block-Jacobi solver.
//!
//! The unknown is piecewise constant per horizontal layer (trial space), the
//! test functions are continuous and piecewise affine in the vertical on a
//! grid shifted to the layer midpoints. Three problem variants are covered:
//!
//! * homogeneous Dirichlet conditions on a flat cylinder,
//! * Dirichlet conditions on a domain with a non-flat upper boundary,
//!   handled through a vertical stretching of a reference cylinder,
//! * mixed Dirichlet-Neumann conditions (flux data on the top surface).
//!
//! The crate is organized around the pipeline
//! [`mesh`] -> [`hfem`] -> [`assembly`] -> [`solvers`], with [`fields`]
//! providing the coefficient containers, interpolation and discrete norms,
//! and [`verify`] the manufactured-solution convergence and stability
//! harness driven by the `multilayer` binary.

pub mod assembly;
pub mod cli;
pub mod error;
pub mod fields;
pub mod hfem;
pub mod linalg;
pub mod mesh;
pub mod solvers;
pub mod verify;

pub use error::{AssemblyError, FieldError, MeshError, SolveError};
