//! Finite element simulation of ionic electrodiffusion (KNP-EMI) in
//! excitable tissue.
//!
//! The library solves the coupled Nernst-Planck / electroneutrality system
//! for a set of ionic species in explicitly meshed intracellular and
//! extracellular compartments, joined by a cellular membrane carrying
//! Hodgkin-Huxley or Kir-Na/K channel dynamics. Each implicit-explicit time
//! step produces one large nonsymmetric block-sparse linear system, solved
//! with restarted GMRES and a block-diagonal preconditioner whose inverse is
//! approximated by algebraic multigrid.
//!
//! Module map:
//! - [`mesh`]: structured box geometries and a line-oriented mesh exchange format
//! - [`fem`]: Lagrange P1/P2 spaces with duplicated membrane DOFs, quadrature, assembly
//! - [`membrane`]: physical constants, ionic species, channel models, gating ODEs
//! - [`system`]: the global block operator, right-hand sides, time stepping
//! - [`solver`]: CSR kernels, GMRES/CG, Ruge-Stueben AMG, ILU(0), sparse LU
//! - [`verify`]: manufactured-solution studies, dense assembly oracle, invariants
//! - [`config`]: scenario files, defaults, validation
//! - [`bench`]: iteration-robustness sweeps and thread-scaling harness
//!
//! See the crate examples for runnable entry points to each capability.

pub mod bench;
pub mod config;
pub mod error;
pub mod fem;
pub mod membrane;
pub mod mesh;
pub mod output;
pub mod solver;
pub mod sparse;
pub mod system;
pub mod verify;

pub use error::{Error, Result};
