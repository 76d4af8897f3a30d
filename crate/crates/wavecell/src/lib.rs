//! An explicit elastodynamics engine for 2D immersed-boundary (fictitious
//! domain) discretizations on Cartesian spectral-element meshes.
//!
//! The geometry is described implicitly and embedded in a regular mesh;
//! elements crossed by the domain boundary are integrated with a
//! quadtree-composed quadrature. Badly cut elements produce near-singular
//! mass and stiffness contributions that wreck the critical time step and
//! conditioning of explicit schemes; this crate implements an element-level
//! eigenvalue-based stabilization that repairs the offending spectral modes
//! while leaving rigid-body motion untouched, along with the diagnostics
//! (critical time step, condition numbers) and benchmark scenarios to
//! evaluate it.

pub mod element;
pub mod evs;
pub mod geometry;
pub mod linalg;
pub mod quadrature;
pub mod scenarios;
pub mod solver;
