//! Space-time unfitted finite elements for incompressible flow around a
//! rigid disk embedded in a Cartesian background mesh.
//!
//! The fluid domain is the unit square minus a disk. Velocity and pressure
//! live in Taylor–Hood spaces on the whole background mesh; the interface
//! condition is imposed weakly (Nitsche), and a face-patch penalty on
//! differences of polynomial extensions stabilizes small cuts and extends
//! the solution into the solid. Time is discretized by discontinuous
//! Galerkin slabs, each solved by Newton's method with a sparse direct solver.

pub mod error;
pub mod forms;
pub mod manufactured;
pub mod mesh;
pub mod geometry;
pub mod quadrature;
pub mod space;
pub mod sparse;
pub mod spacetime;
pub mod study;

pub use error::{Error, Result};
