//! Hierarchical-matrix toolkit for the corrector problems of particulate
//! composites.
//!
//! Two integral formulations are provided:
//!
//! * [`eim`]: the equivalent inclusion method: a Galerkin discretisation of
//!   the Lippmann–Schwinger equation with one constant polarization per
//!   spherical inclusion, free-space fundamental operator, spherical RVE.
//! * [`bem`]: a collocation boundary element method for the periodic
//!   transmission problem, built on the adjoint double-layer operator of
//!   either the free-space or the periodic Laplace Green's function
//!   ([`pergreen`]).
//!
//! Both dense operators are compressed with the [`hmatrix`] engine (cluster
//! and block trees, adaptive cross approximation, H-LU preconditioning, CG and
//! GMRES).

pub mod bem;
pub mod eim;
pub mod geometry;
pub mod hmatrix;
pub mod microstructure;
pub mod pergreen;
pub mod quadrature;

pub use geometry::{Aabb, Vec3};
