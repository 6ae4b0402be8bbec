//! Numerical kernel for rigidity experiments with p-Laplacian type equations
//! on one-dimensional reductions of compact model manifolds (the round sphere
//! reduced to the polar angle, and the flat torus reduced to one coordinate).
//!
//! The crate is `no_std` + `alloc`: everything here is pure computation on
//! owned buffers. IO, random corpora, CLI and report formats live in the
//! companion `rigidity-lab` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod elliptic;
pub mod fields;
pub mod flow;
pub mod fmath;
pub mod geometry;
pub mod identities;
pub mod linalg;
pub mod operators;
pub mod params;
pub mod spectral;

pub use geometry::{Field, Geometry, GeometryKind};
pub use params::{DerivedConstants, ParamSet};
