//! Density-matrix simulator of the coupled electron–nuclear spin of a ³¹P
//! donor in silicon, with pulse sequences, relaxation, inhomogeneous
//! ensembles, memory protocols, tomography and a text sequence language.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dsl;
pub mod ensemble;
pub mod error;
pub mod noise;
pub mod protocols;
pub mod pulse;
pub mod relaxation;
pub mod sequence;
pub mod spin;
pub mod tomography;

pub use error::{Error, Result};
