//! Foldy–Lax clusters of high-index dielectric particles and their effective
//! (homogenised) permeability: solvers, volume operators and studies.

// `!(x > 0.0)` is the idiom here: it rejects NaN along with non-positives
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod effective;
pub mod error;
pub mod experiments;
pub mod foldylax;
pub mod geometry;
pub mod io;
pub mod krylov;
pub mod tensor;
pub mod vie;

pub use error::{Error, Result};
