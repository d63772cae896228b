// Index-heavy numeric loops read better with explicit ranges.
#![allow(clippy::needless_range_loop)]

//! Sampling and reconstruction in finitely generated shift-invariant spaces.
//!
//! The crate builds the modulation matrices `G_p(x)` of a filter bank sampled
//! on an integer lattice, estimates their spectral bounds `A_G`, `B_G`,
//! classifies the induced system (complete / Bessel / frame / Riesz), and
//! when the system is a frame performs the dual-row reconstruction from the
//! lattice samples. A verification layer re-derives every identity through an
//! independent numerical route.
//!
//! Module map:
//! - [`lattice`]: integer sampling matrices, coset representatives, cells
//! - [`grid`], [`patch`]: tabulated functions, quadrature, Fourier coefficients
//! - [`sispace`]: generators, synthesis, Riesz bounds
//! - [`filters`]: LTI sampling systems and their symbols
//! - [`modulation`]: `G_p(x)`, spectral bounds, classification
//! - [`reconstruction`]: pseudo-inverse duals, kernels, sampling, expansion
//! - [`verify`]: independent oracles for the identities
//! - [`scenario`], [`pipeline`], [`report`]: scenario files and the
//!   analyze / reconstruct / verify drivers

pub mod error;
pub mod exec;
pub mod filters;
pub mod grid;
pub mod lattice;
pub mod modulation;
pub mod patch;
pub mod pipeline;
pub mod reconstruction;
pub mod report;
pub mod scenario;
pub mod sispace;
pub mod verify;

pub use error::{Error, Result};
