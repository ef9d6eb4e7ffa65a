// SPDX-License-Identifier: Apache-2.0

//! Specification-driven instruction-stream generation and differential
//! testing of CPU execution backends.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`spec`] parses a corpus of encoding diagrams with their decode and
//!    execute pseudocode.
//! 2. [`asl`] evaluates that pseudocode, extracts branch constraints,
//!    slices and symbolizes them down to encoding symbols, and [`solver`]
//!    finds witnesses for both polarities of every constraint.
//! 3. [`mutation`] builds per-field candidate sets from type rules plus the
//!    solved witnesses and takes their Cartesian product; [`generate`]
//!    drives that per encoding.
//! 4. [`diff`] runs streams on two executor backends and classifies the
//!    divergence between their final CPU states.

pub mod asl;
pub mod bits;
pub mod diff;
pub mod generate;
pub mod mutation;
pub mod solver;
pub mod spec;

pub use bits::Bits;
