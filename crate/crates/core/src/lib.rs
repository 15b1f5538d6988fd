//! A workbench for finite approximations of Fraïssé limits.
//!
//! The crate builds and certifies finite stages of homogeneous structures,
//! checks amalgamation for structure classes and for concrete structures,
//! constructs extensible embeddings, and replays four constructions where
//! amalgamation over an infinite base fails, each with bounded witnesses.

pub mod amalgamation;
pub mod cli;
pub mod counterexamples;
pub mod error;
pub mod extensible;
pub mod fraisse;
pub mod morphisms;
pub mod structures;

pub use error::{Error, Result};
