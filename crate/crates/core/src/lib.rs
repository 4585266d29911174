//! Online self-supervised grasp-position learning on a 2-D picking
//! simulator.
//!
//! An anchor-grid grasp detector is trained from its own grasp trials. Each
//! successful trial is scored by a Siamese embedder that measures how far
//! the side-view image of the held object lies from a handful of optimum
//! pre-samples; the score weights the detector's positive feedback, and
//! negative feedback on likely-but-untried grasp positions is damped.

pub mod detector;
pub mod diffnum;
pub mod error;
pub mod evaluator;
pub mod orchestrator;
pub mod simenv;

pub use error::{Error, Result};
