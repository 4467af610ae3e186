//! Behaviour-map guided shared-authority steering for a robotic walker.
//!
//! The offline side plans human-like clothoid trajectories over a
//! probabilistic roadmap, learns latent trajectory features with a small
//! convolutional autoencoder, and stores per-cell manoeuvre clusters in a
//! behavioural map. The online side reconstructs the walked path, scores it
//! against the expected manoeuvre and scales a visco-elastic steering
//! controller by that confidence.

// `!(x > 0.0)` rejects NaN on purpose; index loops mirror the maths.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod behmap;
pub mod control;
pub mod features;
pub mod geometry;
pub mod harness;
pub mod neural;
pub mod roadmap;
pub mod worldmap;
