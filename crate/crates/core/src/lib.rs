//! Table structure recognition toolkit.
//!
//! Structural losses and a min-max refiner for cell boxes, rectilinear
//! adjacency targets and their inversion, ground-truth normalization with
//! empty cells, and adjacency-relation scoring that can count empty cells.

pub mod adjacency;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod normalize;
pub mod refine;
pub mod structure;
pub mod synth;
