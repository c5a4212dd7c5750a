//! Sparse and dense linear algebra helpers.

pub mod dense;
pub mod sparse;
