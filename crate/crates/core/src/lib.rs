//! Graph classification with a structural semantic readout.
//!
//! Node embeddings from a GCN encoder are aligned to a small set of learned
//! prototypes; each prototype position is pooled separately and the
//! position-ordered representation feeds a classifier.

pub mod classify;
pub mod cli;
pub mod encoder;
pub mod model;
pub mod numkit;
pub mod readout;
pub mod train;
pub mod tudata;
