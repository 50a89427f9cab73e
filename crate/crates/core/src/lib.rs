//! Visible/thermal face recognition with two fusion stages.
//!
//! Pipeline: load and resize a registered visible/thermal pair ([`imaging`]),
//! merge them coefficient-by-coefficient in the db2 wavelet domain
//! ([`wavelet`], [`fusion`]), project the fused image onto an eigenface basis
//! ([`eigenspace`]), classify the feature vector with an MLP and an RBF
//! network ([`classifiers`]), and combine the two labels with a
//! confusion-matrix belief rule that may reject ([`decision`]). [`harness`]
//! wires it together over a dataset manifest and produces reports.

pub mod classifiers;
pub mod decision;
pub mod eigenspace;
pub mod error;
pub mod fusion;
pub mod harness;
pub mod imaging;
pub mod linalg;
pub mod wavelet;

pub use error::{Error, Result};
