//! Transient simulation of natural gas and hydrogen mixtures on pipeline
//! networks with compressor and regulator actuation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gas;
pub mod network;
pub mod scenario;
pub mod fv;
pub mod spectral;
pub mod timeint;
pub mod sim;
pub mod analysis;

pub use error::{Error, Result};
pub use gas::GasPair;
pub use network::{NetworkGraph, NodeRole, Pipe};
