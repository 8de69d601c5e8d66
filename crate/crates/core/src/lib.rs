//! Noncooperative secrecy games in MIMO interference networks with
//! eavesdroppers, where each link splits its power between an information
//! signal and artificial noise.
//!
//! The crate provides the rate model, the variational-inequality machinery,
//! three distributed equilibrium solvers, a centralized baseline, and an
//! experiment harness that sweeps them over random networks.

pub mod cssm;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod network;
pub mod rates;
pub mod solvers;
pub mod vi;

pub use error::{Error, Result};
pub use linalg::{CMat, HermitianMatrix, RMat};
pub use network::{ChannelSet, NetworkConfig, Topology};
pub use rates::{AuxProfile, GameConfig, LinkAux, LinkStrategy, Snapshot, StrategyProfile};
