//! Shared fixtures for the benchmarks.

use wiretap_core::harness::trial_channels;
use wiretap_core::{ChannelSet, NetworkConfig};

/// Seeded instance with `q` links, `k` eavesdroppers and 3/2/2 antennas.
pub fn instance(q: usize, k: usize, r_circ: f64, seed: u64) -> (ChannelSet, Vec<f64>) {
    let cfg = NetworkConfig::uniform(q, k, r_circ, (3, 2, 2), 20.0);
    let channels = trial_channels(&cfg, seed, 0, 0).expect("placement");
    (channels, cfg.powers_linear())
}
