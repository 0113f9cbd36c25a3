//! Inputs shared by the benchmarks.

use sepcost::aet_net::NetworkConfig;
use sepcost::signal_io::MixturePair;

/// One second of the two-speaker fixture at 16 kHz.
pub fn fixture_pair() -> MixturePair {
    sepcost::fixtures::two_speaker_mixture(1.0, 16_000, 0.0, 0).expect("fixture")
}

/// The network size used by the overfit run.
pub fn small_network() -> NetworkConfig {
    NetworkConfig {
        components: 128,
        taps: 256,
        stride: 16,
        hidden: 128,
        ..NetworkConfig::default()
    }
}
