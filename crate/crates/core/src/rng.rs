//! Deterministic random-stream derivation.
//!
//! Every random draw in a run descends from a single master seed through a
//! [`StreamKey`]: (master seed, mission index, step index, purpose). The key
//! is written little-endian into the 32-byte ChaCha seed, so distinct keys
//! produce independent streams and the same key always reproduces the same
//! stream. Normal deviates are drawn from these streams with the ziggurat
//! method (`rand_distr::StandardNormal`).

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a derived stream is consumed for. Keeps streams for different
/// purposes at the same (mission, step) coordinate independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamPurpose {
    /// Scenario disturbance sequences for constraint sampling.
    Scenarios,
    /// Monte Carlo rollouts for remaining-safety estimation.
    SafetyEstimate,
    /// The true disturbance applied to the closed-loop system.
    Disturbance,
    /// Free-form tag for tests and auxiliary experiments.
    Custom(u64),
}

impl StreamPurpose {
    fn tag(self) -> u64 {
        match self {
            StreamPurpose::Scenarios => 1,
            StreamPurpose::SafetyEstimate => 2,
            StreamPurpose::Disturbance => 3,
            StreamPurpose::Custom(t) => 0x1000 + t,
        }
    }
}

/// Identifier of one random stream; the full lineage of every sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub master_seed: u64,
    pub mission: u64,
    pub step: u64,
    pub purpose: StreamPurpose,
}

impl StreamKey {
    pub fn new(master_seed: u64, mission: u64, step: u64, purpose: StreamPurpose) -> Self {
        StreamKey {
            master_seed,
            mission,
            step,
            purpose,
        }
    }

    /// Instantiate the stream this key names.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        seed[0..8].copy_from_slice(&self.master_seed.to_le_bytes());
        seed[8..16].copy_from_slice(&self.mission.to_le_bytes());
        seed[16..24].copy_from_slice(&self.step.to_le_bytes());
        seed[24..32].copy_from_slice(&self.purpose.tag().to_le_bytes());
        ChaCha8Rng::from_seed(seed)
    }
}
