//! Seeded RNG substreams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream keyed by
//! `(seed, domain, a, b)`. The four u64 words form the 32-byte ChaCha key
//! directly, so distinct tuples give independent streams by construction
//! and results never depend on execution order or thread count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Key namespaces. Keep values stable: they are part of the reproducibility
/// contract for datasets and checkpoints.
#[derive(Clone, Copy, Debug)]
pub enum Domain {
    /// Base scene synthesis (transmitter/scatterer placement).
    SceneBuild = 1,
    /// Per-snapshot scene perturbation, keyed by `t`.
    Snapshot = 2,
    /// Per-sample path synthesis, keyed by `(r, t)`.
    Sample = 3,
    /// Dataset split permutation.
    Split = 4,
    /// Parameter initialization.
    ParamInit = 5,
    /// Per-epoch minibatch shuffle, keyed by epoch.
    Shuffle = 6,
    /// Per-sample dropout masks, keyed by `(epoch, position)`.
    Dropout = 7,
}

/// Derive the substream for `(seed, domain, a, b)`.
pub fn substream(seed: u64, domain: Domain, a: u64, b: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
    key[16..24].copy_from_slice(&a.to_le_bytes());
    key[24..32].copy_from_slice(&b.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
