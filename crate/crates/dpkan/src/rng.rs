//! Labelled deterministic random streams.
//!
//! Every stochastic component in the crate draws from its own ChaCha8 stream,
//! derived from the master seed and a fixed label. Streams never interleave:
//! enabling a diagnostic that consumes extra randomness (say, the shifted
//! iterate tracker) cannot perturb batch selection or noise draws of the main
//! run, so any two runs with the same seed replay bit-for-bit.
//!
//! Labels are baked into the stream id's high 32 bits; the low 32 bits select
//! an independent replicate within the label (Monte-Carlo repetitions, one
//! stream per trial). A plain [`stream`] call is replicate 0.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream label for model parameter initialization.
pub const INIT: u64 = 1;
/// Stream label for mini-batch index sampling.
pub const BATCH: u64 = 2;
/// Stream label for the injected privacy noise.
pub const NOISE: u64 = 3;
/// Stream label for synthetic dataset generation.
pub const DATAGEN: u64 = 4;
/// Stream label for replacement examples in stability probes.
pub const REPLACEMENT: u64 = 5;
/// Stream label for held-out evaluation data.
pub const HOLDOUT: u64 = 6;
/// Stream label for Monte-Carlo diagnostic trials.
pub const TRIAL: u64 = 7;

/// Deterministic generator for `(seed, label)`, replicate 0.
pub fn stream(seed: u64, label: u64) -> ChaCha8Rng {
    substream(seed, label, 0)
}

/// Deterministic generator for replicate `index` of `(seed, label)`.
///
/// Replicates of the same label are mutually independent streams of the same
/// seeded cipher; `index` must stay below `2^32` so distinct `(label, index)`
/// pairs map to distinct stream ids.
pub fn substream(seed: u64, label: u64, index: u64) -> ChaCha8Rng {
    assert!(index < (1 << 32), "replicate index {index} exceeds 2^32 - 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((label << 32) | index);
    rng
}
