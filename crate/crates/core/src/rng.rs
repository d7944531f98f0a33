//! Seed derivation: one master seed fans out into named, independent streams.
//!
//! Every source of randomness in the workspace is a ChaCha8 stream obtained
//! from a master seed through [`sub_seed`] (named sub-streams) and
//! [`stream`] (numbered streams within a sub-seed, e.g. one per agent).
//! ChaCha is counter-based, so streams are splittable and replayable.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; decorrelates nearby seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a master seed and a stream label.
///
/// Equal `(master, label)` pairs always give the same child seed; distinct
/// labels give unrelated ones.
pub fn sub_seed(master: u64, label: &str) -> u64 {
    // FNV-1a over the label folded into SplitMix64.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix(master ^ mix(h))
}

/// A numbered ChaCha8 stream under the given seed.
///
/// All streams of one seed share key material but never overlap, which makes
/// per-agent streams cheap: `stream(round_seed, agent_id as u64)`.
pub fn stream(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}
