//! Counter-based random streams.
//!
//! Every replication draws from its own ChaCha stream selected by
//! `(seed, family, index)`, so results never depend on scheduling or on the
//! number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for replication `index` within stream family `family`.
pub fn substream(seed: u64, family: u64, index: u64) -> ChaCha8Rng {
    let key = splitmix64(seed ^ splitmix64(family.wrapping_add(0xD1B5_4A32_D192_ED03)));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}
