//! Named, independent random streams derived from one run seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Stream `name` of `seed`, further keyed by `keys` (e.g. vehicle id and
/// broadcast generation for per-vehicle draws).
pub fn stream(seed: u64, name: &str, keys: &[u64]) -> SimRng {
    let mut s = splitmix64(seed ^ fnv1a(name));
    for &k in keys {
        s = splitmix64(s ^ k);
    }
    ChaCha8Rng::seed_from_u64(s)
}
