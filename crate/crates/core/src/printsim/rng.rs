use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const ACTUATOR_CHANNEL: u64 = 1;
pub const SENSOR_CHANNEL: u64 = 2;

/// One standard normal draw addressed by `(seed, channel, a, b)`.
pub fn standard_normal(seed: u64, channel: u64, a: u64, b: u64) -> f64 {
    let mut key = [0u8; 32];
    for (i, w) in [seed, channel, a, b].iter().enumerate() {
        key[8 * i..8 * i + 8].copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key).sample(StandardNormal)
}
