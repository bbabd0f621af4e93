//! Replication streams.
//!
//! Every replication draws from its own ChaCha8 stream: the key comes from
//! the experiment seed and the 64-bit stream id is the replication index, so
//! replication `i` sees the same numbers regardless of scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type ReplicationRng = ChaCha8Rng;

pub fn replication_stream(seed: u64, replication: u64) -> ReplicationRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

/// Exponential variate by inversion.
#[inline]
pub fn exponential(rng: &mut impl Rng, rate: f64) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}
