//! Counter-based seeded random streams.
//!
//! Every consumer of randomness draws from its own ChaCha8 stream keyed by a
//! path of integers (master seed, outer iteration, purpose, agent, ...).
//! Streams are independent of the order in which other streams are used, so
//! per-agent sampling can be reordered or parallelised without changing any
//! result.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// What a stream is used for; part of the stream key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Initial = 1,
    Action = 2,
    Transition = 3,
    Iteration = 4,
    Evaluation = 5,
    EnvParams = 6,
    Cell = 7,
    Policy = 8,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// A node in the seed tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SeedKey(u64);

impl SeedKey {
    pub fn new(seed: u64) -> Self {
        SeedKey(splitmix64(seed))
    }

    pub fn child(self, tag: u64) -> Self {
        SeedKey(splitmix64(self.0 ^ splitmix64(tag.wrapping_add(0x5851_F42D_4C95_7F2D))))
    }

    /// Purposes live in a tag range disjoint from small integer children.
    pub fn purpose(self, purpose: Purpose) -> Self {
        self.child((1 << 63) | purpose as u64)
    }

    pub fn value(self) -> u64 {
        self.0
    }

    /// Stream for `(purpose, index)` below this key.
    pub fn stream(self, purpose: Purpose, index: u64) -> Stream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.purpose(purpose).0);
        rng.set_stream(index);
        rng
    }

    /// One stream per agent for the given purpose.
    pub fn agent_streams(self, purpose: Purpose, n: usize) -> Vec<Stream> {
        (0..n as u64).map(|i| self.stream(purpose, i)).collect()
    }
}

/// Samples an index from a probability vector by inverse CDF.
///
/// The last index with positive mass absorbs round-off so the draw never
/// lands on a zero-probability outcome.
pub fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = k;
            if u < acc {
                return k;
            }
        }
    }
    last_positive
}
