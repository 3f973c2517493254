//! Named RNG streams derived from one master seed.
//!
//! Every random decision in a run draws from a stream identified by a
//! [`Stream`] value. The stream seed is a SplitMix64 fold of the master
//! seed, a per-kind tag and the stream's indices, so adding draws to one
//! stream never shifts the values another stream produces.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    /// Master seed of one independent repeat.
    Repeat(u64),
    Topology,
    Dataset,
    Partition,
    ModelInit,
    /// Candidate subset `S_t` of a round.
    Subset {
        round: u64,
    },
    /// Random RB permutation of channel-unaware allocation.
    Allocation {
        round: u64,
    },
    /// Rayleigh fading draws of one device in one round.
    Fading {
        round: u64,
        device: u64,
    },
    /// Mini-batch shuffling of one device's local training.
    Training {
        round: u64,
        device: u64,
    },
    /// Bernoulli success draws of a round.
    Transmission {
        round: u64,
    },
}

impl Stream {
    fn words(self) -> (u64, [u64; 2]) {
        match self {
            Stream::Repeat(r) => (0x5245_5045_4154, [r, 0]),
            Stream::Topology => (0x544f_504f, [0, 0]),
            Stream::Dataset => (0x4441_5441, [0, 0]),
            Stream::Partition => (0x5041_5254, [0, 0]),
            Stream::ModelInit => (0x494e_4954, [0, 0]),
            Stream::Subset { round } => (0x5355_4253, [round, 0]),
            Stream::Allocation { round } => (0x414c_4c4f, [round, 0]),
            Stream::Fading { round, device } => (0x4641_4445, [round, device]),
            Stream::Training { round, device } => (0x5452_4149, [round, device]),
            Stream::Transmission { round } => (0x5452_414e, [round, 0]),
        }
    }
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `seed = mix(mix(mix(master ^ mix(tag)) ^ a) ^ b)`.
pub fn derive_seed(master: u64, stream: Stream) -> u64 {
    let (tag, [a, b]) = stream.words();
    let mut h = splitmix64(master ^ splitmix64(tag));
    h = splitmix64(h ^ a);
    splitmix64(h ^ b)
}

pub fn stream_rng(master: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream))
}
