//! Seeded random streams.
//!
//! Every random draw in an experiment comes from a stream addressed by
//! `(replicate, purpose, index)` under one root seed. Streams are derived by
//! hashing the address into a fresh ChaCha key, so any stream can be
//! reconstructed without replaying the others. Two policies run on the same
//! replicate therefore see the same contexts and the same reward noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Theta,
    Context,
    Reward,
    Policy,
    /// Free-form streams for diagnostics and tests.
    Auxiliary,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Theta => 0x0074_6865_7461,
            Purpose::Context => 0x0063_6f6e_7465_7874,
            Purpose::Reward => 0x7265_7761_7264,
            Purpose::Policy => 0x706f_6c69_6379,
            Purpose::Auxiliary => 0x0061_7578,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Root of the stream hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    root: u64,
}

impl SeedTree {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    /// Independent stream for `(replicate, purpose, index)`.
    pub fn stream(&self, replicate: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
        let mut state = self.root;
        let mix = |v: u64, state: &mut u64| {
            *state ^= v;
            splitmix64(state)
        };
        mix(replicate, &mut state);
        mix(purpose.tag(), &mut state);
        mix(index, &mut state);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }

    pub fn replicate(&self, replicate: u64) -> ReplicateStreams {
        ReplicateStreams { tree: *self, replicate }
    }
}

/// The streams belonging to one Monte-Carlo replicate.
#[derive(Debug, Clone, Copy)]
pub struct ReplicateStreams {
    tree: SeedTree,
    replicate: u64,
}

impl ReplicateStreams {
    pub fn index(&self) -> u64 {
        self.replicate
    }

    pub fn theta(&self) -> ChaCha8Rng {
        self.tree.stream(self.replicate, Purpose::Theta, 0)
    }

    pub fn context(&self, round: usize) -> ChaCha8Rng {
        self.tree.stream(self.replicate, Purpose::Context, round as u64)
    }

    pub fn reward(&self, round: usize) -> ChaCha8Rng {
        self.tree.stream(self.replicate, Purpose::Reward, round as u64)
    }

    pub fn policy(&self) -> ChaCha8Rng {
        self.tree.stream(self.replicate, Purpose::Policy, 0)
    }
}
