//! Counter-based keyed random streams.
//!
//! Every random quantity in a cascade is a pure function of a 64-bit key, so
//! the weight attached to a dyadic cell can be regenerated on demand from
//! `(seed, level, index)` in any order and on any thread.

use rand::RngCore;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;
const LEVEL_SALT: u64 = 0xd1b5_4a32_d192_ed03;
const SEED_SALT: u64 = 0x8cb9_2ba7_2f3d_8dd7;

/// splitmix64 finalizer; a bijection on `u64`.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Key for the weight of dyadic cell `(level, index)` under `seed`.
#[inline]
pub fn cell_key(seed: u64, level: u32, index: u64) -> u64 {
    let a = mix64(seed ^ SEED_SALT);
    let b = mix64(a ^ (level as u64).wrapping_mul(LEVEL_SALT));
    mix64(b.wrapping_add(index.wrapping_mul(GOLDEN_GAMMA)))
}

/// Expands a master seed into `count` distinct replicate seeds.
pub fn derive_seeds(master: u64, count: usize) -> Vec<u64> {
    // mix64 is a bijection, and so is xor with a fixed master, so the
    // outputs are pairwise distinct.
    (0..count as u64)
        .map(|i| mix64(master ^ mix64(i.wrapping_add(1))))
        .collect()
}

/// A stream of pseudorandom words determined entirely by its key.
#[derive(Debug, Clone)]
pub struct RandomStream {
    key: u64,
    counter: u64,
}

impl RandomStream {
    pub fn new(key: u64) -> Self {
        Self { key, counter: 0 }
    }

    /// The stream attached to one dyadic cell of one realization.
    pub fn for_cell(seed: u64, level: u32, index: u64) -> Self {
        Self::new(cell_key(seed, level, index))
    }

    pub fn key(&self) -> u64 {
        self.key
    }
}

impl RngCore for RandomStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let word = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&word[..chunk.len()]);
        }
    }
}
