//! Reproducible random streams.
//!
//! Every task draws randomness from `derive_substream(master, index)`: a
//! ChaCha8 generator keyed by the master seed with the task index as its
//! stream id. Distinct indices select disjoint ChaCha streams.
//!
//! Infinite binary expansions for exact dyadic orbits are read from the same
//! streams through [`BitExpansion`] (random access) and [`BitCursor`]
//! (sequential, constant memory).

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Stream = ChaCha8Rng;

pub const MAX_STREAM_INDEX: u64 = 1 << 63;

pub fn derive_substream(master: u64, index: u64) -> Result<Stream> {
    if index >= MAX_STREAM_INDEX {
        return Err(Error::StreamOverflow(index));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    Ok(rng)
}

/// Derives an independent master seed for a named role, so one experiment can
/// use several families of substreams (initial points, targets, ...).
pub fn role_seed(master: u64, role: &str) -> u64 {
    let mut h = master ^ 0x9e37_79b9_7f4a_7c15;
    for b in role.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform draw in [0, 1) with 53 random bits.
#[inline]
pub fn uniform(rng: &mut Stream) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A seeded, infinite binary expansion `0.b_0 b_1 b_2 ...`.
///
/// Bit `i` is bit `63 - (i % 64)` of word `i / 64`, where word `w` is the
/// `w`-th `u64` of the substream `(master, stream)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BitExpansion {
    pub master: u64,
    pub stream: u64,
}

impl BitExpansion {
    pub fn new(master: u64, stream: u64) -> Result<Self> {
        if stream >= MAX_STREAM_INDEX {
            return Err(Error::StreamOverflow(stream));
        }
        Ok(Self { master, stream })
    }

    pub fn word(&self, index: u64) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.stream);
        rng.set_word_pos(u128::from(index) * 2);
        rng.next_u64()
    }

    /// The 64 bits starting at bit `offset`.
    pub fn window(&self, offset: u64) -> u64 {
        let w = offset / 64;
        let bit = (offset % 64) as u32;
        let hi = self.word(w);
        if bit == 0 {
            hi
        } else {
            (hi << bit) | (self.word(w + 1) >> (64 - bit))
        }
    }

    pub fn cursor(&self, offset: u64) -> BitCursor {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.stream);
        rng.set_word_pos(u128::from(offset / 64) * 2);
        let cur = rng.next_u64();
        let next = rng.next_u64();
        BitCursor {
            rng,
            cur,
            next,
            bit: (offset % 64) as u32,
        }
    }
}

/// Sequential reader over a [`BitExpansion`] keeping two words in memory.
#[derive(Debug, Clone)]
pub struct BitCursor {
    rng: ChaCha8Rng,
    cur: u64,
    next: u64,
    bit: u32,
}

impl BitCursor {
    #[inline]
    pub fn window(&self) -> u64 {
        if self.bit == 0 {
            self.cur
        } else {
            (self.cur << self.bit) | (self.next >> (64 - self.bit))
        }
    }

    /// Advances by `bits < 64`.
    #[inline]
    pub fn advance(&mut self, bits: u32) {
        debug_assert!(bits < 64);
        self.bit += bits;
        if self.bit >= 64 {
            self.bit -= 64;
            self.cur = self.next;
            self.next = self.rng.next_u64();
        }
    }
}

/// Converts the leading 53 bits of a window to a value in [0, 1).
#[inline]
pub fn window_to_unit(window: u64) -> f64 {
    (window >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
