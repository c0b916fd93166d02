//! MurmurHash3, x64 128-bit variant, and the double-hashing row index
//! derived from it.
//!
//! The reference algorithm takes a 32-bit seed and loads it into both
//! lanes; here the seed is 64 bits wide and loaded the same way, so seeds
//! below 2^32 give the reference digests.

const C1: u64 = 0x87c3_7b91_1142_53d5;
const C2: u64 = 0x4cf5_ad43_2745_937f;

#[inline]
fn fmix64(mut k: u64) -> u64 {
    k ^= k >> 33;
    k = k.wrapping_mul(0xff51_afd7_ed55_8ccd);
    k ^= k >> 33;
    k = k.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    k ^= k >> 33;
    k
}

#[inline]
fn mix_k1(k1: u64) -> u64 {
    k1.wrapping_mul(C1).rotate_left(31).wrapping_mul(C2)
}

#[inline]
fn mix_k2(k2: u64) -> u64 {
    k2.wrapping_mul(C2).rotate_left(33).wrapping_mul(C1)
}

/// Returns the two 64-bit halves `(h1, h2)` of the 128-bit digest.
pub fn murmur3_x64_128(data: &[u8], seed: u64) -> (u64, u64) {
    let mut h1 = seed;
    let mut h2 = seed;

    let mut blocks = data.chunks_exact(16);
    for block in &mut blocks {
        let k1 = u64::from_le_bytes(block[..8].try_into().unwrap());
        let k2 = u64::from_le_bytes(block[8..].try_into().unwrap());

        h1 ^= mix_k1(k1);
        h1 = h1.rotate_left(27).wrapping_add(h2);
        h1 = h1.wrapping_mul(5).wrapping_add(0x52dc_e729);

        h2 ^= mix_k2(k2);
        h2 = h2.rotate_left(31).wrapping_add(h1);
        h2 = h2.wrapping_mul(5).wrapping_add(0x3849_5ab5);
    }

    let tail = blocks.remainder();
    if !tail.is_empty() {
        let mut buf = [0u8; 16];
        buf[..tail.len()].copy_from_slice(tail);
        let k1 = u64::from_le_bytes(buf[..8].try_into().unwrap());
        let k2 = u64::from_le_bytes(buf[8..].try_into().unwrap());
        if tail.len() > 8 {
            h2 ^= mix_k2(k2);
        }
        h1 ^= mix_k1(k1);
    }

    let len = data.len() as u64;
    h1 ^= len;
    h2 ^= len;
    h1 = h1.wrapping_add(h2);
    h2 = h2.wrapping_add(h1);
    h1 = fmix64(h1);
    h2 = fmix64(h2);
    h1 = h1.wrapping_add(h2);
    h2 = h2.wrapping_add(h1);
    (h1, h2)
}

/// Per-key hash state: one digest, from which every row's column follows
/// as `(h1 + row * h2) mod width` with `h2` forced odd.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowHasher {
    h1: u64,
    h2: u64,
}

impl RowHasher {
    pub fn new(key: &[u8], seed: u64) -> Self {
        let (h1, h2) = murmur3_x64_128(key, seed);
        RowHasher { h1, h2: h2 | 1 }
    }

    #[inline]
    pub fn column(&self, row: usize, width: usize) -> usize {
        let combined = self.h1.wrapping_add((row as u64).wrapping_mul(self.h2));
        (combined % width as u64) as usize
    }
}
