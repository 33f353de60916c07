//! Counter-mode keystream standing in for a PRNG.
//!
//! Not cryptographic. The seed is absorbed into two 64-bit lanes with a
//! SplitMix64 finalizer and output word `i` is the finalizer applied to
//! the lanes and the counter `i`. Any real PRNG with a distinguishing
//! advantage `delta(n)` can replace it through [`Keystream`].

use crate::error::{domain, Result};

/// Deterministic expansion of a seed into an unbounded bit sequence.
pub trait Keystream {
    /// Bit `i` of the output.
    fn bit(&self, i: u64) -> bool;

    fn bits(&self, start: u64, len: usize) -> Vec<bool> {
        (start..start + len as u64).map(|i| self.bit(i)).collect()
    }
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterKeystream {
    lanes: [u64; 2],
}

impl CounterKeystream {
    pub fn new(seed: &[bool]) -> Result<Self> {
        if seed.is_empty() {
            return Err(domain("keystream seed must be nonempty"));
        }
        let mut lanes = [0x243f_6a88_85a3_08d3 ^ seed.len() as u64, 0x1319_8a2e_0370_7344];
        for chunk in seed.chunks(64) {
            let word = chunk.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64);
            lanes[0] = mix64(lanes[0] ^ word).wrapping_add(GOLDEN);
            lanes[1] = mix64(lanes[1].rotate_left(23) ^ word ^ lanes[0]);
        }
        Ok(CounterKeystream { lanes })
    }

    pub fn word(&self, counter: u64) -> u64 {
        let x = mix64(self.lanes[1] ^ counter.wrapping_mul(GOLDEN));
        mix64(self.lanes[0] ^ x)
    }
}

impl Keystream for CounterKeystream {
    fn bit(&self, i: u64) -> bool {
        (self.word(i / 64) >> (63 - i % 64)) & 1 == 1
    }
}

/// First `length` bits of the keystream for `seed`.
pub fn keystream(seed: &[bool], length: usize) -> Result<Vec<bool>> {
    Ok(CounterKeystream::new(seed)?.bits(0, length))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed(n: usize, salt: u64) -> Vec<bool> {
        (0..n as u64).map(|i| mix64(i ^ salt) & 1 == 1).collect()
    }

    #[test]
    fn deterministic_and_empty() {
        let s = seed(128, 1);
        assert_eq!(keystream(&s, 500).unwrap(), keystream(&s, 500).unwrap());
        assert!(keystream(&s, 0).unwrap().is_empty());
        assert!(keystream(&[], 8).is_err());
    }

    #[test]
    fn prefix_stable() {
        let s = seed(40, 2);
        let long = keystream(&s, 1000).unwrap();
        assert_eq!(&long[..300], &keystream(&s, 300).unwrap()[..]);
        let ks = CounterKeystream::new(&s).unwrap();
        assert_eq!(ks.bits(700, 300), long[700..].to_vec());
    }

    #[test]
    fn one_bit_seed_change_avalanches() {
        for flip in [0usize, 63, 64, 127] {
            let a = seed(128, 3);
            let mut b = a.clone();
            b[flip] = !b[flip];
            let (ka, kb) = (keystream(&a, 1024).unwrap(), keystream(&b, 1024).unwrap());
            let dist = ka.iter().zip(&kb).filter(|(x, y)| x != y).count();
            assert!((412..=612).contains(&dist), "flip {flip}: distance {dist}");
        }
    }

    #[test]
    fn output_is_balanced() {
        let k = keystream(&seed(16, 4), 100_000).unwrap();
        let ones = k.iter().filter(|&&b| b).count() as f64;
        // 5 sigma for a fair coin
        assert!((ones - 50_000.0).abs() < 5.0 * 158.2);
    }
}
