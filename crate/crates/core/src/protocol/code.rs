//! Error-correcting codes over `D`-ary symbols.

use serde::Serialize;

use crate::error::{domain, Result};

/// Result of decoding a received word.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Decoded {
    pub symbols: Vec<u64>,
    /// Groups with no strict plurality. Their output symbol is unreliable.
    pub uncorrected_groups: usize,
}

impl Decoded {
    pub fn uncorrected(&self) -> bool {
        self.uncorrected_groups > 0
    }
}

/// A block code over the alphabet `0..alphabet_size()`.
pub trait SymbolCode {
    fn alphabet_size(&self) -> u64;
    /// Information symbols per channel symbol.
    fn rate(&self) -> f64;
    fn encode(&self, info: &[u64]) -> Result<Vec<u64>>;
    fn decode(&self, received: &[u64]) -> Result<Decoded>;
}

/// `r`-fold repetition with plurality decoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RepetitionCode {
    pub alphabet_size: u64,
    pub repeat: usize,
}

impl RepetitionCode {
    pub fn new(alphabet_size: u64, repeat: usize) -> Result<Self> {
        if alphabet_size < 2 || repeat == 0 {
            return Err(domain("repetition code needs D >= 2 and r >= 1"));
        }
        Ok(RepetitionCode { alphabet_size, repeat })
    }

    fn check(&self, symbols: &[u64]) -> Result<()> {
        match symbols.iter().find(|&&s| s >= self.alphabet_size) {
            Some(s) => Err(domain(format!("symbol {s} outside alphabet of size {}", self.alphabet_size))),
            None => Ok(()),
        }
    }
}

impl SymbolCode for RepetitionCode {
    fn alphabet_size(&self) -> u64 {
        self.alphabet_size
    }

    fn rate(&self) -> f64 {
        1.0 / self.repeat as f64
    }

    fn encode(&self, info: &[u64]) -> Result<Vec<u64>> {
        self.check(info)?;
        Ok(info.iter().flat_map(|&s| std::iter::repeat_n(s, self.repeat)).collect())
    }

    fn decode(&self, received: &[u64]) -> Result<Decoded> {
        if !received.len().is_multiple_of(self.repeat) {
            return Err(domain(format!(
                "received length {} is not a multiple of r = {}",
                received.len(),
                self.repeat
            )));
        }
        self.check(received)?;
        let mut uncorrected_groups = 0;
        let symbols = received
            .chunks(self.repeat)
            .map(|group| {
                let mut sorted = group.to_vec();
                sorted.sort_unstable();
                // (count, symbol) runs; r is small
                let mut best = (0usize, group[0]);
                let mut tied = false;
                for run in sorted.chunk_by(|a, b| a == b) {
                    if run.len() > best.0 {
                        best = (run.len(), run[0]);
                        tied = false;
                    } else if run.len() == best.0 {
                        tied = true;
                    }
                }
                if tied {
                    uncorrected_groups += 1;
                    group[0]
                } else {
                    best.1
                }
            })
            .collect();
        Ok(Decoded { symbols, uncorrected_groups })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn repetition_examples() {
        let id = RepetitionCode::new(8, 1).unwrap();
        assert_eq!(id.encode(&[3, 1, 7]).unwrap(), vec![3, 1, 7]);
        let r3 = RepetitionCode::new(8, 3).unwrap();
        assert_eq!(r3.encode(&[5]).unwrap(), vec![5, 5, 5]);
        assert_eq!(r3.rate(), 1.0 / 3.0);
        let d = r3.decode(&[5, 5, 2]).unwrap();
        assert_eq!(d.symbols, vec![5]);
        assert!(!d.uncorrected());
        assert!(r3.decode(&[1, 2, 3]).unwrap().uncorrected());
        assert!(r3.decode(&[1, 2]).is_err());
        assert!(r3.encode(&[8]).is_err());
        assert!(r3.decode(&[9, 9, 9]).is_err());
    }

    #[test]
    fn residual_error_under_symmetric_noise() {
        let d = 16u64;
        let code = RepetitionCode::new(d, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &delta in &[0.02, 0.05, 0.1] {
            let trials = 200_000;
            let mut failures = 0;
            for _ in 0..trials {
                let sent = rng.random_range(0..d);
                let word: Vec<u64> = code
                    .encode(&[sent])
                    .unwrap()
                    .into_iter()
                    .map(|s| {
                        if rng.random::<f64>() < delta {
                            (s + rng.random_range(1..d)) % d
                        } else {
                            s
                        }
                    })
                    .collect();
                let out = code.decode(&word).unwrap();
                if out.uncorrected() || out.symbols[0] != sent {
                    failures += 1;
                }
            }
            let rate = failures as f64 / trials as f64;
            assert!(rate <= 3.0 * delta * delta, "delta {delta}: residual {rate}");
        }
    }

    proptest! {
        #[test]
        fn noiseless_roundtrip(info in prop::collection::vec(0u64..32, 0..40), r in 1usize..6) {
            let code = RepetitionCode::new(32, r).unwrap();
            let out = code.decode(&code.encode(&info).unwrap()).unwrap();
            prop_assert_eq!(out.symbols, info);
            prop_assert_eq!(out.uncorrected_groups, 0);
        }
    }
}
