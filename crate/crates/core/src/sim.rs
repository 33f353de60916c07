//! Photon-level Monte Carlo of the block protocol.
//!
//! Detection is lossless with unit efficiency: the signal mode always
//! clicks. Each of the other `D - 1` modes of the chosen block clicks
//! independently with probability `p_c`. Bob decodes the clicked mode, and
//! picks uniformly among the clicked modes when there is more than one.
//! Modes outside the chosen block never reach the decoder and are not
//! simulated.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::{block_error_delta, ProtocolParams};
use crate::error::{domain, Error, Result};

/// What one simulation needs from a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelConfig {
    pub block_size: u64,
    pub blocks: u64,
    pub p_click: f64,
}

impl ChannelConfig {
    pub fn new(block_size: u64, blocks: u64, p_click: f64) -> Result<Self> {
        if block_size == 0 || blocks == 0 {
            return Err(domain("block size and block count must be at least 1"));
        }
        if !(0.0..1.0).contains(&p_click) {
            return Err(domain(format!("click probability must lie in [0, 1), got {p_click}")));
        }
        Ok(ChannelConfig { block_size, blocks, p_click })
    }

    /// Key bits spent per run to name the block: `ceil(log2 M)`.
    pub fn key_bits_per_run(&self) -> u32 {
        ceil_log2(self.blocks)
    }
}

impl From<&ProtocolParams> for ChannelConfig {
    fn from(p: &ProtocolParams) -> Self {
        ChannelConfig { block_size: p.block_size, blocks: p.blocks, p_click: p.click_probability() }
    }
}

pub(crate) fn ceil_log2(x: u64) -> u32 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}

/// Sequential reader over a shared key.
#[derive(Debug, Clone)]
pub struct KeyBits<'a> {
    bits: &'a [bool],
    pos: usize,
}

impl<'a> KeyBits<'a> {
    pub fn new(bits: &'a [bool]) -> Self {
        KeyBits { bits, pos: 0 }
    }

    /// Reads `n` bits MSB first.
    pub fn take(&mut self, n: u32) -> Result<u64> {
        let n = n as usize;
        if self.pos + n > self.bits.len() {
            return Err(Error::KeyExhausted {
                needed: n as u64,
                available: (self.bits.len() - self.pos) as u64,
            });
        }
        let v = self.bits[self.pos..self.pos + n].iter().fold(0u64, |acc, &b| (acc << 1) | b as u64);
        self.pos += n;
        Ok(v)
    }

    pub fn consumed(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.bits.len() - self.pos
    }
}

/// One protocol run as seen by Bob's detector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunOutcome {
    pub chosen_block: u64,
    pub signal_mode: u64,
    /// Clicked modes within the chosen block, ascending. Always contains
    /// `signal_mode`.
    pub click_set: Vec<u64>,
    pub decoded_mode: u64,
    /// At least one click besides the signal.
    pub collision: bool,
    pub symbol_error: bool,
}

/// Sends one photon in `signal_mode` of `block` and decodes it.
pub fn transmit<R: Rng + ?Sized>(
    channel: &ChannelConfig,
    block: u64,
    signal_mode: u64,
    rng: &mut R,
) -> Result<RunOutcome> {
    if block >= channel.blocks || signal_mode >= channel.block_size {
        return Err(domain(format!(
            "block {block} / mode {signal_mode} outside {} x {}",
            channel.blocks, channel.block_size
        )));
    }
    let others = channel.block_size - 1;
    let stray = if others == 0 || channel.p_click == 0.0 {
        0
    } else {
        Binomial::new(others, channel.p_click)
            .map_err(|e| domain(e.to_string()))?
            .sample(rng)
    };
    let mut click_set: Vec<u64> = index::sample(rng, others as usize, stray as usize)
        .into_iter()
        .map(|i| {
            let i = i as u64;
            if i < signal_mode { i } else { i + 1 }
        })
        .collect();
    click_set.push(signal_mode);
    click_set.sort_unstable();

    let decoded_mode = if click_set.len() == 1 {
        signal_mode
    } else {
        click_set[rng.random_range(0..click_set.len())]
    };
    Ok(RunOutcome {
        chosen_block: block,
        signal_mode,
        collision: click_set.len() > 1,
        symbol_error: decoded_mode != signal_mode,
        click_set,
        decoded_mode,
    })
}

/// One run: the block comes from `ceil(log2 M)` key bits, the signal mode
/// is uniform over the block.
///
/// When `M` is not a power of two the key value is reduced modulo `M`.
pub fn simulate_run<R: Rng + ?Sized>(
    channel: &ChannelConfig,
    key: &mut KeyBits<'_>,
    rng: &mut R,
) -> Result<RunOutcome> {
    let block = key.take(channel.key_bits_per_run())? % channel.blocks;
    let mode = rng.random_range(0..channel.block_size);
    transmit(channel, block, mode, rng)
}

/// Independent, reproducible generator for trial `trial` of a campaign.
pub fn trial_rng(master_seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial);
    rng
}

/// Estimate with a normal-approximation 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateEstimate {
    pub count: u64,
    pub rate: f64,
    /// `1.96 sqrt(p (1 - p) / trials)`.
    pub ci_half_width: f64,
}

impl RateEstimate {
    fn new(count: u64, trials: u64) -> Self {
        let rate = count as f64 / trials as f64;
        RateEstimate { count, rate, ci_half_width: 1.96 * (rate * (1.0 - rate) / trials as f64).sqrt() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulationReport {
    pub channel: ChannelConfig,
    pub trials: u64,
    pub master_seed: u64,
    pub collision: RateEstimate,
    pub symbol_error: RateEstimate,
    pub analytic_delta: f64,
    /// `(collision rate - delta) / sqrt(delta (1 - delta) / trials)`.
    pub z_score: f64,
    pub consumed_bits_per_run: u32,
    pub produced_raw_bits_per_run: f64,
    pub total_consumed_bits: u64,
}

const CHUNK: u64 = 4096;

/// Runs `trials` independent runs and aggregates them. Trial `i` draws all
/// its randomness, key bits included, from [`trial_rng`]`(master_seed, i)`,
/// so the report does not depend on how trials are scheduled.
pub fn run_campaign(channel: &ChannelConfig, trials: u64, master_seed: u64) -> Result<SimulationReport> {
    if trials == 0 {
        return Err(domain("a campaign needs at least one trial"));
    }
    let key_bits = channel.key_bits_per_run();
    let chunks = trials.div_ceil(CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<(u64, u64)> {
            let mut collisions = 0;
            let mut errors = 0;
            let mut key = vec![false; key_bits as usize];
            for trial in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                let mut rng = trial_rng(master_seed, trial);
                key.iter_mut().for_each(|b| *b = rng.random());
                let out = simulate_run(channel, &mut KeyBits::new(&key), &mut rng)?;
                collisions += out.collision as u64;
                errors += out.symbol_error as u64;
            }
            Ok((collisions, errors))
        })
        .collect::<Result<Vec<_>>>()?;
    let (collisions, errors) = counts.into_iter().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));

    let analytic_delta = block_error_delta(channel.block_size, channel.p_click)?;
    let collision = RateEstimate::new(collisions, trials);
    let sigma = (analytic_delta * (1.0 - analytic_delta) / trials as f64).sqrt();
    let z_score = if sigma > 0.0 {
        (collision.rate - analytic_delta) / sigma
    } else if collision.rate == analytic_delta {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(SimulationReport {
        channel: *channel,
        trials,
        master_seed,
        collision,
        symbol_error: RateEstimate::new(errors, trials),
        analytic_delta,
        z_score,
        consumed_bits_per_run: key_bits,
        produced_raw_bits_per_run: (channel.block_size as f64).log2(),
        total_consumed_bits: trials * key_bits as u64,
    })
}
