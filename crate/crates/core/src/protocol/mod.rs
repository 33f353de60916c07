//! End-to-end key-expansion sessions over the simulated channel.
//!
//! Two modes:
//!
//! * information-theoretic: every run spends `log2 M` bits of the shared key
//!   to pick a block and carries `log2 D` fresh random bits in the mode;
//! * computational: a short seed `k0` drives a keystream that picks the
//!   blocks, and a longer fresh key `k1` is sent through a `D`-ary code.
//!
//! `M` and `D` must be powers of two so key and message bits map onto whole
//! symbols. Message randomness comes from a generator seeded by
//! `master_seed`, which makes transcripts reproducible; it is a simulation
//! convenience, not a source of secrecy.

pub mod code;
pub mod keystream;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analytic::{block_error_delta, dary_capacity, ProtocolParams};
use crate::error::{domain, Error, Result};
use crate::sim::{transmit, ChannelConfig, KeyBits};

pub use code::{Decoded, RepetitionCode, SymbolCode};
pub use keystream::{keystream, CounterKeystream, Keystream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionMode {
    InfoTheoretic,
    Computational,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionStatus {
    /// All runs executed; in computational mode Bob also recovered `k1`.
    Completed,
    /// Bob's decoded key differs from Alice's.
    Failed,
    /// The shared key ran out before all runs were executed.
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KeyLedger {
    pub initial_key_bits: u64,
    pub consumed_bits: u64,
    pub produced_bits: u64,
    pub net_bits: i64,
}

impl KeyLedger {
    fn new(initial_key_bits: u64, consumed_bits: u64, produced_bits: u64) -> Self {
        KeyLedger {
            initial_key_bits,
            consumed_bits,
            produced_bits,
            net_bits: produced_bits as i64 - consumed_bits as i64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SecurityBudget {
    pub eps_covert: f64,
    pub delta_prng: f64,
    /// `2 (eps_covert + delta_prng)`.
    pub secrecy_bound: f64,
}

/// Secrecy of a key sent covertly: an `eps`-covert channel driven by a
/// PRNG with advantage `delta` yields a `2 (eps + delta)`-secret key.
pub fn security_budget(eps_covert: f64, delta_prng: f64) -> Result<SecurityBudget> {
    for (name, v) in [("eps_covert", eps_covert), ("delta_prng", delta_prng)] {
        if !(0.0..=0.5).contains(&v) {
            return Err(domain(format!("{name} must lie in [0, 1/2], got {v}")));
        }
    }
    Ok(SecurityBudget { eps_covert, delta_prng, secrecy_bound: 2.0 * (eps_covert + delta_prng) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RunRecord {
    pub decoded_mode: u64,
    pub collision: bool,
    pub symbol_error: bool,
}

/// Capacity-based accounting for information-theoretic sessions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReliableAccounting {
    pub delta: f64,
    pub capacity_bits_per_run: f64,
    pub reliable_produced_bits: f64,
    pub reliable_net_bits: f64,
    pub reliable_net_bits_per_run: f64,
    pub raw_net_bits_per_run: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionTranscript {
    pub mode: SessionMode,
    pub params: ProtocolParams,
    pub master_seed: u64,
    pub status: SessionStatus,
    pub runs: u64,
    /// `(block, mode)` of every run, in order.
    pub symbols_sent: Vec<(u64, u64)>,
    pub decode_results: Vec<RunRecord>,
    pub symbol_errors: u64,
    pub ledger: KeyLedger,
    pub security: SecurityBudget,
    /// Information-theoretic mode only.
    pub reliable: Option<ReliableAccounting>,
    /// Computational mode only.
    pub computational: Option<ComputationalSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComputationalSummary {
    pub seed_bits: u64,
    pub new_key_bits: u64,
    pub code_repeat: usize,
    pub code_rate: f64,
    pub codeword_symbols: u64,
    pub uncorrected_groups: usize,
    pub key_recovered: bool,
}

impl SessionTranscript {
    /// Pretty JSON with the field names above. Stable for identical inputs.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcript serializes")
    }
}

fn session_channel(params: &ProtocolParams) -> Result<(ChannelConfig, u32, u32)> {
    if !params.blocks.is_power_of_two() || !params.block_size.is_power_of_two() {
        return Err(domain(format!(
            "sessions need M and D to be powers of two, got M={}, D={}",
            params.blocks, params.block_size
        )));
    }
    let channel = ChannelConfig::from(params);
    Ok((channel, params.blocks.trailing_zeros(), params.block_size.trailing_zeros()))
}

fn bits_to_u64(bits: &[bool]) -> u64 {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as u64)
}

/// Information-theoretic session: `runs` runs, each spending `log2 M` bits
/// of `shared_key` on the block and carrying `log2 D` fresh random bits.
/// Running out of key stops the session with the runs executed so far.
pub fn session_info_theoretic(
    params: &ProtocolParams,
    runs: u64,
    shared_key: &[bool],
    master_seed: u64,
) -> Result<SessionTranscript> {
    let (channel, key_bits, msg_bits) = session_channel(params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    let mut alice_key = KeyBits::new(shared_key);
    let mut bob_key = KeyBits::new(shared_key);

    let mut symbols_sent = Vec::new();
    let mut decode_results = Vec::new();
    let mut status = SessionStatus::Completed;
    for _ in 0..runs {
        let block = match alice_key.take(key_bits) {
            Ok(b) => b,
            Err(Error::KeyExhausted { .. }) => {
                status = SessionStatus::Aborted;
                break;
            }
            Err(e) => return Err(e),
        };
        let message: Vec<bool> = (0..msg_bits).map(|_| rng.random()).collect();
        let mode = bits_to_u64(&message);
        let out = transmit(&channel, block, mode, &mut rng)?;
        let bob_block = bob_key.take(key_bits)?;
        debug_assert_eq!(bob_block, out.chosen_block);
        symbols_sent.push((block, mode));
        decode_results.push(RunRecord {
            decoded_mode: out.decoded_mode,
            collision: out.collision,
            symbol_error: out.symbol_error,
        });
    }

    let done = symbols_sent.len() as u64;
    let consumed = alice_key.consumed() as u64;
    let ledger = KeyLedger::new(shared_key.len() as u64, consumed, done * msg_bits as u64);
    let delta = block_error_delta(params.block_size, channel.p_click)?;
    let capacity = if params.block_size >= 2 { dary_capacity(params.block_size, delta)? } else { 0.0 };
    let reliable_produced = done as f64 * capacity;
    let reliable = ReliableAccounting {
        delta,
        capacity_bits_per_run: capacity,
        reliable_produced_bits: reliable_produced,
        reliable_net_bits: reliable_produced - consumed as f64,
        reliable_net_bits_per_run: capacity - key_bits as f64,
        raw_net_bits_per_run: msg_bits as f64 - key_bits as f64,
    };
    Ok(SessionTranscript {
        mode: SessionMode::InfoTheoretic,
        params: *params,
        master_seed,
        status,
        runs: done,
        symbol_errors: decode_results.iter().filter(|r| r.symbol_error).count() as u64,
        symbols_sent,
        decode_results,
        ledger,
        security: security_budget(params.eps, 0.0)?,
        reliable: Some(reliable),
        computational: None,
    })
}

/// Computational session: `k0` seeds the keystream that schedules blocks,
/// Alice draws `new_key_bits` fresh bits, encodes them and sends one
/// codeword symbol per run. Bob decodes with the same keystream.
pub fn session_computational<C: SymbolCode>(
    params: &ProtocolParams,
    k0: &[bool],
    new_key_bits: u64,
    code: &C,
    delta_prng: f64,
    master_seed: u64,
) -> Result<SessionTranscript> {
    run_computational(params, k0, k0, new_key_bits, code, delta_prng, master_seed)
}

/// Like [`session_computational`] with Bob holding his own seed, which
/// shows what happens when the two seeds disagree.
pub fn session_computational_with_bob_seed<C: SymbolCode>(
    params: &ProtocolParams,
    alice_k0: &[bool],
    bob_k0: &[bool],
    new_key_bits: u64,
    code: &C,
    delta_prng: f64,
    master_seed: u64,
) -> Result<SessionTranscript> {
    run_computational(params, alice_k0, bob_k0, new_key_bits, code, delta_prng, master_seed)
}

fn run_computational<C: SymbolCode>(
    params: &ProtocolParams,
    alice_k0: &[bool],
    bob_k0: &[bool],
    new_key_bits: u64,
    code: &C,
    delta_prng: f64,
    master_seed: u64,
) -> Result<SessionTranscript> {
    let (channel, key_bits, msg_bits) = session_channel(params)?;
    if code.alphabet_size() != params.block_size {
        return Err(domain(format!(
            "code alphabet {} does not match D = {}",
            code.alphabet_size(),
            params.block_size
        )));
    }
    if msg_bits == 0 || !new_key_bits.is_multiple_of(msg_bits as u64) {
        return Err(domain(format!(
            "new key length {new_key_bits} must be a positive multiple of log2 D = {msg_bits}"
        )));
    }
    let security = security_budget(params.eps, delta_prng)?;
    let alice_stream = CounterKeystream::new(alice_k0)?;
    let bob_stream = CounterKeystream::new(bob_k0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);

    let k1: Vec<bool> = (0..new_key_bits).map(|_| rng.random()).collect();
    let info: Vec<u64> = k1.chunks(msg_bits as usize).map(bits_to_u64).collect();
    let codeword = code.encode(&info)?;

    let mut symbols_sent = Vec::with_capacity(codeword.len());
    let mut decode_results = Vec::with_capacity(codeword.len());
    let mut received = Vec::with_capacity(codeword.len());
    for (j, &symbol) in codeword.iter().enumerate() {
        let offset = j as u64 * key_bits as u64;
        let block = bits_to_u64(&alice_stream.bits(offset, key_bits as usize));
        let bob_block = bits_to_u64(&bob_stream.bits(offset, key_bits as usize));
        let out = transmit(&channel, block, symbol, &mut rng)?;
        let decoded = if bob_block == block {
            out.decoded_mode
        } else {
            noise_only_decode(&channel, &mut rng)
        };
        symbols_sent.push((block, symbol));
        decode_results.push(RunRecord {
            decoded_mode: decoded,
            collision: out.collision,
            symbol_error: decoded != symbol,
        });
        received.push(decoded);
    }

    let decoded = code.decode(&received)?;
    let recovered: Vec<bool> = decoded
        .symbols
        .iter()
        .flat_map(|&s| (0..msg_bits).rev().map(move |b| (s >> b) & 1 == 1))
        .collect();
    let key_recovered = !decoded.uncorrected() && recovered == k1;
    let seed_bits = alice_k0.len() as u64;
    let ledger = KeyLedger::new(seed_bits, seed_bits, if key_recovered { new_key_bits } else { 0 });

    Ok(SessionTranscript {
        mode: SessionMode::Computational,
        params: *params,
        master_seed,
        status: if key_recovered { SessionStatus::Completed } else { SessionStatus::Failed },
        runs: codeword.len() as u64,
        symbol_errors: decode_results.iter().filter(|r| r.symbol_error).count() as u64,
        symbols_sent,
        decode_results,
        ledger,
        security,
        reliable: None,
        computational: Some(ComputationalSummary {
            seed_bits,
            new_key_bits,
            code_repeat: (1.0 / code.rate()).round() as usize,
            code_rate: code.rate(),
            codeword_symbols: codeword.len() as u64,
            uncorrected_groups: decoded.uncorrected_groups,
            key_recovered,
        }),
    })
}

/// Bob watching a block without the signal: uniform among noise clicks,
/// or mode 0 when nothing clicks.
fn noise_only_decode<R: Rng>(channel: &ChannelConfig, rng: &mut R) -> u64 {
    let clicks: Vec<u64> =
        (0..channel.block_size).filter(|_| rng.random::<f64>() < channel.p_click).collect();
    if clicks.is_empty() { 0 } else { clicks[rng.random_range(0..clicks.len())] }
}
