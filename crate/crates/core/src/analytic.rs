//! Closed-form model of the block key-expansion protocol.
//!
//! All logarithms are base 2. The detection-bias bound comes from the
//! i.i.d. bounding protocol: `eps <= beta / ((1 - p0) * sqrt(N))`, which
//! fixes the total number of modes `N` for a target bias. Splitting `N`
//! into `M` blocks of `D` modes costs `log2 M` key bits per run and
//! delivers at most the capacity of a `D`-ary symmetric channel whose
//! error probability is the chance of a stray thermal click in the block.

use serde::Serialize;

use crate::error::{domain, Result};

/// Default cap on `D * nbar`, the "few noise clicks per block" regime.
pub const DEFAULT_ALPHA_MAX: f64 = 0.1;

/// Base-2 binary entropy with `0 log 0 = 0`.
pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(domain(format!("binary entropy needs 0 <= p <= 1, got {p}")));
    }
    Ok(entropy_term(p) + entropy_term(1.0 - p))
}

fn entropy_term(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        -p * p.log2()
    }
}

/// Square-root-law constant of the thermal single-photon i.i.d. protocol.
pub fn beta_thermal(d: f64, nbar: f64) -> Result<f64> {
    if !(d > 0.0) || !(nbar > 0.0) {
        return Err(domain(format!("beta needs d > 0 and nbar > 0, got d={d}, nbar={nbar}")));
    }
    Ok(d / (4.0 * (2.0 * nbar).sqrt()))
}

/// Probability that the i.i.d. protocol sends no signal at all.
///
/// With `modes = Some(N)` this is `(1 - d/N)^N`; with `None` it is the
/// large-`N` limit `e^{-d}`.
pub fn p_zero_signals(d: f64, modes: Option<u64>) -> Result<f64> {
    if !(d > 0.0) {
        return Err(domain(format!("p0 needs d > 0, got {d}")));
    }
    match modes {
        None => Ok((-d).exp()),
        Some(n) => {
            let n = n as f64;
            if d > n {
                return Err(domain(format!("p0 needs d <= N, got d={d}, N={n}")));
            }
            Ok((n * (-d / n).ln_1p()).exp())
        }
    }
}

/// Per-mode probability of at least one thermal photon: `nbar / (1 + nbar)`.
pub fn p_click_thermal(nbar: f64) -> Result<f64> {
    if !(nbar >= 0.0) || !nbar.is_finite() {
        return Err(domain(format!("click probability needs finite nbar >= 0, got {nbar}")));
    }
    Ok(nbar / (1.0 + nbar))
}

/// Probability of at least one click among the `D - 1` modes of a block
/// that do not carry the signal.
pub fn block_error_delta(block_size: u64, p_click: f64) -> Result<f64> {
    if block_size == 0 {
        return Err(domain("block size must be at least 1"));
    }
    if !(0.0..1.0).contains(&p_click) {
        return Err(domain(format!("click probability must lie in [0, 1), got {p_click}")));
    }
    let others = (block_size - 1) as f64;
    Ok(-(others * (-p_click).ln_1p()).exp_m1())
}

/// Capacity in bits of the `D`-ary symmetric channel with error `delta`,
/// clamped at zero.
pub fn dary_capacity(block_size: u64, delta: f64) -> Result<f64> {
    if block_size < 2 {
        return Err(domain(format!("capacity needs D >= 2, got {block_size}")));
    }
    let h = binary_entropy(delta)?;
    let d = block_size as f64;
    let c = d.log2() - h - delta * (d - 1.0).log2();
    Ok(c.max(0.0))
}

/// Smallest `N` meeting the bias target with equality:
/// `(beta / (eps (1 - p0)))^2`.
pub fn required_modes(eps: f64, beta: f64, p0: f64) -> Result<f64> {
    if !(eps > 0.0) || !(beta > 0.0) || !(0.0..1.0).contains(&p0) {
        return Err(domain(format!(
            "required modes needs eps > 0, beta > 0, 0 <= p0 < 1; got eps={eps}, beta={beta}, p0={p0}"
        )));
    }
    let root = beta / (eps * (1.0 - p0));
    Ok(root * root)
}

/// Mean signal count `d` normalized so that `beta / (1 - p0) = 1 / sqrt(nbar)`,
/// i.e. the positive root of `d = 4 sqrt(2) (1 - e^{-d})`.
pub fn solve_d() -> f64 {
    let f = |d: f64| d - 4.0 * std::f64::consts::SQRT_2 * (-(-d).exp_m1());
    let (mut lo, mut hi) = (1.0_f64, 10.0_f64);
    debug_assert!(f(lo) < 0.0 && f(hi) > 0.0);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Approximate net key per run with `D = alpha / nbar`, valid for small
/// `alpha` and `nbar` under the normalized `d`.
pub fn approx_net_key(alpha: f64, nbar: f64, eps: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(domain(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if !(nbar > 0.0) || !(eps > 0.0) {
        return Err(domain(format!("nbar and eps must be positive, got nbar={nbar}, eps={eps}")));
    }
    Ok((1.0 - alpha) * (1.0 / nbar).log2() + (2.0 - alpha) * alpha.log2()
        - 2.0 * (1.0 / eps).log2())
}

/// Result of the simplified condition `2 log D > log(1 / (nbar eps^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SimplifiedCheck {
    pub holds: bool,
    /// `D * nbar <= alpha_max`; outside the regime the result is only indicative.
    pub in_regime: bool,
}

pub fn expansion_condition_simplified(
    block_size: u64,
    nbar: f64,
    eps: f64,
    alpha_max: f64,
) -> Result<SimplifiedCheck> {
    if block_size == 0 || !(nbar > 0.0) || !(eps > 0.0) {
        return Err(domain("simplified condition needs D >= 1, nbar > 0, eps > 0"));
    }
    let d = block_size as f64;
    let lhs = 2.0 * d.log2();
    let rhs = -nbar.log2() - 2.0 * eps.log2();
    Ok(SimplifiedCheck {
        holds: lhs > rhs,
        in_regime: d * nbar <= alpha_max,
    })
}

/// One protocol configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProtocolParams {
    /// Mean thermal photons per mode.
    pub nbar: f64,
    /// Target detection bias.
    pub eps: f64,
    /// Mean signal count of the bounding i.i.d. protocol.
    pub d: f64,
    /// Modes per block, `D`.
    pub block_size: u64,
    /// Number of blocks, `M`.
    pub blocks: u64,
    pub alpha_max: f64,
}

impl ProtocolParams {
    pub fn new(
        nbar: f64,
        eps: f64,
        d: f64,
        block_size: u64,
        blocks: u64,
        alpha_max: f64,
    ) -> Result<Self> {
        // nbar = 0 is a valid (noiseless) channel for sessions; the analysis
        // itself needs nbar > 0 and rejects it there.
        if !(nbar >= 0.0) || !nbar.is_finite() {
            return Err(domain(format!("nbar must be finite and >= 0, got {nbar}")));
        }
        if !(eps > 0.0 && eps < 0.5) {
            return Err(domain(format!("eps must lie in (0, 1/2), got {eps}")));
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(domain(format!("d must be positive, got {d}")));
        }
        if block_size == 0 || blocks == 0 {
            return Err(domain("block size and block count must be at least 1"));
        }
        if block_size.checked_mul(blocks).is_none() {
            return Err(domain("M * D overflows"));
        }
        if !(alpha_max > 0.0) {
            return Err(domain(format!("alpha_max must be positive, got {alpha_max}")));
        }
        Ok(ProtocolParams { nbar, eps, d, block_size, blocks, alpha_max })
    }

    /// Like [`ProtocolParams::new`] with `M = ceil(N_req / D)`, the fewest
    /// whole blocks that still meet the bias target.
    pub fn sized(nbar: f64, eps: f64, d: f64, block_size: u64, alpha_max: f64) -> Result<Self> {
        let n_req = thermal_required_modes(nbar, eps, d)?;
        let blocks = (n_req / block_size.max(1) as f64 * (1.0 - 1e-12)).ceil().max(1.0) as u64;
        Self::new(nbar, eps, d, block_size, blocks, alpha_max)
    }

    /// Total modes `N = M * D`.
    pub fn modes(&self) -> u64 {
        self.block_size * self.blocks
    }

    pub fn click_probability(&self) -> f64 {
        self.nbar / (1.0 + self.nbar)
    }

    pub fn in_simplified_regime(&self) -> bool {
        self.block_size as f64 * self.nbar <= self.alpha_max
    }
}

fn thermal_required_modes(nbar: f64, eps: f64, d: f64) -> Result<f64> {
    let beta = beta_thermal(d, nbar)?;
    let p0 = p_zero_signals(d, None)?;
    required_modes(eps, beta, p0)
}

/// Analytic outputs for one block size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpansionAnalysis {
    pub nbar: f64,
    pub eps: f64,
    pub d: f64,
    pub alpha_max: f64,
    pub block_size: u64,
    /// `M` used for key accounting. Real-valued when blocks are not allocated.
    pub blocks: f64,
    /// `N` required for the bias target.
    pub modes_required: f64,
    pub beta: f64,
    pub p0: f64,
    pub p_c: f64,
    pub delta: f64,
    pub capacity_bits: f64,
    pub consumed_bits: f64,
    pub produced_bits: f64,
    pub net_bits: f64,
    pub condition_exact: bool,
    pub condition_simplified: bool,
    /// `D * nbar <= alpha_max`.
    pub in_regime: bool,
    /// `M * D >= N_req`, so the configuration meets the bias target.
    pub meets_bias_target: bool,
}

/// Full analysis with the continuous block count `M = N_req / D`.
pub fn expansion_condition_exact(params: &ProtocolParams) -> Result<ExpansionAnalysis> {
    analyze(params, None)
}

/// Full analysis charging `log2 M` for the allocated integer `params.blocks`.
pub fn expansion_condition_allocated(params: &ProtocolParams) -> Result<ExpansionAnalysis> {
    analyze(params, Some(params.blocks))
}

fn analyze(params: &ProtocolParams, allocated: Option<u64>) -> Result<ExpansionAnalysis> {
    let ProtocolParams { nbar, eps, d, block_size, alpha_max, .. } = *params;
    let beta = beta_thermal(d, nbar)?;
    let p0 = p_zero_signals(d, None)?;
    let modes_required = required_modes(eps, beta, p0)?;
    let p_c = p_click_thermal(nbar)?;
    let delta = block_error_delta(block_size, p_c)?;
    let capacity_bits = if block_size >= 2 { dary_capacity(block_size, delta)? } else { 0.0 };

    let blocks = match allocated {
        Some(m) => m as f64,
        None => modes_required / block_size as f64,
    };
    let consumed_bits = blocks.log2();
    let produced_bits = capacity_bits;

    let log_d = (block_size as f64).log2();
    let threshold = (beta / (eps * (1.0 - p0))).log2();
    let condition_exact = (2.0 - delta) * log_d > 2.0 * threshold + binary_entropy(delta)?;
    let simplified = expansion_condition_simplified(block_size, nbar, eps, alpha_max)?;

    Ok(ExpansionAnalysis {
        nbar,
        eps,
        d,
        alpha_max,
        block_size,
        blocks,
        modes_required,
        beta,
        p0,
        p_c,
        delta,
        capacity_bits,
        consumed_bits,
        produced_bits,
        net_bits: produced_bits - consumed_bits,
        condition_exact,
        condition_simplified: simplified.holds,
        in_regime: simplified.in_regime,
        meets_bias_target: blocks * block_size as f64 >= modes_required * (1.0 - 1e-12),
    })
}

/// Best block size found by the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockSizeOptimum {
    pub block_size: u64,
    pub analysis: ExpansionAnalysis,
    /// `net_bits > 0`. When false the configuration consumes more key than
    /// it produces and there is no expanding configuration at these inputs.
    pub expanding: bool,
}

/// Largest admissible block size: `D * nbar <= alpha_max` and `D <= N_req`.
pub fn max_block_size(nbar: f64, eps: f64, d: f64, alpha_max: f64) -> Result<u64> {
    let n_req = thermal_required_modes(nbar, eps, d)?;
    let by_regime = (alpha_max / nbar).floor();
    let cap = by_regime.min(n_req.floor()).max(1.0);
    // u64 range is far beyond anything the analysis can use.
    Ok(cap.min(1e15) as u64)
}

const GRID_POINTS_PER_DECADE: f64 = 32.0;

/// Integer block size maximizing `net_bits` of [`expansion_condition_exact`].
///
/// Evaluates a logarithmic grid over `1..=D_max`, then every integer
/// between the grid neighbours of the best grid point. Ties go to the
/// smallest `D`.
pub fn optimize_block_size(
    nbar: f64,
    eps: f64,
    d: f64,
    alpha_max: f64,
) -> Result<BlockSizeOptimum> {
    let d_max = max_block_size(nbar, eps, d, alpha_max)?;
    let eval = |block_size: u64| -> Result<ExpansionAnalysis> {
        let params = ProtocolParams::new(nbar, eps, d, block_size, 1, alpha_max)?;
        expansion_condition_exact(&params)
    };

    let grid = log_grid(d_max);
    let mut best_idx = 0;
    let mut best_net = f64::NEG_INFINITY;
    for (i, &dd) in grid.iter().enumerate() {
        let net = eval(dd)?.net_bits;
        if net > best_net {
            best_net = net;
            best_idx = i;
        }
    }
    let lo = grid[best_idx.saturating_sub(1)];
    let hi = grid[(best_idx + 1).min(grid.len() - 1)];

    let mut best = eval(lo)?;
    for dd in lo + 1..=hi {
        let a = eval(dd)?;
        if a.net_bits > best.net_bits {
            best = a;
        }
    }
    Ok(BlockSizeOptimum { block_size: best.block_size, expanding: best.net_bits > 0.0, analysis: best })
}

fn log_grid(d_max: u64) -> Vec<u64> {
    let decades = (d_max as f64).log10();
    let steps = (decades * GRID_POINTS_PER_DECADE).ceil() as u64;
    let mut grid: Vec<u64> = (0..=steps)
        .map(|k| 10f64.powf(k as f64 / GRID_POINTS_PER_DECADE).round() as u64)
        .filter(|&x| x >= 1 && x <= d_max)
        .collect();
    grid.push(1);
    grid.push(d_max);
    grid.sort_unstable();
    grid.dedup();
    grid
}

/// Best configuration usable by a session: `D` and `M` both powers of two,
/// `D * nbar <= alpha_max`, and `M` the smallest power of two with
/// `M * D >= N_req`. Key accounting charges exactly `log2 M` bits.
pub fn optimize_power_of_two(
    nbar: f64,
    eps: f64,
    d: f64,
    alpha_max: f64,
) -> Result<BlockSizeOptimum> {
    let n_req = thermal_required_modes(nbar, eps, d)?;
    let by_regime = (alpha_max / nbar).floor().max(1.0);
    let mut best: Option<ExpansionAnalysis> = None;
    let mut block_size: u64 = 1;
    while (block_size as f64) <= by_regime && block_size < (1 << 40) {
        let want = (n_req / block_size as f64).max(1.0);
        let blocks = (want.log2() - 1e-12).ceil().max(0.0).exp2() as u64;
        let params = ProtocolParams::new(nbar, eps, d, block_size, blocks, alpha_max)?;
        let a = expansion_condition_allocated(&params)?;
        if best.is_none_or(|b| a.net_bits > b.net_bits) {
            best = Some(a);
        }
        block_size <<= 1;
    }
    let best = best.expect("block size 1 is always admissible");
    Ok(BlockSizeOptimum { block_size: best.block_size, expanding: best.net_bits > 0.0, analysis: best })
}
