//! Exact detection-bias oracles on photon-number-diagonal states.
//!
//! Every state here is diagonal in the Fock basis, so the trace distance
//! between two of them is the total-variation distance between their
//! photon-count distributions. Joint distributions over `N` modes are
//! enumerated pattern by pattern and never stored.
//!
//! Signal model: a signal mode carries one photon on top of an independent
//! thermal background, so its count distribution is the thermal law shifted
//! up by one.
//!
//! Truncation: each mode's counts `0..=cutoff` are kept exactly and all
//! larger counts are merged into a single overflow outcome. Distances are
//! therefore exact distances between coarse-grained (never renormalized)
//! distributions; the overflow mass is reported alongside as an error bar.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Error, Result};

pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-12;

/// Photon-count distribution truncated at `cutoff`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhotonCountDistribution {
    /// Probability of each count `0..=cutoff`.
    pub pmf: Vec<f64>,
    pub cutoff: usize,
    /// Probability of more than `cutoff` photons.
    pub tail_mass: f64,
    /// `tail_mass` exceeds the tolerance the distribution was built with.
    pub truncation_dirty: bool,
}

impl PhotonCountDistribution {
    /// Outcome probabilities with the tail appended as an overflow outcome.
    pub fn outcomes(&self) -> Vec<f64> {
        let mut v = self.pmf.clone();
        v.push(self.tail_mass);
        v
    }
}

fn check_nbar(nbar: f64) -> Result<()> {
    if !(nbar >= 0.0) || !nbar.is_finite() {
        return Err(domain(format!("nbar must be finite and >= 0, got {nbar}")));
    }
    Ok(())
}

/// Bose-Einstein law `p(n) = nbar^n / (1 + nbar)^(n + 1)`.
pub fn thermal_pmf(nbar: f64, cutoff: usize) -> Result<PhotonCountDistribution> {
    thermal_pmf_with_tolerance(nbar, cutoff, DEFAULT_TAIL_TOLERANCE)
}

pub fn thermal_pmf_with_tolerance(
    nbar: f64,
    cutoff: usize,
    tolerance: f64,
) -> Result<PhotonCountDistribution> {
    check_nbar(nbar)?;
    let ratio = nbar / (1.0 + nbar);
    let mut pmf = Vec::with_capacity(cutoff + 1);
    let mut p = 1.0 / (1.0 + nbar);
    for _ in 0..=cutoff {
        pmf.push(p);
        p *= ratio;
    }
    let tail_mass = ratio.powi(cutoff as i32 + 1);
    Ok(PhotonCountDistribution { pmf, cutoff, tail_mass, truncation_dirty: tail_mass > tolerance })
}

/// Thermal law shifted up by the single signal photon.
pub fn signal_pmf(nbar: f64, cutoff: usize) -> Result<PhotonCountDistribution> {
    signal_pmf_with_tolerance(nbar, cutoff, DEFAULT_TAIL_TOLERANCE)
}

pub fn signal_pmf_with_tolerance(
    nbar: f64,
    cutoff: usize,
    tolerance: f64,
) -> Result<PhotonCountDistribution> {
    let thermal = thermal_pmf_with_tolerance(nbar, cutoff, tolerance)?;
    let mut pmf = vec![0.0; cutoff + 1];
    pmf[1..].copy_from_slice(&thermal.pmf[..cutoff]);
    let tail_mass = thermal.tail_mass + thermal.pmf[cutoff];
    Ok(PhotonCountDistribution { pmf, cutoff, tail_mass, truncation_dirty: tail_mass > tolerance })
}

/// Total-variation distance `1/2 sum |p - q|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(domain(format!("support mismatch: {} vs {} outcomes", p.len(), q.len())));
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Enumeration guards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleLimits {
    pub max_modes: usize,
    pub max_cutoff: usize,
    /// Hard cap on joint outcomes `(cutoff + 2)^N`.
    pub max_states: u64,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits { max_modes: 8, max_cutoff: 6, max_states: 1 << 24 }
    }
}

/// Per-mode thermal and signal outcome vectors for one `(nbar, cutoff)`.
#[derive(Debug, Clone)]
pub struct FockOracle {
    pub nbar: f64,
    pub cutoff: usize,
    pub limits: OracleLimits,
    noise: Vec<f64>,
    signal: Vec<f64>,
    /// Overflow probability of one thermal mode.
    mode_tail: f64,
}

impl FockOracle {
    pub fn new(nbar: f64, cutoff: usize) -> Result<Self> {
        Self::with_limits(nbar, cutoff, OracleLimits::default())
    }

    pub fn with_limits(nbar: f64, cutoff: usize, limits: OracleLimits) -> Result<Self> {
        if cutoff > limits.max_cutoff {
            return Err(Error::CapExceeded(format!(
                "cutoff {cutoff} exceeds the limit of {}",
                limits.max_cutoff
            )));
        }
        let thermal = thermal_pmf(nbar, cutoff)?;
        let signal = signal_pmf(nbar, cutoff)?;
        Ok(FockOracle {
            nbar,
            cutoff,
            limits,
            noise: thermal.outcomes(),
            signal: signal.outcomes(),
            mode_tail: signal.tail_mass,
        })
    }

    fn check_modes(&self, modes: usize) -> Result<()> {
        if modes == 0 {
            return Err(domain("need at least one mode"));
        }
        if modes > self.limits.max_modes {
            return Err(Error::CapExceeded(format!(
                "N = {modes} exceeds the enumeration limit of {} modes",
                self.limits.max_modes
            )));
        }
        let states = (self.cutoff as u64 + 2).checked_pow(modes as u32);
        match states {
            Some(s) if s <= self.limits.max_states => Ok(()),
            _ => Err(Error::CapExceeded(format!(
                "{} outcomes per mode over {modes} modes exceeds {} joint states",
                self.cutoff + 2,
                self.limits.max_states
            ))),
        }
    }

    /// Upper bound on the probability that any of `modes` modes overflows.
    pub fn tail_mass(&self, modes: usize) -> f64 {
        1.0 - (1.0 - self.mode_tail).powi(modes as i32)
    }

    /// Sums `f(pattern)` into `width` accumulators over every joint outcome.
    /// `f` also gets a scratch slice of length `N + 1`. The first mode's
    /// outcome splits the work across threads; partial sums are combined in
    /// a fixed order so results do not depend on scheduling.
    fn sum_patterns<F>(&self, modes: usize, width: usize, f: F) -> Vec<f64>
    where
        F: Fn(&[usize], &mut [f64], &mut [f64]) + Sync,
    {
        let a = self.noise.len();
        let partials: Vec<Vec<f64>> = (0..a)
            .into_par_iter()
            .map(|first| {
                let mut acc = vec![0.0; width];
                let mut scratch = vec![0.0; modes + 1];
                let mut pattern = vec![0usize; modes];
                pattern[0] = first;
                loop {
                    f(&pattern, &mut scratch, &mut acc);
                    // odometer over modes 1..N
                    let mut i = modes;
                    loop {
                        if i == 1 {
                            return acc;
                        }
                        i -= 1;
                        pattern[i] += 1;
                        if pattern[i] < a {
                            break;
                        }
                        pattern[i] = 0;
                    }
                }
            })
            .collect();
        let mut total = vec![0.0; width];
        for p in partials {
            for (s, x) in total.iter_mut().zip(p) {
                *s += x;
            }
        }
        total
    }

    fn noise_prob(&self, pattern: &[usize]) -> f64 {
        pattern.iter().map(|&x| self.noise[x]).product()
    }

    /// Coefficients `e_k = sum over k-subsets P of prod_{P} s * prod_{not P} t`.
    fn placement_polynomial(&self, pattern: &[usize], out: &mut [f64]) {
        out.iter_mut().for_each(|c| *c = 0.0);
        out[0] = 1.0;
        for (j, &x) in pattern.iter().enumerate() {
            let (t, s) = (self.noise[x], self.signal[x]);
            for k in (1..=j + 1).rev() {
                out[k] = out[k] * t + out[k - 1] * s;
            }
            out[0] *= t;
        }
    }

    /// `eps = 1/2 TV(rho, sigma)` with `sigma` one signal uniformly placed
    /// among `N` modes.
    pub fn detection_bias_exact(&self, modes: usize) -> Result<f64> {
        self.detection_bias_conditional(modes, 1)
    }

    /// `eps_k`: bias when exactly `k` signals occupy a uniformly random
    /// `k`-subset of the modes.
    pub fn detection_bias_conditional(&self, modes: usize, k: usize) -> Result<f64> {
        if k > modes {
            return Err(domain(format!("k = {k} exceeds N = {modes}")));
        }
        Ok(self.conditional_biases(modes)?[k])
    }

    /// `eps_k` for every `k` in `0..=N`.
    pub fn conditional_biases(&self, modes: usize) -> Result<Vec<f64>> {
        self.check_modes(modes)?;
        let binom: Vec<f64> = (0..=modes).map(|k| binomial(modes, k)).collect();
        let l1 = self.sum_patterns(modes, modes + 1, |pattern, poly, acc| {
            self.placement_polynomial(pattern, poly);
            for (k, slot) in acc.iter_mut().enumerate() {
                *slot += (poly[0] - poly[k] / binom[k]).abs();
            }
        });
        Ok(l1.into_iter().map(|x| 0.25 * x).collect())
    }

    /// `eps_I` of the i.i.d. protocol: each mode independently carries a
    /// signal with probability `q`. Computed from the product of per-mode
    /// mixtures.
    pub fn detection_bias_iid(&self, modes: usize, q: f64) -> Result<f64> {
        check_probability(q)?;
        self.check_modes(modes)?;
        let mixed: Vec<f64> =
            self.noise.iter().zip(&self.signal).map(|(t, s)| (1.0 - q) * t + q * s).collect();
        let l1 = self.sum_patterns(modes, 1, |pattern, _, acc| {
            let m: f64 = pattern.iter().map(|&x| mixed[x]).product();
            acc[0] += (self.noise_prob(pattern) - m).abs();
        });
        Ok(0.25 * l1[0])
    }

    /// Bias when a single signal is placed uniformly over `positions`.
    pub fn placement_bias(&self, modes: usize, positions: &[usize]) -> Result<f64> {
        self.check_modes(modes)?;
        if positions.is_empty() || positions.iter().any(|&p| p >= modes) {
            return Err(domain("placement positions must be nonempty and below N"));
        }
        let l1 = self.sum_patterns(modes, 1, |pattern, _, acc| {
            let rho = self.noise_prob(pattern);
            acc[0] += (rho - self.single_signal_prob(pattern, positions)).abs();
        });
        Ok(0.25 * l1[0])
    }

    fn single_signal_prob(&self, pattern: &[usize], positions: &[usize]) -> f64 {
        let total: f64 = positions
            .iter()
            .map(|&i| {
                pattern
                    .iter()
                    .enumerate()
                    .map(|(j, &x)| if j == i { self.signal[x] } else { self.noise[x] })
                    .product::<f64>()
            })
            .sum();
        total / positions.len() as f64
    }

    /// Checks `eps <= eps_I / (1 - p0)` together with the decomposition of
    /// the i.i.d. state into `k`-signal states.
    pub fn verify_filter_bound(&self, modes: usize, q: f64) -> Result<FilterBoundReport> {
        check_probability(q)?;
        if q == 0.0 {
            return Err(domain("q = 0 sends nothing; the bound is vacuous (p0 = 1)"));
        }
        let eps_k = self.conditional_biases(modes)?;
        let eps = eps_k[1];
        let eps_iid = self.detection_bias_iid(modes, q)?;
        let p0 = (1.0 - q).powi(modes as i32);
        let bound = eps_iid / (1.0 - p0);

        let p_k: Vec<f64> = (0..=modes)
            .map(|k| binomial(modes, k) * q.powi(k as i32) * (1.0 - q).powi((modes - k) as i32))
            .collect();
        let mixture_sum: f64 = p_k.iter().zip(&eps_k).map(|(p, e)| p * e).sum();

        // eps_I again, this time from the p_k-mixture of k-signal states.
        let binom: Vec<f64> = (0..=modes).map(|k| binomial(modes, k)).collect();
        let l1 = self.sum_patterns(modes, 1, |pattern, poly, acc| {
            self.placement_polynomial(pattern, poly);
            let sigma: f64 = (0..=modes).map(|k| p_k[k] * poly[k] / binom[k]).sum();
            acc[0] += (poly[0] - sigma).abs();
        });
        let eps_iid_from_mixture = 0.25 * l1[0];

        Ok(FilterBoundReport {
            modes,
            q,
            nbar: self.nbar,
            cutoff: self.cutoff,
            eps,
            eps_iid,
            p0,
            bound,
            bound_holds: eps <= bound + ORACLE_SLACK,
            mixture_sum,
            convexity_holds: eps_iid <= mixture_sum + ORACLE_SLACK,
            decomposition_residual: (eps_iid - eps_iid_from_mixture).abs(),
            eps_k_nondecreasing: eps_k.windows(2).all(|w| w[1] >= w[0] - ORACLE_SLACK),
            eps_k,
            tail_mass: self.tail_mass(modes),
        })
    }

    /// Secrecy of the message register: message `m` is sent in position `m`
    /// of a key-selected block of `messages` modes, so `sigma_m` spreads one
    /// signal uniformly over modes `i` with `i % messages == m`.
    ///
    /// The left side `1/2 ||rho' - sigma'||_1` is computed on the joint
    /// (message, pattern) space; the right side is `2 max_m eps_m`.
    pub fn verify_secrecy_bound(&self, modes: usize, priors: &[f64]) -> Result<SecrecyReport> {
        self.check_modes(modes)?;
        let messages = priors.len();
        if messages == 0 || messages > modes {
            return Err(domain(format!("need 1 <= messages <= N, got {messages} for N = {modes}")));
        }
        if priors.iter().any(|&p| !(0.0..=1.0).contains(&p))
            || (priors.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(domain("message priors must form a probability vector"));
        }
        let placements: Vec<Vec<usize>> =
            (0..messages).map(|m| (m..modes).step_by(messages).collect()).collect();

        let eps_per_message: Vec<f64> =
            placements.iter().map(|pos| self.placement_bias(modes, pos)).collect::<Result<_>>()?;

        let l1 = self.sum_patterns(modes, 1, |pattern, _, acc| {
            let rho = self.noise_prob(pattern);
            acc[0] += priors
                .iter()
                .zip(&placements)
                .map(|(&p, pos)| (p * rho - p * self.single_signal_prob(pattern, pos)).abs())
                .sum::<f64>();
        });
        let lhs = 0.5 * l1[0];
        let rhs = 2.0 * eps_per_message.iter().cloned().fold(0.0, f64::max);
        Ok(SecrecyReport {
            modes,
            nbar: self.nbar,
            cutoff: self.cutoff,
            priors: priors.to_vec(),
            eps_per_message,
            lhs,
            rhs,
            holds: lhs <= rhs + ORACLE_SLACK,
            tail_mass: self.tail_mass(modes),
        })
    }
}

/// Numerical slack for the oracle's boolean checks.
pub const ORACLE_SLACK: f64 = 1e-9;

fn check_probability(q: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&q) {
        return Err(domain(format!("probability must lie in [0, 1], got {q}")));
    }
    Ok(())
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterBoundReport {
    pub modes: usize,
    pub q: f64,
    pub nbar: f64,
    pub cutoff: usize,
    /// Bias of the single-signal protocol.
    pub eps: f64,
    pub eps_iid: f64,
    pub p0: f64,
    /// `eps_I / (1 - p0)`.
    pub bound: f64,
    pub bound_holds: bool,
    /// `sum_k p_k eps_k`.
    pub mixture_sum: f64,
    /// `eps_I <= sum_k p_k eps_k`.
    pub convexity_holds: bool,
    /// `|eps_I - eps_I(from the p_k-mixture state)|`.
    pub decomposition_residual: f64,
    pub eps_k: Vec<f64>,
    pub eps_k_nondecreasing: bool,
    pub tail_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecrecyReport {
    pub modes: usize,
    pub nbar: f64,
    pub cutoff: usize,
    pub priors: Vec<f64>,
    pub eps_per_message: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub tail_mass: f64,
}

/// Convenience wrappers matching the oracle operations one-to-one.
pub fn detection_bias_exact(modes: usize, nbar: f64, cutoff: usize) -> Result<f64> {
    FockOracle::new(nbar, cutoff)?.detection_bias_exact(modes)
}

pub fn detection_bias_iid(modes: usize, q: f64, nbar: f64, cutoff: usize) -> Result<f64> {
    FockOracle::new(nbar, cutoff)?.detection_bias_iid(modes, q)
}

pub fn detection_bias_conditional(modes: usize, k: usize, nbar: f64, cutoff: usize) -> Result<f64> {
    FockOracle::new(nbar, cutoff)?.detection_bias_conditional(modes, k)
}

pub fn verify_filter_bound(modes: usize, q: f64, nbar: f64, cutoff: usize) -> Result<FilterBoundReport> {
    FockOracle::new(nbar, cutoff)?.verify_filter_bound(modes, q)
}

pub fn verify_secrecy_bound(
    modes: usize,
    nbar: f64,
    priors: &[f64],
    cutoff: usize,
) -> Result<SecrecyReport> {
    FockOracle::new(nbar, cutoff)?.verify_secrecy_bound(modes, priors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::p_click_thermal;
    use proptest::prelude::*;

    #[test]
    fn thermal_pmf_values() {
        let vac = thermal_pmf(0.0, 4).unwrap();
        assert_eq!(vac.pmf, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(vac.tail_mass, 0.0);
        let t = thermal_pmf(1.0, 2).unwrap();
        assert_eq!(t.pmf, vec![0.5, 0.25, 0.125]);
        assert_eq!(t.tail_mass, 0.125);
        assert!(t.truncation_dirty);
        for &nbar in &[0.0, 0.05, 0.3, 2.0] {
            let t = thermal_pmf(nbar, 6).unwrap();
            assert!((t.pmf[0] - (1.0 - p_click_thermal(nbar).unwrap())).abs() < 1e-15);
            assert!((t.pmf.iter().sum::<f64>() + t.tail_mass - 1.0).abs() < 1e-12);
        }
        assert!(thermal_pmf(-1.0, 3).is_err());
    }

    #[test]
    fn signal_pmf_values() {
        let s = signal_pmf(0.0, 1).unwrap();
        assert_eq!(s.pmf, vec![0.0, 1.0]);
        let s = signal_pmf(1.0, 3).unwrap();
        assert_eq!(s.pmf, vec![0.0, 0.5, 0.25, 0.125]);
        assert_eq!(s.tail_mass, 0.125);
        for &nbar in &[0.0, 0.2, 1.0, 5.0] {
            let s = signal_pmf(nbar, 5).unwrap();
            assert_eq!(s.pmf[0], 0.0);
            assert!((s.pmf.iter().sum::<f64>() + s.tail_mass - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_distance(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(tv_distance(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), 0.5);
        assert!(tv_distance(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn single_mode_bias_is_quarter_at_unit_noise() {
        for cutoff in [2, 4, 6] {
            let e = detection_bias_exact(1, 1.0, cutoff).unwrap();
            assert!((e - 0.25).abs() < 1e-15, "cutoff {cutoff}: {e}");
        }
        let eps_iid = detection_bias_iid(1, 1.0, 1.0, 6).unwrap();
        assert!((eps_iid - 0.25).abs() < 1e-15);
    }

    #[test]
    fn single_mode_bias_falls_with_noise() {
        let mut prev = 0.5;
        for &nbar in &[0.01, 0.1, 0.5, 1.0, 2.0, 4.0] {
            let e = detection_bias_exact(1, nbar, 6).unwrap();
            assert!(e < prev && (0.0..=0.5).contains(&e));
            prev = e;
        }
    }

    #[test]
    fn conditional_edge_cases() {
        let o = FockOracle::new(0.3, 5).unwrap();
        let ek = o.conditional_biases(4).unwrap();
        assert_eq!(ek[0], 0.0);
        assert!((ek[1] - o.detection_bias_exact(4).unwrap()).abs() < 1e-15);
        // all modes signalled: distance between two product laws
        let all = o.detection_bias_iid(4, 1.0).unwrap();
        assert!((ek[4] - all).abs() < 1e-12);
        assert!(o.detection_bias_conditional(4, 5).is_err());
    }

    #[test]
    fn iid_zero_rate_is_undetectable() {
        assert_eq!(detection_bias_iid(3, 0.0, 0.2, 5).unwrap(), 0.0);
    }

    #[test]
    fn filter_bound_reference_point() {
        let r = verify_filter_bound(4, 0.25, 0.5, 6).unwrap();
        assert!(r.bound_holds);
        assert!(r.convexity_holds);
        assert!(r.decomposition_residual < 1e-9);
        assert!(r.eps_k_nondecreasing);
        assert!((r.p0 - 0.75f64.powi(4)).abs() < 1e-15);

        let r = verify_filter_bound(1, 1.0, 1.0, 6).unwrap();
        assert_eq!(r.p0, 0.0);
        assert!((r.eps - r.eps_iid).abs() < 1e-15);
        assert!(r.bound_holds);
    }

    #[test]
    fn secrecy_bound_examples() {
        let o = FockOracle::new(0.2, 5).unwrap();
        let eps = o.detection_bias_exact(4).unwrap();
        let one = o.verify_secrecy_bound(4, &[1.0]).unwrap();
        assert!((one.lhs - 2.0 * eps).abs() < 1e-12);
        let uniform = o.verify_secrecy_bound(4, &[0.5, 0.5]).unwrap();
        let em = uniform.eps_per_message[0];
        assert!(uniform.eps_per_message.iter().all(|e| (e - em).abs() < 1e-12));
        assert!((uniform.lhs - 2.0 * em).abs() < 1e-12);
        assert!(uniform.holds);
        let skewed = o.verify_secrecy_bound(2, &[0.9, 0.1]).unwrap();
        assert!(skewed.holds);
        assert!(o.verify_secrecy_bound(2, &[0.5, 0.3, 0.2]).is_err());
        assert!(o.verify_secrecy_bound(2, &[0.5, 0.6]).is_err());
    }

    #[test]
    fn caps_refuse() {
        let o = FockOracle::new(0.2, 6).unwrap();
        assert!(matches!(o.detection_bias_exact(9), Err(Error::CapExceeded(_))));
        assert!(matches!(FockOracle::new(0.2, 7), Err(Error::CapExceeded(_))));
        let tight = OracleLimits { max_states: 1000, ..OracleLimits::default() };
        let o = FockOracle::with_limits(0.2, 6, tight).unwrap();
        assert!(matches!(o.detection_bias_exact(4), Err(Error::CapExceeded(_))));
    }

    #[test]
    fn bias_shrinks_with_more_modes() {
        let o = FockOracle::new(1.0, 6).unwrap();
        let e1 = o.detection_bias_exact(1).unwrap();
        let mut prev = e1;
        for n in 2..=6 {
            let e = o.detection_bias_exact(n).unwrap();
            // plateaus at odd N for nbar = 1 (eps(2) = eps(3) = 1/8)
            assert!(e <= prev + 1e-15, "N={n}");
            assert!(e * (n as f64).sqrt() <= e1, "N={n}");
            prev = e;
        }
        assert!(prev < e1);
    }

    #[test]
    fn doubling_cutoff_moves_bias_within_tail() {
        for &nbar in &[0.05, 0.2] {
            for n in 1..=3 {
                let coarse = FockOracle::new(nbar, 3).unwrap();
                let fine = FockOracle::new(nbar, 6).unwrap();
                let diff = (coarse.detection_bias_exact(n).unwrap()
                    - fine.detection_bias_exact(n).unwrap())
                .abs();
                assert!(diff <= 10.0 * coarse.tail_mass(n), "nbar={nbar} N={n} diff={diff}");
            }
        }
    }

    fn distribution(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, len).prop_map(|v| {
            let s: f64 = v.iter().sum::<f64>() + 1e-12;
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn tv_is_a_metric(p in distribution(5), q in distribution(5), r in distribution(5)) {
            let pq = tv_distance(&p, &q).unwrap();
            prop_assert!((pq - tv_distance(&q, &p).unwrap()).abs() < 1e-15);
            prop_assert!(tv_distance(&p, &p).unwrap() == 0.0);
            prop_assert!(pq <= tv_distance(&p, &r).unwrap() + tv_distance(&r, &q).unwrap() + 1e-12);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&pq));
        }
    }
}
