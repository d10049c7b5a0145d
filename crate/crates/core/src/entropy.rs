//! Conditional min-entropy of the raw array output and extractor sizing.
//!
//! The adversary knows the photon number `n` of each window and the
//! dark-count string `s` (crosstalk folded into the dark-count probability,
//! hot pixels as permanently forced clicks). What remains random is where
//! each photon lands and whether it is detected. For an outcome `x` with
//! `w = H(x)` ones and `d = H(s)` forced clicks, inclusion-exclusion over the
//! `a = w - d` detectors that must be hit gives
//!
//! ```text
//! P(x | n, s) = sum_{i=0}^{a} (-1)^i C(a, i) f(i)^n,   f(i) = (1 - eta) + eta (w - i) / m
//! ```
//!
//! where `f(i)` is the probability that one photon is either lost or detected
//! inside the allowed click set with `i` required detectors removed. The
//! probability depends on `x` and `s` only through `(w, d)`, which is what
//! makes the full 16384-detector computation tractable.
//!
//! Hot pixels occupy the last `hot_count` detector indices by convention.

use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, fabs, log, log2, sqrt};
use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::bits::BitStream;
use crate::rng::substream;
use crate::source::DeviceProfile;
use crate::special::{igam, ln_choose, ln_factorial, log_add_exp};
use crate::{Error, Result};

/// Poisson tail mass tolerated when truncating the photon-number sum.
pub const POISSON_TAIL: f64 = 1e-12;
/// Largest array handled by exhaustive enumeration.
pub const ENUMERATION_LIMIT: usize = 16;
/// Input block length of the on-chip extractors.
pub const BLOCK_LEN: u32 = 1024;
/// Default security parameter, as log2 of epsilon.
pub const DEFAULT_EPSILON_LOG2: f64 = -100.0;

/// Parameters of the adversary model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Number of detectors.
    pub m: usize,
    /// Detection efficiency assumed by the adversary (worst case).
    pub eta: f64,
    /// Forced-click probability per detector: dark counts plus crosstalk.
    pub p_dark_eff: f64,
    /// Always-on detectors, which carry no entropy.
    pub hot_count: usize,
    /// Mean photon number per window.
    pub lambda: f64,
}

impl ModelParams {
    pub fn new(m: usize, eta: f64, p_dark_eff: f64, hot_count: usize, lambda: f64) -> Result<Self> {
        let p = Self {
            m,
            eta,
            p_dark_eff,
            hot_count,
            lambda,
        };
        p.validate()?;
        Ok(p)
    }

    /// Model for a device profile at efficiency `eta`: crosstalk is added to
    /// the dark-count probability and hot pixels are counted.
    pub fn from_profile(profile: &DeviceProfile, eta: f64) -> Result<Self> {
        Self::new(
            profile.detectors(),
            eta,
            profile.p_dark + profile.p_cross,
            profile.hot_pixels.len(),
            profile.lambda,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidParameter(msg));
        if self.m == 0 {
            return bad("at least one detector is required".into());
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return bad(alloc::format!("eta = {} outside [0, 1]", self.eta));
        }
        if !(0.0..1.0).contains(&self.p_dark_eff) {
            return bad(alloc::format!("p_dark_eff = {} outside [0, 1)", self.p_dark_eff));
        }
        if self.hot_count > self.m {
            return bad(alloc::format!("{} hot pixels on {} detectors", self.hot_count, self.m));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(alloc::format!("lambda = {}", self.lambda));
        }
        Ok(())
    }

    /// Detectors that can carry entropy.
    pub fn free_detectors(&self) -> usize {
        self.m - self.hot_count
    }
}

/// `e^-lambda lambda^n / n!`, evaluated in log space.
pub fn poisson_pmf(lambda: f64, n: u64) -> f64 {
    if lambda == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    exp(-lambda + n as f64 * log(lambda) - ln_factorial(n))
}

/// Smallest `n` with `P(N > n) < tol` for `N ~ Poisson(lambda)`.
pub fn poisson_cutoff(lambda: f64, tol: f64) -> u64 {
    if lambda == 0.0 {
        return 0;
    }
    // P(N > n) = P(n + 1, lambda), the regularised lower incomplete gamma.
    let mut n = libm::floor(lambda) as u64;
    while igam(n as f64 + 1.0, lambda) >= tol {
        n += 1;
    }
    n
}

fn binom(a: u64, i: u64) -> f64 {
    let mut c = 1.0;
    for t in 0..i {
        c = c * (a - t) as f64 / (t + 1) as f64;
    }
    c
}

/// `P(x | n, s)` for an outcome with `weight` ones and `forced` dark clicks
/// among `m` detectors, by the inclusion-exclusion sum.
///
/// Requires `forced <= weight <= m`. Zero whenever fewer photons than
/// required clicks arrived.
pub fn conditional_prob(m: usize, eta: f64, n: u64, forced: usize, weight: usize) -> f64 {
    assert!(forced <= weight && weight <= m);
    let a = (weight - forced) as u64;
    if n < a {
        return 0.0;
    }
    let mf = m as f64;
    let mut sum = 0.0;
    for i in 0..=a {
        let f = (1.0 - eta) + eta * (weight as f64 - i as f64) / mf;
        let term = binom(a, i) * libm::pow(f, n as f64);
        if i % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    sum
}

fn dark_string_prob(s: &BitStream, params: &ModelParams) -> f64 {
    let free = params.free_detectors();
    let mut ones = 0u64;
    for i in 0..params.m {
        let bit = s.get(i);
        if i >= free {
            if !bit {
                return 0.0;
            }
        } else if bit {
            ones += 1;
        }
    }
    let zeros = free as f64 - ones as f64;
    libm::pow(params.p_dark_eff, ones as f64) * libm::pow(1.0 - params.p_dark_eff, zeros)
}

fn check_len(bits: &BitStream, m: usize) -> Result<()> {
    if bits.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: bits.len(),
        });
    }
    Ok(())
}

/// Outcome probability given the side information, `P(x | n, s)`.
pub fn outcome_prob_given(x: &BitStream, n: u64, s: &BitStream, params: &ModelParams) -> Result<f64> {
    check_len(x, params.m)?;
    check_len(s, params.m)?;
    // s_i = 1 forces x_i = 1
    if s.words().iter().zip(x.words()).any(|(s, x)| s & !x != 0) {
        return Ok(0.0);
    }
    Ok(conditional_prob(
        params.m,
        params.eta,
        n,
        s.count_ones() as usize,
        x.count_ones() as usize,
    ))
}

/// Joint probability `P(x, n, s) = P_N(n) P_S(s) P(x | n, s)`.
pub fn joint_prob(x: &BitStream, n: u64, s: &BitStream, params: &ModelParams) -> Result<f64> {
    let cond = outcome_prob_given(x, n, s, params)?;
    Ok(poisson_pmf(params.lambda, n) * dark_string_prob(s, params) * cond)
}

/// Monte Carlo estimate with its binomial standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// Click patterns produced by `n` photons alone, as a histogram over the
/// `2^m` outcomes (bit `i` of the index is detector `i`).
pub fn photon_click_histogram<R: Rng + ?Sized>(m: usize, eta: f64, n: u64, trials: u64, rng: &mut R) -> Vec<u64> {
    assert!(m <= ENUMERATION_LIMIT);
    let mut hist = vec![0u64; 1 << m];
    let scale = m as f64 / eta;
    for _ in 0..trials {
        let mut pattern = 0usize;
        for _ in 0..n {
            // one draw decides detection (u < eta) and, given detection,
            // the detector (u / eta is uniform on [0, 1))
            let u: f64 = rng.random();
            if u < eta {
                pattern |= 1 << ((u * scale) as usize).min(m - 1);
            }
        }
        hist[pattern] += 1;
    }
    hist
}

/// Frequency of outcome `x` over simulated windows with `n` photons and
/// forced clicks `s`. Conditional on `(n, s)`; validation oracle for
/// [`outcome_prob_given`].
pub fn mc_oracle_joint_prob<R: Rng + ?Sized>(
    x: &BitStream,
    n: u64,
    s: &BitStream,
    params: &ModelParams,
    trials: u64,
    rng: &mut R,
) -> Result<Estimate> {
    check_len(x, params.m)?;
    check_len(s, params.m)?;
    if trials == 0 {
        return Err(Error::EmptyInput);
    }
    let m = params.m;
    let mut hits = 0u64;
    let mut clicks = BitStream::zeros(m);
    for _ in 0..trials {
        clicks.clone_from(s);
        for _ in 0..n {
            let det = rng.random_range(0..m);
            if rng.random::<f64>() < params.eta {
                clicks.set(det, true);
            }
        }
        if &clicks == x {
            hits += 1;
        }
    }
    let p = hits as f64 / trials as f64;
    Ok(Estimate {
        value: p,
        std_error: sqrt(p * (1.0 - p) / trials as f64),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Method {
    Exact { n_cutoff: u64 },
    MonteCarlo { samples: u64, seed: u64 },
}

/// Extractor sizing from the leftover hash lemma.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionBounds {
    pub block_len: u32,
    pub epsilon_target_log2: f64,
    /// Largest output length meeting the target, if any.
    pub k_max: Option<u32>,
    /// `log2 epsilon` at `k_max`.
    pub epsilon_log2_at_k_max: Option<f64>,
    /// `(k, log2 epsilon)` for the on-chip output widths.
    pub epsilon_log2_at: Vec<(u32, f64)>,
}

impl ExtractionBounds {
    pub fn new(h_min_per_bit: f64, block_len: u32, epsilon_target_log2: f64, ks: &[u32]) -> Self {
        let k_max = max_k(h_min_per_bit, block_len, epsilon_target_log2).ok();
        Self {
            block_len,
            epsilon_target_log2,
            k_max,
            epsilon_log2_at_k_max: k_max.and_then(|k| lhl_epsilon_log2(h_min_per_bit, block_len, k).ok()),
            epsilon_log2_at: ks
                .iter()
                .filter_map(|&k| lhl_epsilon_log2(h_min_per_bit, block_len, k).ok().map(|e| (k, e)))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub params: ModelParams,
    pub method: Method,
    /// `H_min(X|E)` of a whole frame, in bits.
    pub h_min_total: f64,
    /// Standard error of `h_min_total` (zero for exact results).
    pub std_error_total: f64,
    /// `H_min(X|E) / (m - hot_count)`: per detector able to carry entropy.
    pub h_min_per_bit: f64,
    /// `H_min(X|E) / m`: rate of the raw stream, hot pixels included.
    pub h_min_per_raw_bit: f64,
    /// Standard error of `h_min_per_bit`.
    pub std_error_per_bit: f64,
    /// Sized with the raw-stream rate, since extractor blocks are cut from
    /// the raw stream with hot pixels included.
    pub extraction: ExtractionBounds,
}

impl EntropyReport {
    fn new(params: ModelParams, method: Method, total: f64, std_error: f64) -> Self {
        let free = params.free_detectors();
        let per_raw_bit = total / params.m as f64;
        Self {
            params,
            method,
            h_min_total: total,
            std_error_total: std_error,
            h_min_per_bit: if free == 0 { 0.0 } else { total / free as f64 },
            h_min_per_raw_bit: per_raw_bit,
            std_error_per_bit: if free == 0 { 0.0 } else { std_error / free as f64 },
            extraction: ExtractionBounds::new(per_raw_bit.clamp(0.0, 1.0), BLOCK_LEN, DEFAULT_EPSILON_LOG2, &[32, 8]),
        }
    }

    /// Recomputes the sizing for another block length or security level.
    pub fn with_extraction(mut self, block_len: u32, epsilon_target_log2: f64, ks: &[u32]) -> Self {
        self.extraction = ExtractionBounds::new(
            self.h_min_per_raw_bit.clamp(0.0, 1.0),
            block_len,
            epsilon_target_log2,
            ks,
        );
        self
    }
}

/// `H_min(X|E)` by exhaustive enumeration of dark strings and outcomes.
///
/// Every dark string `s` (hot pixels forced on) is weighted by its
/// probability, and for every photon number up to the cutoff the most likely
/// outcome is found by scanning all supersets of `s`.
pub fn exact_min_entropy(params: &ModelParams, n_cutoff: Option<u64>) -> Result<EntropyReport> {
    params.validate()?;
    let m = params.m;
    if m > ENUMERATION_LIMIT {
        return Err(Error::TooLargeForEnumeration {
            m,
            limit: ENUMERATION_LIMIT,
        });
    }
    let required = poisson_cutoff(params.lambda, POISSON_TAIL);
    let cutoff = match n_cutoff {
        Some(c) if c < required => {
            return Err(Error::CutoffTooSmall {
                given: c,
                required,
            })
        }
        Some(c) => c,
        None => required,
    };

    let free = params.free_detectors();
    let hot_mask: usize = ((1usize << m) - 1) & !((1usize << free) - 1);
    let all = (1usize << m) - 1;
    let pn: Vec<f64> = (0..=cutoff).map(|n| poisson_pmf(params.lambda, n)).collect();
    let len = cutoff as usize + 1;
    let mut best = vec![0.0f64; len];
    // P(x | n, s) for every (H(s), H(x), n)
    let mut table = vec![0.0f64; (m + 1) * (m + 1) * len];
    for d in 0..=m {
        for w in d..=m {
            for n in 0..len {
                table[(d * (m + 1) + w) * len + n] = conditional_prob(m, params.eta, n as u64, d, w);
            }
        }
    }
    let mut h = 0.0;

    for s_free in 0..(1usize << free) {
        let s = s_free | hot_mask;
        let d = s.count_ones() as usize;
        let ones = s_free.count_ones() as f64;
        let ps = libm::pow(params.p_dark_eff, ones) * libm::pow(1.0 - params.p_dark_eff, free as f64 - ones);
        if ps == 0.0 {
            continue;
        }
        best.iter_mut().for_each(|b| *b = 0.0);
        // all supersets x of s: x = s | t for t a submask of the complement
        let comp = all & !s;
        let mut t = comp;
        loop {
            let x = s | t;
            let w = x.count_ones() as usize;
            let row = &table[(d * (m + 1) + w) * len..][..len];
            for (b, &p) in best.iter_mut().zip(row) {
                if p > *b {
                    *b = p;
                }
            }
            if t == 0 {
                break;
            }
            t = (t - 1) & comp;
        }
        for (n, &b) in best.iter().enumerate() {
            if pn[n] > 0.0 {
                h -= pn[n] * ps * log2(b);
            }
        }
    }
    Ok(EntropyReport::new(
        *params,
        Method::Exact { n_cutoff: cutoff },
        h.max(0.0),
        0.0,
    ))
}

/// Largest `a` for which the positive-sum evaluation is used.
const EXACT_MAX_REQUIRED: u64 = 400;
/// Largest `n * a` for which the positive-sum evaluation is used.
const EXACT_MAX_WORK: f64 = 2e4;

/// Natural log of `P(x | n, s)` for an outcome that needs `required` extra
/// clicks beyond `forced` dark clicks, among `m` detectors.
///
/// Unlike the alternating sum this stays accurate for thousands of
/// detectors: small cases sum positive terms over the number of photons
/// landing on required detectors, large cases use a saddle-point
/// approximation of the generating function `e^{t h} (e^{t r} - 1)^a`.
pub fn ln_class_prob(m: usize, eta: f64, n: u64, forced: usize, required: usize) -> f64 {
    assert!(forced + required <= m);
    let a = required as u64;
    let mf = m as f64;
    let h = (1.0 - eta) + eta * forced as f64 / mf;
    let r = eta / mf;
    if a == 0 {
        return if n == 0 {
            0.0
        } else if h <= 0.0 {
            f64::NEG_INFINITY
        } else {
            n as f64 * log(h)
        };
    }
    if n < a || r <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if n == a {
        return ln_factorial(a) + a as f64 * log(r);
    }
    if a <= EXACT_MAX_REQUIRED && (n as f64) * (a as f64) <= EXACT_MAX_WORK {
        ln_class_prob_positive_sum(n, a, h, r)
    } else {
        ln_class_prob_saddle(n, a, h, r)
    }
}

// g = sum_j C(n, j) h^(n-j) (a r)^j Pcov(j, a), where Pcov(j, a) is the
// probability that j uniform balls cover all a bins.
fn ln_class_prob_positive_sum(n: u64, a: u64, h: f64, r: f64) -> f64 {
    let au = a as usize;
    let mut occ = vec![0.0f64; au + 1];
    occ[0] = 1.0;
    let af = a as f64;
    let ln_ar = log(af * r);
    let ln_h = if h > 0.0 { log(h) } else { f64::NEG_INFINITY };
    let mut acc = f64::NEG_INFINITY;
    for j in 1..=n {
        // one more ball: occupied count k stays with prob k/a, grows otherwise
        let top = (j as usize).min(au);
        for k in (1..=top).rev() {
            occ[k] = occ[k] * (k as f64 / af) + occ[k - 1] * ((af - (k as f64 - 1.0)) / af);
        }
        occ[0] = 0.0;
        if j >= a && occ[au] > 0.0 {
            let harmless = n - j;
            let ln_h_part = if harmless == 0 { 0.0 } else { harmless as f64 * ln_h };
            let term = ln_choose(n, j) + ln_h_part + j as f64 * ln_ar + log(occ[au]);
            acc = log_add_exp(acc, term);
        }
    }
    acc
}

fn ln_class_prob_saddle(n: u64, a: u64, h: f64, r: f64) -> f64 {
    let nf = n as f64;
    let af = a as f64;
    let c = h / r; // harmless-to-required odds per unit tilt
    // psi(u) = u / (1 - e^-u) and its derivative, with series near 0
    let psi = |u: f64| {
        if u < 1e-6 {
            1.0 + u / 2.0 + u * u / 12.0
        } else {
            u / (-libm::expm1(-u))
        }
    };
    let dpsi = |u: f64| {
        if u < 1e-4 {
            0.5 + u / 6.0
        } else {
            let e = exp(-u);
            let den = -libm::expm1(-u);
            (den - u * e) / (den * den)
        }
    };
    let phi = |u: f64| u * c + af * psi(u);
    // phi(0+) = a < n and phi is increasing, phi(u) >= a u
    let mut lo = 0.0;
    let mut hi = nf / af + 1.0;
    let mut u = (nf - af) / (c + af / 2.0).max(1e-300);
    u = u.clamp(lo, hi);
    for _ in 0..200 {
        let f = phi(u) - nf;
        if f > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        let step = f / (c + af * dpsi(u));
        let mut next = u - step;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if fabs(next - u) <= 1e-15 * u.max(1e-300) {
            u = next;
            break;
        }
        u = next;
    }
    let tau = u / r;
    let b = u * (c + af * dpsi(u));
    // ln(e^u - 1) = u + ln(1 - e^-u)
    let ln_em1 = u + log(-libm::expm1(-u));
    ln_factorial(n) - nf * log(tau) + tau * h + af * ln_em1
        - 0.5 * log(2.0 * core::f64::consts::PI * b)
}

/// Most likely outcome weight class given `(n, d)`: returns the number of
/// required clicks `a` and `ln P`.
pub fn max_class_prob(m: usize, eta: f64, n: u64, forced: usize) -> (usize, f64) {
    let upper = (m - forced).min(n as usize);
    let f = |a: usize| ln_class_prob(m, eta, n, forced, a);
    if upper <= 64 {
        return (0..=upper)
            .map(|a| (a, f(a)))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
    }
    // ln P is concave in a; integer ternary search, then polish locally
    let (mut lo, mut hi) = (0usize, upper);
    while hi - lo > 4 {
        let m1 = lo + (hi - lo) / 3;
        let m2 = hi - (hi - lo) / 3;
        if f(m1) < f(m2) {
            lo = m1 + 1;
        } else {
            hi = m2 - 1;
        }
    }
    let candidates = (lo.saturating_sub(3)..=(hi + 3).min(upper)).chain([0, upper]);
    candidates
        .map(|a| (a, f(a)))
        .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
}

/// Guessing entropy `-log2 max_x P(x | n, s)` of one side-information value.
pub fn conditional_min_entropy(params: &ModelParams, n: u64, forced: usize) -> f64 {
    let (_, ln_p) = max_class_prob(params.m, params.eta, n, forced);
    -ln_p / core::f64::consts::LN_2
}

/// Monte Carlo estimate of `H_min(X|E)` over side information
/// `e = (n, H(s))`.
///
/// Detectors are exchangeable under uniform illumination, so the adversary's
/// best guess depends on `e` only through the photon number and the number of
/// forced clicks; the search over outcomes reduces to a search over weights.
pub fn estimate_min_entropy(params: &ModelParams, samples: u64, seed: u64) -> Result<EntropyReport> {
    let sampler = MinEntropySampler::new(params)?;
    if samples < 2 {
        return Err(Error::InvalidParameter("at least two samples are needed".into()));
    }
    let values: Vec<f64> = (0..samples).map(|t| sampler.sample(seed, t)).collect();
    monte_carlo_report(params, seed, &values)
}

/// Draws side information `(n, H(s))` and evaluates its guessing entropy.
/// Sample `t` of a run only depends on `(seed, t)`.
#[derive(Clone, Debug)]
pub struct MinEntropySampler {
    params: ModelParams,
    poisson: Option<Poisson<f64>>,
    dark: Option<Binomial>,
}

impl MinEntropySampler {
    pub fn new(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let invalid = |e: &dyn core::fmt::Display| Error::InvalidParameter(alloc::format!("{e}"));
        let poisson = if params.lambda > 0.0 {
            Some(Poisson::new(params.lambda).map_err(|e| invalid(&e))?)
        } else {
            None
        };
        let free = params.free_detectors() as u64;
        let dark = if free > 0 && params.p_dark_eff > 0.0 {
            Some(Binomial::new(free, params.p_dark_eff).map_err(|e| invalid(&e))?)
        } else {
            None
        };
        Ok(Self {
            params: *params,
            poisson,
            dark,
        })
    }

    pub fn sample(&self, seed: u64, index: u64) -> f64 {
        let mut rng = substream(seed, index);
        let n = self.poisson.as_ref().map_or(0, |d| {
            let x: f64 = d.sample(&mut rng);
            x as u64
        });
        let d = self.params.hot_count + self.dark.as_ref().map_or(0, |b| b.sample(&mut rng) as usize);
        conditional_min_entropy(&self.params, n, d)
    }
}

/// Report for a Monte Carlo run from its per-sample guessing entropies.
pub fn monte_carlo_report(params: &ModelParams, seed: u64, values: &[f64]) -> Result<EntropyReport> {
    if values.len() < 2 {
        return Err(Error::InvalidParameter("at least two samples are needed".into()));
    }
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0);
    Ok(EntropyReport::new(
        *params,
        Method::MonteCarlo {
            samples: values.len() as u64,
            seed,
        },
        mean.max(0.0),
        sqrt(var / k),
    ))
}

/// Evaluates both ends of the efficiency tolerance and keeps the smaller
/// entropy.
pub fn worst_case_estimate(profile: &DeviceProfile, samples: u64, seed: u64) -> Result<(EntropyReport, [EntropyReport; 2])> {
    let (lo, hi) = profile.eta_range();
    let a = estimate_min_entropy(&ModelParams::from_profile(profile, lo)?, samples, seed)?;
    let b = estimate_min_entropy(&ModelParams::from_profile(profile, hi)?, samples, seed)?;
    let worst = if a.h_min_total <= b.h_min_total { a.clone() } else { b.clone() };
    Ok((worst, [a, b]))
}

/// `log2 epsilon = -(h n - k) / 2`, capped at zero (epsilon <= 1).
pub fn lhl_epsilon_log2(h_min_per_bit: f64, n: u32, k: u32) -> Result<f64> {
    if !(0.0..=1.0).contains(&h_min_per_bit) {
        return Err(Error::InvalidParameter(alloc::format!(
            "min-entropy rate {h_min_per_bit} outside [0, 1]"
        )));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(alloc::format!("need 0 < k <= n, got k={k} n={n}")));
    }
    Ok((-(h_min_per_bit * n as f64 - k as f64) / 2.0).min(0.0))
}

/// Largest `k` with `lhl_epsilon_log2(h, n, k) <= epsilon_log2`:
/// `floor(h n + 2 log2 epsilon)`.
pub fn max_k(h_min_per_bit: f64, n: u32, epsilon_log2: f64) -> Result<u32> {
    if !(0.0..=1.0).contains(&h_min_per_bit) {
        return Err(Error::InvalidParameter(alloc::format!(
            "min-entropy rate {h_min_per_bit} outside [0, 1]"
        )));
    }
    if epsilon_log2 > 0.0 || epsilon_log2.is_nan() {
        return Err(Error::InvalidParameter(alloc::format!(
            "epsilon must be in (0, 1], got 2^{epsilon_log2}"
        )));
    }
    let k = libm::floor(h_min_per_bit * n as f64 + 2.0 * epsilon_log2);
    if k < 1.0 {
        return Err(Error::NoExtractableBits);
    }
    Ok((k as u32).min(n))
}
