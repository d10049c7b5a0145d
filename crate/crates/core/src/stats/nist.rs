//! Individual randomness tests following the SP 800-22 reference formulas.
//!
//! Each function enforces only the structural minimum its formula needs;
//! recommended input sizes are applied by the battery.

use alloc::vec;
use alloc::vec::Vec;

use libm::{fabs, floor, log, sqrt};

use crate::bits::BitStream;
use crate::special::{erfc, igamc, normal_cdf};
use crate::{Error, Result};

#[inline]
fn bit(words: &[u64], i: usize) -> u32 {
    ((words[i >> 6] >> (i & 63)) & 1) as u32
}

fn require(test: &'static str, bits: &BitStream, needed: usize) -> Result<usize> {
    let n = bits.len();
    if n < needed {
        return Err(Error::SequenceTooShort { test, needed, found: n });
    }
    Ok(n)
}

/// Monobit frequency test.
pub fn frequency(bits: &BitStream) -> Result<f64> {
    let n = require("frequency", bits, 1)?;
    let s = 2.0 * bits.count_ones() as f64 - n as f64;
    let s_obs = fabs(s) / sqrt(n as f64);
    Ok(erfc(s_obs / core::f64::consts::SQRT_2))
}

fn ones_in(bits: &BitStream, start: usize, len: usize) -> u64 {
    let w = bits.words();
    let mut i = start;
    let end = start + len;
    let mut ones = 0u64;
    while i < end && i & 63 != 0 {
        ones += bit(w, i) as u64;
        i += 1;
    }
    while i + 64 <= end {
        ones += w[i >> 6].count_ones() as u64;
        i += 64;
    }
    while i < end {
        ones += bit(w, i) as u64;
        i += 1;
    }
    ones
}

/// Frequency within `m`-bit blocks.
pub fn block_frequency(bits: &BitStream, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidParameter("block length must be positive".into()));
    }
    let n = require("block_frequency", bits, m)?;
    let blocks = n / m;
    let mut chi = 0.0;
    for b in 0..blocks {
        let pi = ones_in(bits, b * m, m) as f64 / m as f64;
        chi += (pi - 0.5) * (pi - 0.5);
    }
    chi *= 4.0 * m as f64;
    Ok(igamc(blocks as f64 / 2.0, chi / 2.0))
}

fn transitions(bits: &BitStream) -> u64 {
    let w = bits.words();
    let n = bits.len();
    let mut count = 0u64;
    for (k, &word) in w.iter().enumerate() {
        let next = w.get(k + 1).map_or(0, |&x| x & 1);
        let mut t = word ^ ((word >> 1) | (next << 63));
        // positions i with i + 1 < n only
        let base = k * 64;
        if base + 64 > n - 1 {
            let valid = (n - 1).saturating_sub(base);
            t &= if valid == 0 { 0 } else { u64::MAX >> (64 - valid) };
        }
        count += t.count_ones() as u64;
    }
    count
}

/// Runs test. Returns 0 when the frequency prerequisite fails.
pub fn runs(bits: &BitStream) -> Result<f64> {
    let n = require("runs", bits, 2)?;
    let nf = n as f64;
    let pi = bits.count_ones() as f64 / nf;
    if fabs(pi - 0.5) >= 2.0 / sqrt(nf) {
        return Ok(0.0);
    }
    let v = 1.0 + transitions(bits) as f64;
    let num = fabs(v - 2.0 * nf * pi * (1.0 - pi));
    let den = 2.0 * sqrt(2.0 * nf) * pi * (1.0 - pi);
    Ok(erfc(num / den))
}

/// Longest run of ones in a block, with the block size and class table
/// chosen by sequence length.
pub fn longest_run(bits: &BitStream) -> Result<f64> {
    let n = require("longest_run", bits, 128)?;
    let (m, v_min, pi): (usize, usize, &[f64]) = if n < 6272 {
        (8, 1, &[0.21484375, 0.3671875, 0.23046875, 0.1875])
    } else if n < 750_000 {
        (128, 4, &[0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124])
    } else {
        (10_000, 10, &[0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727])
    };
    let k = pi.len() - 1;
    let blocks = n / m;
    let w = bits.words();
    let mut nu = vec![0u64; k + 1];
    for b in 0..blocks {
        let (mut run, mut best) = (0usize, 0usize);
        for i in b * m..(b + 1) * m {
            if bit(w, i) == 1 {
                run += 1;
                best = best.max(run);
            } else {
                run = 0;
            }
        }
        let class = best.clamp(v_min, v_min + k) - v_min;
        nu[class] += 1;
    }
    let nb = blocks as f64;
    let chi: f64 = nu
        .iter()
        .zip(pi)
        .map(|(&o, &p)| (o as f64 - nb * p) * (o as f64 - nb * p) / (nb * p))
        .sum();
    Ok(igamc(k as f64 / 2.0, chi / 2.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CusumMode {
    Forward,
    Reverse,
}

/// Cumulative sums test in one direction.
pub fn cumulative_sums(bits: &BitStream, mode: CusumMode) -> Result<f64> {
    let n = require("cumulative_sums", bits, 1)?;
    let w = bits.words();
    let mut s: i64 = 0;
    let mut z: i64 = 0;
    for t in 0..n {
        let i = match mode {
            CusumMode::Forward => t,
            CusumMode::Reverse => n - 1 - t,
        };
        s += if bit(w, i) == 1 { 1 } else { -1 };
        z = z.max(s.abs());
    }
    Ok(cusum_p_value(n as i64, z))
}

// Summation bounds use truncating integer division, as in the reference code.
fn cusum_p_value(n: i64, z: i64) -> f64 {
    let sq = sqrt(n as f64);
    let zf = z as f64;
    let mut sum1 = 0.0;
    let mut k = (-n / z + 1) / 4;
    while k <= (n / z - 1) / 4 {
        let kf = k as f64;
        sum1 += normal_cdf((4.0 * kf + 1.0) * zf / sq) - normal_cdf((4.0 * kf - 1.0) * zf / sq);
        k += 1;
    }
    let mut sum2 = 0.0;
    let mut k = (-n / z - 3) / 4;
    while k <= (n / z - 1) / 4 {
        let kf = k as f64;
        sum2 += normal_cdf((4.0 * kf + 3.0) * zf / sq) - normal_cdf((4.0 * kf + 1.0) * zf / sq);
        k += 1;
    }
    (1.0 - sum1 + sum2).clamp(0.0, 1.0)
}

/// Counts of every `m`-bit pattern over the `n` circular windows; the first
/// bit of a window is the most significant bit of its index.
pub fn circular_window_counts(bits: &BitStream, m: usize) -> Vec<u32> {
    assert!((1..=24).contains(&m));
    let n = bits.len();
    let w = bits.words();
    let mask = (1usize << m) - 1;
    let mut counts = vec![0u32; 1 << m];
    let mut v = 0usize;
    for i in 0..m - 1 {
        v = (v << 1) | bit(w, i % n) as usize;
    }
    for i in m - 1..n + m - 1 {
        let j = if i < n { i } else { i - n };
        v = ((v << 1) | bit(w, j) as usize) & mask;
        counts[v] += 1;
    }
    counts
}

/// Drops the last bit of every pattern.
fn marginalise(counts: &[u32]) -> Vec<u32> {
    counts.chunks(2).map(|c| c[0] + c[1]).collect()
}

fn psi_sq(counts: &[u32], n: usize) -> f64 {
    let sum: f64 = counts.iter().map(|&c| c as f64 * c as f64).sum();
    sum * counts.len() as f64 / n as f64 - n as f64
}

/// Serial test; returns the two P-values.
pub fn serial(bits: &BitStream, m: usize) -> Result<(f64, f64)> {
    if m < 2 {
        return Err(Error::InvalidParameter("serial pattern length must be at least 2".into()));
    }
    let n = require("serial", bits, m)?;
    let c0 = circular_window_counts(bits, m);
    let c1 = marginalise(&c0);
    let p0 = psi_sq(&c0, n);
    let p1 = psi_sq(&c1, n);
    let p2 = if m > 2 { psi_sq(&marginalise(&c1), n) } else { 0.0 };
    let d1 = p0 - p1;
    let d2 = p0 - 2.0 * p1 + p2;
    let a1 = (1u64 << (m - 2)) as f64;
    let a2 = if m >= 3 { (1u64 << (m - 3)) as f64 } else { 0.5 };
    Ok((igamc(a1, d1 / 2.0), igamc(a2, d2 / 2.0)))
}

fn phi(counts: &[u32], n: usize) -> f64 {
    let nf = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / nf;
            p * log(p)
        })
        .sum()
}

/// Approximate entropy test with pattern length `m`.
pub fn approximate_entropy(bits: &BitStream, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidParameter("pattern length must be positive".into()));
    }
    let n = require("approximate_entropy", bits, m + 1)?;
    let c1 = circular_window_counts(bits, m + 1);
    let c0 = marginalise(&c1);
    let apen = phi(&c0, n) - phi(&c1, n);
    let chi = 2.0 * n as f64 * (core::f64::consts::LN_2 - apen);
    Ok(igamc((1u64 << (m - 1)) as f64, chi / 2.0))
}

/// All aperiodic `m`-bit templates in increasing order (first bit most
/// significant): no proper prefix equals the suffix of the same length.
pub fn aperiodic_templates(m: usize) -> Vec<u32> {
    assert!((2..=20).contains(&m));
    (0u32..1 << m)
        .filter(|&v| (1..m).all(|l| v >> (m - l) != v & ((1 << l) - 1)))
        .collect()
}

fn template_p_value(w: &[u64], block_len: usize, m: usize) -> f64 {
    let two_m = (1u64 << m) as f64;
    let mu = (block_len - m + 1) as f64 / two_m;
    let var = block_len as f64 * (1.0 / two_m - (2 * m - 1) as f64 / (two_m * two_m));
    let chi: f64 = w.iter().map(|&x| (x as f64 - mu) * (x as f64 - mu) / var).sum();
    igamc(w.len() as f64 / 2.0, chi / 2.0)
}

fn template_blocks(test: &'static str, bits: &BitStream, m: usize, blocks: usize) -> Result<usize> {
    if blocks == 0 {
        return Err(Error::InvalidParameter("block count must be positive".into()));
    }
    let n = require(test, bits, blocks * m)?;
    Ok(n / blocks)
}

/// Non-overlapping template matching for one template, scanning each block
/// and skipping past every match.
pub fn non_overlapping_template(bits: &BitStream, template: u32, m: usize, blocks: usize) -> Result<f64> {
    let block_len = template_blocks("non_overlapping_template", bits, m, blocks)?;
    let w = bits.words();
    let mut counts = vec![0u64; blocks];
    for (b, count) in counts.iter_mut().enumerate() {
        let start = b * block_len;
        let mut i = 0;
        while i + m <= block_len {
            let mut v = 0u32;
            for j in 0..m {
                v = (v << 1) | bit(w, start + i + j);
            }
            if v == template {
                *count += 1;
                i += m;
            } else {
                i += 1;
            }
        }
    }
    Ok(template_p_value(&counts, block_len, m))
}

/// Non-overlapping template matching for every aperiodic `m`-bit template.
///
/// Occurrences of an aperiodic template can never overlap, so the
/// non-overlapping count equals the plain window count and one window
/// histogram per block serves every template.
pub fn non_overlapping_templates_all(bits: &BitStream, m: usize, blocks: usize) -> Result<Vec<(u32, f64)>> {
    let block_len = template_blocks("non_overlapping_template", bits, m, blocks)?;
    let w = bits.words();
    let mask = (1u32 << m) - 1;
    let mut hist = vec![vec![0u64; 1 << m]; blocks];
    for (b, h) in hist.iter_mut().enumerate() {
        let start = b * block_len;
        let mut v = 0u32;
        for i in 0..block_len {
            v = ((v << 1) | bit(w, start + i)) & mask;
            if i + 1 >= m {
                h[v as usize] += 1;
            }
        }
    }
    let mut out = Vec::new();
    let mut counts = vec![0u64; blocks];
    for t in aperiodic_templates(m) {
        for (c, h) in counts.iter_mut().zip(&hist) {
            *c = h[t as usize];
        }
        out.push((t, template_p_value(&counts, block_len, m)));
    }
    Ok(out)
}

/// Parses a template written as a bit string, first bit most significant.
pub fn template_from_ascii(text: &str) -> Result<(u32, usize)> {
    let bits = BitStream::from_ascii(text)?;
    if bits.is_empty() || bits.len() > 20 {
        return Err(Error::InvalidParameter("template length must be 1..=20".into()));
    }
    Ok((bits.iter().fold(0u32, |v, b| (v << 1) | b as u32), bits.len()))
}

/// NIST proportion threshold `floor(N (p - 3 sqrt(p (1 - p) / N)))` with
/// `p = 1 - alpha`.
pub fn proportion_threshold(sequences: usize, alpha: f64) -> usize {
    let p = 1.0 - alpha;
    let nf = sequences as f64;
    let t = nf * (p - 3.0 * sqrt(p * (1.0 - p) / nf));
    floor(t + 1e-9).max(0.0) as usize
}
