//! Monte Carlo model of the LED-illuminated SPAD array.
//!
//! Each frame window: a Poisson number of photons `n` is emitted, every
//! photon lands on a uniformly chosen detector and is detected with
//! probability `eta`. Independently each detector may fire a dark count.
//! Every photon or dark click may induce one crosstalk click on a uniformly
//! chosen side-adjacent neighbour (no cascades). Hot pixels always read 1.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Geometric, Poisson};
use serde::{Deserialize, Serialize};

use crate::bits::{BitFrame, BitStream};
use crate::rng::substream;
use crate::{Error, Result};

/// Readout timing of the array. Metadata only; frames are independent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameTiming {
    /// Time to read out the whole array, in seconds.
    pub frame_period_s: f64,
    /// Interval between 512-bit register reads, in seconds.
    pub read_interval_s: f64,
    /// Extractor output word rate, in Hz.
    pub word_rate_hz: f64,
}

impl Default for FrameTiming {
    fn default() -> Self {
        Self {
            frame_period_s: 1.3e-6,
            read_interval_s: 40e-9,
            word_rate_hz: 12.5e6,
        }
    }
}

impl FrameTiming {
    /// Raw tap rate: 512 bits per read interval.
    pub fn raw_bit_rate(&self) -> f64 {
        512.0 / self.read_interval_s
    }
}

/// Physical parameters of the simulated entropy source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub rows: usize,
    pub cols: usize,
    /// Mean detection probability per photon.
    pub eta_mean: f64,
    /// Absolute tolerance on `eta_mean` granted to the adversary.
    pub eta_tol: f64,
    /// Dark-count probability per detector and frame window.
    pub p_dark: f64,
    /// Probability that a click induces a click on a neighbour.
    pub p_cross: f64,
    /// Always-on detectors, sorted and unique.
    pub hot_pixels: Vec<u32>,
    /// Mean number of photons per frame window on the whole array.
    pub lambda: f64,
    pub timing: FrameTiming,
}

pub const DEFAULT_HOT_PIXELS: usize = 512;
pub const DEFAULT_HOT_PIXEL_SEED: u64 = 0;
pub const DEFAULT_P_CLICK: f64 = 0.5;

impl DeviceProfile {
    /// The measured 128 x 128 device: eta = 0.12 +- 0.03, p_dark = 8.45e-5,
    /// p_cross = 1e-3, 512 hot pixels, lambda set for a 0.5 click probability.
    pub fn chip_default() -> Self {
        let rows = BitFrame::DEFAULT_ROWS;
        let cols = BitFrame::DEFAULT_COLS;
        let mut p = Self {
            rows,
            cols,
            eta_mean: 0.12,
            eta_tol: 0.03,
            p_dark: 8.45e-5,
            p_cross: 1e-3,
            hot_pixels: random_hot_pixels(rows * cols, DEFAULT_HOT_PIXELS, DEFAULT_HOT_PIXEL_SEED),
            lambda: 0.0,
            timing: FrameTiming::default(),
        };
        p.lambda = calibrate_lambda(&p, DEFAULT_P_CLICK).expect("default target is feasible");
        p
    }

    /// An ideal array with no dark counts, crosstalk or hot pixels.
    pub fn ideal(rows: usize, cols: usize, eta: f64, lambda: f64) -> Self {
        Self {
            rows,
            cols,
            eta_mean: eta,
            eta_tol: 0.0,
            p_dark: 0.0,
            p_cross: 0.0,
            hot_pixels: Vec::new(),
            lambda,
            timing: FrameTiming::default(),
        }
    }

    #[inline]
    pub fn detectors(&self) -> usize {
        self.rows * self.cols
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidParameter(msg));
        if self.rows == 0 || self.cols == 0 {
            return bad(alloc::format!("empty geometry {}x{}", self.rows, self.cols));
        }
        if !(self.eta_mean > 0.0 && self.eta_mean <= 1.0) {
            return bad(alloc::format!("eta_mean {} outside (0, 1]", self.eta_mean));
        }
        if !(self.eta_tol >= 0.0
            && (self.eta_tol == 0.0
                || (self.eta_mean - self.eta_tol > 0.0 && self.eta_mean + self.eta_tol < 1.0)))
        {
            return bad(alloc::format!(
                "eta range {} +- {} must stay inside (0, 1)",
                self.eta_mean, self.eta_tol
            ));
        }
        for (name, p) in [("p_dark", self.p_dark), ("p_cross", self.p_cross)] {
            if !(0.0..1.0).contains(&p) {
                return bad(alloc::format!("{name} = {p} outside [0, 1)"));
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(alloc::format!("lambda = {} must be finite and >= 0", self.lambda));
        }
        let m = self.detectors();
        if self.hot_pixels.windows(2).any(|w| w[0] >= w[1]) {
            return bad("hot pixel list must be sorted and unique".into());
        }
        if let Some(&last) = self.hot_pixels.last() {
            if last as usize >= m {
                return bad(alloc::format!("hot pixel {last} outside array of {m}"));
            }
        }
        Ok(())
    }

    /// Worst-case efficiency candidates, lower endpoint first.
    pub fn eta_range(&self) -> (f64, f64) {
        (self.eta_mean - self.eta_tol, self.eta_mean + self.eta_tol)
    }

    fn hot_mask(&self) -> BitStream {
        let mut mask = BitStream::zeros(self.detectors());
        for &h in &self.hot_pixels {
            mask.set(h as usize, true);
        }
        mask
    }
}

/// `count` distinct detector indices drawn uniformly from `0..m`, sorted.
pub fn random_hot_pixels(m: usize, count: usize, seed: u64) -> Vec<u32> {
    assert!(count <= m, "cannot place {count} hot pixels on {m} detectors");
    let mut rng = substream(seed, u64::MAX);
    // partial Fisher-Yates
    let mut idx: Vec<u32> = (0..m as u32).collect();
    for i in 0..count {
        let j = rng.random_range(i..m);
        idx.swap(i, j);
    }
    idx.truncate(count);
    idx.sort_unstable();
    idx
}

/// Side information an adversary may hold about one frame.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideInfo {
    /// Photons that reached the array.
    pub n: u64,
    /// Dark-count string; bit `i` set means detector `i` was forced to click.
    pub dark: BitStream,
}

/// Per-detector click probability from photons and dark counts alone.
pub fn click_probability(eta: f64, p_dark: f64, lambda: f64, m: usize) -> f64 {
    1.0 - (1.0 - p_dark) * libm::exp(-eta * lambda / m as f64)
}

/// Mean photon number giving each (non-hot) detector the click probability
/// `target`, counting photon detections and dark counts but not crosstalk.
pub fn calibrate_lambda(profile: &DeviceProfile, target: f64) -> Result<f64> {
    let floor = profile.p_dark;
    if target == floor {
        return Ok(0.0);
    }
    if !(target > floor && target < 1.0) {
        return Err(Error::InfeasibleTarget { target, floor });
    }
    if profile.eta_mean <= 0.0 {
        return Err(Error::InfeasibleTarget { target, floor });
    }
    let m = profile.detectors() as f64;
    Ok(-m * libm::log((1.0 - target) / (1.0 - floor)) / profile.eta_mean)
}

/// Which pixels a ones-fraction refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasAccounting {
    /// Every pixel, hot pixels included.
    AllPixels,
    /// Hot pixels left out.
    ExcludeHot,
}

fn neighbours(rows: usize, cols: usize, i: usize) -> ([usize; 4], usize) {
    let (r, c) = (i / cols, i % cols);
    let mut out = [0usize; 4];
    let mut n = 0;
    if r > 0 {
        out[n] = i - cols;
        n += 1;
    }
    if r + 1 < rows {
        out[n] = i + cols;
        n += 1;
    }
    if c > 0 {
        out[n] = i - 1;
        n += 1;
    }
    if c + 1 < cols {
        out[n] = i + 1;
        n += 1;
    }
    (out, n)
}

/// Exact expected fraction of ones in a frame, crosstalk included.
///
/// Photon counts per detector are independent Poisson(lambda / m), so primary
/// clicks are independent and each neighbour `j` induces a click on `i` with
/// probability `q * p_cross / deg(j)`.
pub fn expected_ones_fraction(profile: &DeviceProfile, lambda: f64, accounting: BiasAccounting) -> f64 {
    let m = profile.detectors();
    let q = click_probability(profile.eta_mean, profile.p_dark, lambda, m);
    let hot = profile.hot_mask();
    let mut total = 0.0;
    let mut counted = 0usize;
    for i in 0..m {
        if hot.get(i) {
            if accounting == BiasAccounting::AllPixels {
                total += 1.0;
                counted += 1;
            }
            continue;
        }
        let (nb, deg) = neighbours(profile.rows, profile.cols, i);
        let mut quiet = 1.0 - q;
        for &j in &nb[..deg] {
            let (_, deg_j) = neighbours(profile.rows, profile.cols, j);
            quiet *= 1.0 - q * profile.p_cross / deg_j as f64;
        }
        total += 1.0 - quiet;
        counted += 1;
    }
    if counted == 0 {
        0.0
    } else {
        total / counted as f64
    }
}

/// Mean photon number for which the expected ones-fraction of a frame,
/// under the chosen accounting, equals `target`.
pub fn calibrate_lambda_ones_fraction(
    profile: &DeviceProfile,
    target: f64,
    accounting: BiasAccounting,
) -> Result<f64> {
    let floor = expected_ones_fraction(profile, 0.0, accounting);
    if target == floor {
        return Ok(0.0);
    }
    if !(target > floor && target < 1.0) {
        return Err(Error::InfeasibleTarget { target, floor });
    }
    let mut lo = 0.0;
    let mut hi = calibrate_lambda(profile, target.max(profile.p_dark + 1e-12))?.max(1.0);
    while expected_ones_fraction(profile, hi, accounting) < target {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::InfeasibleTarget { target, floor });
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if expected_ones_fraction(profile, mid, accounting) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    let d = Poisson::new(lambda).expect("positive finite lambda");
    let x: f64 = d.sample(rng);
    x as u64
}

/// Total photon number `n ~ Poisson(lambda)` and its multinomial split over
/// `m` equally illuminated detectors.
pub fn sample_photon_counts<R: Rng + ?Sized>(lambda: f64, m: usize, rng: &mut R) -> (u64, Vec<u32>) {
    let n = poisson(lambda, rng);
    let mut counts = vec![0u32; m];
    for _ in 0..n {
        counts[rng.random_range(0..m)] += 1;
    }
    (n, counts)
}

/// Visits indices in `0..len` independently with probability `p`, in order.
fn for_each_bernoulli<R: Rng + ?Sized>(len: usize, p: f64, rng: &mut R, mut f: impl FnMut(usize, &mut R)) {
    if p <= 0.0 || len == 0 {
        return;
    }
    let geo = Geometric::new(p).expect("probability in (0, 1]");
    let mut i = geo.sample(rng);
    while i < len as u64 {
        f(i as usize, rng);
        i = i.saturating_add(1).saturating_add(geo.sample(rng));
    }
}

/// One frame and the side information that produced it.
///
/// Photons are thinned before placement (`Binomial(n, eta)` detected photons
/// placed uniformly), which gives each detector with `c` incident photons
/// the click probability `1 - (1 - eta)^c`.
pub fn sample_frame<R: Rng + ?Sized>(profile: &DeviceProfile, rng: &mut R) -> (BitFrame, SideInfo) {
    let m = profile.detectors();
    let n = poisson(profile.lambda, rng);
    let detected = if n == 0 || profile.eta_mean <= 0.0 {
        0
    } else {
        Binomial::new(n, profile.eta_mean.min(1.0))
            .expect("valid binomial")
            .sample(rng)
    };

    let mut primary = BitStream::zeros(m);
    for _ in 0..detected {
        primary.set(rng.random_range(0..m), true);
    }

    let mut dark = BitStream::zeros(m);
    for_each_bernoulli(m, profile.p_dark, rng, |i, _| {
        dark.set(i, true);
    });
    let mut clicks = primary.words().to_vec();
    for (c, d) in clicks.iter_mut().zip(dark.words()) {
        *c |= d;
    }

    let mut frame = clicks.clone();
    if profile.p_cross > 0.0 {
        let sources: Vec<usize> = set_bits(&clicks).collect();
        for_each_bernoulli(sources.len(), profile.p_cross, rng, |k, rng| {
            let (nb, deg) = neighbours(profile.rows, profile.cols, sources[k]);
            if deg > 0 {
                let t = nb[rng.random_range(0..deg)];
                frame[t >> 6] |= 1 << (t & 63);
            }
        });
    }
    for &h in &profile.hot_pixels {
        frame[h as usize >> 6] |= 1 << (h & 63);
    }

    let bits = BitStream::from_words(frame, m).expect("frame sized for m");
    let frame = BitFrame::from_stream(profile.rows, profile.cols, bits).expect("geometry matches");
    (frame, SideInfo { n, dark })
}

/// Frame `index` of the run identified by `seed`.
pub fn frame_at(profile: &DeviceProfile, seed: u64, index: u64) -> (BitFrame, SideInfo) {
    sample_frame(profile, &mut substream(seed, index))
}

fn set_bits(words: &[u64]) -> impl Iterator<Item = usize> + '_ {
    words.iter().enumerate().flat_map(|(w, &word)| {
        let mut x = word;
        core::iter::from_fn(move || {
            if x == 0 {
                None
            } else {
                let t = x.trailing_zeros() as usize;
                x &= x - 1;
                Some(w * 64 + t)
            }
        })
    })
}

/// Empirical per-pixel statistics over a set of frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameStatistics {
    pub frames: u64,
    /// Empirical probability of a 1 at every pixel, raster order.
    pub per_pixel: Vec<f64>,
    /// Ones fraction over all pixels.
    pub ones_fraction: f64,
    /// Ones fraction over pixels not in the exclusion set.
    pub ones_fraction_excluding: f64,
    /// Binomial standard deviation of a single pixel's estimate.
    pub pixel_sigma: f64,
    pub q: f64,
    /// Non-excluded pixels deviating more than `q * pixel_sigma` from the mean.
    pub outliers: Vec<usize>,
}

impl FrameStatistics {
    pub fn outlier_fraction(&self, excluded: usize) -> f64 {
        self.outliers.len() as f64 / (self.per_pixel.len() - excluded) as f64
    }
}

/// Streaming per-pixel ones counter.
#[derive(Clone, Debug, Default)]
pub struct PixelCounter {
    counts: Vec<u64>,
    frames: u64,
}

impl PixelCounter {
    pub fn new(m: usize) -> Self {
        Self {
            counts: vec![0; m],
            frames: 0,
        }
    }

    pub fn add(&mut self, frame: &BitFrame) -> Result<()> {
        if frame.len() != self.counts.len() {
            return Err(Error::DimensionMismatch {
                expected: self.counts.len(),
                found: frame.len(),
            });
        }
        for i in set_bits(frame.bits().words()) {
            self.counts[i] += 1;
        }
        self.frames += 1;
        Ok(())
    }

    pub fn frames(&self) -> u64 {
        self.frames
    }

    pub fn finish(&self, q: f64, excluded: &[u32]) -> Result<FrameStatistics> {
        if self.frames == 0 {
            return Err(Error::EmptyInput);
        }
        let f = self.frames as f64;
        let m = self.counts.len();
        let per_pixel: Vec<f64> = self.counts.iter().map(|&c| c as f64 / f).collect();
        let mut skip = vec![false; m];
        for &e in excluded {
            if (e as usize) < m {
                skip[e as usize] = true;
            }
        }
        let total: u64 = self.counts.iter().sum();
        let (kept_sum, kept) = self
            .counts
            .iter()
            .zip(&skip)
            .filter(|(_, &s)| !s)
            .fold((0u64, 0usize), |(a, n), (&c, _)| (a + c, n + 1));
        let mean = if kept == 0 { 0.0 } else { kept_sum as f64 / (kept as f64 * f) };
        let sigma = libm::sqrt(mean * (1.0 - mean) / f);
        let outliers = per_pixel
            .iter()
            .enumerate()
            .filter(|&(i, &p)| !skip[i] && libm::fabs(p - mean) > q * sigma)
            .map(|(i, _)| i)
            .collect();
        Ok(FrameStatistics {
            frames: self.frames,
            per_pixel,
            ones_fraction: total as f64 / (m as f64 * f),
            ones_fraction_excluding: mean,
            pixel_sigma: sigma,
            q,
            outliers,
        })
    }
}

/// Per-pixel ones map and global ones fraction; pixels outside `q` sigma
/// (hot pixels excluded) are flagged.
pub fn frame_statistics(frames: &[BitFrame], q: f64, excluded: &[u32]) -> Result<FrameStatistics> {
    let first = frames.first().ok_or(Error::EmptyInput)?;
    let mut counter = PixelCounter::new(first.len());
    for f in frames {
        counter.add(f)?;
    }
    counter.finish(q, excluded)
}
