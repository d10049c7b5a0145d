//! Two-universal extraction by GF(2) vector-matrix multiplication.
//!
//! The array is read out 512 bits at a time. Two consecutive reads form one
//! 1024-bit input block (first read in positions `0..512`), which is
//! multiplied by a `k x 1024` binary matrix to give one `k`-bit output word.
//! Output word bits are appended to the stream bit 0 first.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::{BinaryMatrix, BitStream};
use crate::{Error, Result};

/// Raw bits per extractor input block.
pub const BLOCK_BITS: usize = 1024;
/// Raw bits per array read (four rows of 128 pixels).
pub const READ_BITS: usize = 512;
/// Nominal output word rate of the on-chip extractors, in Hz.
pub const WORD_RATE_HZ: f64 = 12.5e6;

const BLOCK_WORDS: usize = BLOCK_BITS / 64;
const READ_WORDS: usize = READ_BITS / 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractorMode {
    /// Hard-wired 32 x 1024 matrix.
    Fixed,
    /// Externally loaded 8 x 1024 matrix.
    Variable,
}

impl ExtractorMode {
    pub const fn output_bits(self) -> usize {
        match self {
            Self::Fixed => 32,
            Self::Variable => 8,
        }
    }

    /// Nominal output throughput in bit/s at the on-chip word rate.
    pub fn nominal_throughput(self) -> f64 {
        self.output_bits() as f64 * WORD_RATE_HZ
    }
}

impl core::fmt::Display for ExtractorMode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Self::Fixed => "fixed",
            Self::Variable => "variable",
        })
    }
}

impl core::str::FromStr for ExtractorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(Self::Fixed),
            "variable" => Ok(Self::Variable),
            other => Err(Error::InvalidParameter(alloc::format!(
                "unknown extractor mode {other:?} (expected fixed or variable)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtractorConfig {
    matrix: BinaryMatrix,
    mode: ExtractorMode,
}

impl ExtractorConfig {
    pub fn new(matrix: BinaryMatrix, mode: ExtractorMode) -> Result<Self> {
        if matrix.cols() != BLOCK_BITS {
            return Err(Error::DimensionMismatch {
                expected: BLOCK_BITS,
                found: matrix.cols(),
            });
        }
        if matrix.rows() != mode.output_bits() {
            return Err(Error::DimensionMismatch {
                expected: mode.output_bits(),
                found: matrix.rows(),
            });
        }
        Ok(Self { matrix, mode })
    }

    pub fn matrix(&self) -> &BinaryMatrix {
        &self.matrix
    }

    pub fn mode(&self) -> ExtractorMode {
        self.mode
    }

    pub fn output_bits(&self) -> usize {
        self.matrix.rows()
    }
}

/// Multiplies `matrix` by `input` over GF(2).
///
/// Bit `j` of the result is the parity of `row_j AND input`. Works for any
/// matrix with at most 64 rows.
pub fn extract_word(matrix: &BinaryMatrix, input: &BitStream) -> Result<u64> {
    if input.len() != matrix.cols() {
        return Err(Error::DimensionMismatch {
            expected: matrix.cols(),
            found: input.len(),
        });
    }
    if matrix.rows() > 64 {
        return Err(Error::InvalidParameter(alloc::format!(
            "at most 64 output bits per word, got {}",
            matrix.rows()
        )));
    }
    let x = input.words();
    let mut out = 0u64;
    for j in 0..matrix.rows() {
        let acc = matrix
            .row_words(j)
            .iter()
            .zip(x)
            .fold(0u64, |acc, (r, v)| acc ^ (r & v));
        out |= u64::from(acc.count_ones() & 1) << j;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Simd {
    Baseline,
    #[cfg(all(feature = "std", target_arch = "x86_64"))]
    Avx2,
    #[cfg(all(feature = "std", target_arch = "x86_64"))]
    Avx512,
}

impl Simd {
    fn detect() -> Self {
        #[cfg(all(feature = "std", target_arch = "x86_64"))]
        {
            if std::is_x86_feature_detected!("avx512f") && std::is_x86_feature_detected!("avx512vl") {
                return Simd::Avx512;
            }
            if std::is_x86_feature_detected!("avx2") {
                return Simd::Avx2;
            }
        }
        Simd::Baseline
    }
}

/// Column-block-major copy of a `k x 1024` matrix for the streaming kernel.
#[derive(Clone)]
struct Kernel {
    k: usize,
    simd: Simd,
    // words[w * k + j] = word w of row j
    words: Vec<u64>,
}

impl core::fmt::Debug for Kernel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Kernel").field("k", &self.k).field("simd", &self.simd).finish()
    }
}

impl Kernel {
    fn new(matrix: &BinaryMatrix) -> Self {
        let k = matrix.rows();
        let mut words = vec![0u64; BLOCK_WORDS * k];
        for j in 0..k {
            for (w, &v) in matrix.row_words(j).iter().enumerate() {
                words[w * k + j] = v;
            }
        }
        Self {
            k,
            simd: Simd::detect(),
            words,
        }
    }

    #[inline]
    fn apply(&self, block: &[u64; BLOCK_WORDS]) -> u64 {
        match self.simd {
            Simd::Baseline => self.apply_baseline(block),
            // SAFETY: the variant is only chosen when the CPU reports the feature.
            #[cfg(all(feature = "std", target_arch = "x86_64"))]
            Simd::Avx2 => unsafe { self.apply_avx2(block) },
            #[cfg(all(feature = "std", target_arch = "x86_64"))]
            Simd::Avx512 => unsafe { self.apply_avx512(block) },
        }
    }

    #[inline(always)]
    fn apply_any(&self, block: &[u64; BLOCK_WORDS]) -> u64 {
        match self.k {
            32 => self.apply_const::<32>(block),
            8 => self.apply_const::<8>(block),
            _ => self.apply_dyn(block),
        }
    }

    fn apply_baseline(&self, block: &[u64; BLOCK_WORDS]) -> u64 {
        self.apply_any(block)
    }

    #[cfg(all(feature = "std", target_arch = "x86_64"))]
    #[target_feature(enable = "avx2,popcnt")]
    unsafe fn apply_avx2(&self, block: &[u64; BLOCK_WORDS]) -> u64 {
        self.apply_any(block)
    }

    #[cfg(all(feature = "std", target_arch = "x86_64"))]
    #[target_feature(enable = "avx512f,avx512vl,avx2,popcnt")]
    unsafe fn apply_avx512(&self, block: &[u64; BLOCK_WORDS]) -> u64 {
        self.apply_any(block)
    }

    // Same arithmetic on every path: AND with the column word, XOR into the
    // row accumulator, parity by popcount at the end.
    #[inline(always)]
    fn apply_const<const K: usize>(&self, block: &[u64; BLOCK_WORDS]) -> u64 {
        let mut acc = [0u64; K];
        for (w, &x) in block.iter().enumerate() {
            let col: &[u64; K] = self.words[w * K..(w + 1) * K]
                .try_into()
                .expect("kernel sized for K rows");
            for j in 0..K {
                acc[j] ^= col[j] & x;
            }
        }
        parities(&acc)
    }

    #[inline(always)]
    fn apply_dyn(&self, block: &[u64; BLOCK_WORDS]) -> u64 {
        let mut acc = [0u64; 64];
        let k = self.k;
        for (w, &x) in block.iter().enumerate() {
            for j in 0..k {
                acc[j] ^= self.words[w * k + j] & x;
            }
        }
        parities(&acc[..k])
    }
}

#[inline(always)]
fn parities(acc: &[u64]) -> u64 {
    let mut out = 0u64;
    for (j, &a) in acc.iter().enumerate() {
        out |= u64::from(a.count_ones() & 1) << j;
    }
    out
}

/// Result of draining a [`StreamExtractor`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StreamOutput {
    pub bits: BitStream,
    /// Raw bits held back because they did not complete an input block.
    pub buffered_bits: usize,
}

/// Stateful extractor fed one 512-bit read at a time.
///
/// Not thread safe by itself; run one instance per stream.
#[derive(Clone, Debug)]
pub struct StreamExtractor {
    kernel: Kernel,
    pending: Option<[u64; READ_WORDS]>,
    partial: BitStream,
    out: BitStream,
    words_emitted: u64,
}

impl StreamExtractor {
    pub fn new(config: &ExtractorConfig) -> Self {
        Self {
            kernel: Kernel::new(config.matrix()),
            pending: None,
            partial: BitStream::new(),
            out: BitStream::new(),
            words_emitted: 0,
        }
    }

    pub fn output_bits(&self) -> usize {
        self.kernel.k
    }

    pub fn words_emitted(&self) -> u64 {
        self.words_emitted
    }

    /// Feeds one read; returns the output word when it completes a block.
    pub fn push_read(&mut self, read: &[u64; READ_WORDS]) -> Option<u64> {
        match self.pending.take() {
            None => {
                self.pending = Some(*read);
                None
            }
            Some(first) => {
                let mut block = [0u64; BLOCK_WORDS];
                block[..READ_WORDS].copy_from_slice(&first);
                block[READ_WORDS..].copy_from_slice(read);
                let word = self.kernel.apply(&block);
                self.out.push_bits(word, self.kernel.k);
                self.words_emitted += 1;
                Some(word)
            }
        }
    }

    /// Feeds an arbitrary chunk of raw bits; incomplete reads are carried
    /// over to the next call.
    pub fn push_bits(&mut self, raw: &BitStream) {
        let mut pos = 0;
        if !self.partial.is_empty() {
            let need = READ_BITS - self.partial.len();
            let take = need.min(raw.len());
            self.partial.extend_from_stream(&raw.slice(0, take));
            pos = take;
            if self.partial.len() == READ_BITS {
                let read: [u64; READ_WORDS] =
                    self.partial.words().try_into().expect("one full read");
                self.partial = BitStream::new();
                self.push_read(&read);
            }
        }
        if pos % 64 == 0 {
            let words = raw.words();
            // Whole blocks straight from the input when no read is pending.
            while self.pending.is_none() && pos + BLOCK_BITS <= raw.len() {
                let w0 = pos / 64;
                let block: &[u64; BLOCK_WORDS] = words[w0..w0 + BLOCK_WORDS]
                    .try_into()
                    .expect("block of words");
                let word = self.kernel.apply(block);
                self.out.push_bits(word, self.kernel.k);
                self.words_emitted += 1;
                pos += BLOCK_BITS;
            }
            while pos + READ_BITS <= raw.len() {
                let w0 = pos / 64;
                let read: [u64; READ_WORDS] =
                    words[w0..w0 + READ_WORDS].try_into().expect("read");
                self.push_read(&read);
                pos += READ_BITS;
            }
        } else {
            while pos + READ_BITS <= raw.len() {
                let read: [u64; READ_WORDS] = raw
                    .slice(pos, READ_BITS)
                    .words()
                    .try_into()
                    .expect("read");
                self.push_read(&read);
                pos += READ_BITS;
            }
        }
        if pos < raw.len() {
            self.partial
                .extend_from_stream(&raw.slice(pos, raw.len() - pos));
        }
    }

    /// Takes the output produced so far, leaving buffered input in place.
    pub fn take_output(&mut self) -> BitStream {
        core::mem::take(&mut self.out)
    }

    pub fn buffered_bits(&self) -> usize {
        self.pending.map_or(0, |_| READ_BITS) + self.partial.len()
    }

    pub fn finish(mut self) -> StreamOutput {
        StreamOutput {
            buffered_bits: self.buffered_bits(),
            bits: self.take_output(),
        }
    }
}

/// Runs a whole raw stream through the extractor.
pub fn stream_extract(config: &ExtractorConfig, raw: &BitStream) -> StreamOutput {
    let mut ex = StreamExtractor::new(config);
    ex.push_bits(raw);
    ex.finish()
}

/// Uniformly random `k x n` matrix drawn from `rng`.
pub fn generate_matrix<R: Rng + ?Sized>(k: usize, n: usize, rng: &mut R) -> Result<BinaryMatrix> {
    check_shape(k, n)?;
    let mut bits = BitStream::with_capacity(k * n);
    let mut remaining = k * n;
    while remaining > 0 {
        let take = remaining.min(64);
        bits.push_bits(rng.next_u64(), take);
        remaining -= take;
    }
    BinaryMatrix::from_stream(k, n, &bits)
}

/// Matrix filled row by row from an external entropy stream.
pub fn matrix_from_entropy(k: usize, n: usize, entropy: &BitStream) -> Result<BinaryMatrix> {
    check_shape(k, n)?;
    BinaryMatrix::from_stream(k, n, entropy)
}

fn check_shape(k: usize, n: usize) -> Result<()> {
    if k == 0 || n == 0 || k > n {
        return Err(Error::InvalidParameter(alloc::format!(
            "need 0 < k <= n, got k={k} n={n}"
        )));
    }
    Ok(())
}
