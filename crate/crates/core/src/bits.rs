//! Bit containers and their encodings.
//!
//! Bit `i` of a [`BitStream`] lives in word `i / 64` at bit position `i % 64`.
//! The byte encoding follows the same convention: the first bit of a stream
//! is the least significant bit of byte 0.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Growable sequence of bits packed into 64-bit words.
#[derive(Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitStream {
    words: Vec<u64>,
    len: usize,
}

impl core::fmt::Debug for BitStream {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        const SHOWN: usize = 64;
        write!(f, "BitStream({} bits: ", self.len)?;
        for i in 0..self.len.min(SHOWN) {
            f.write_char(if self.get(i) { '1' } else { '0' })?;
        }
        if self.len > SHOWN {
            f.write_str("...")?;
        }
        f.write_char(')')
    }
}

impl BitStream {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(bits: usize) -> Self {
        Self {
            words: Vec::with_capacity(bits.div_ceil(64)),
            len: 0,
        }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    /// Builds a stream from packed words. Bits past `len` are cleared.
    pub fn from_words(mut words: Vec<u64>, len: usize) -> Result<Self> {
        let available = words.len() * 64;
        if len > available {
            return Err(Error::LengthExceedsData {
                declared: len,
                available,
            });
        }
        words.truncate(len.div_ceil(64));
        let mut s = Self { words, len };
        s.clear_tail();
        Ok(s)
    }

    pub fn from_bools<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut s = Self::new();
        for b in bits {
            s.push(b);
        }
        s
    }

    /// Parses a string of `'0'`/`'1'` characters, ignoring ASCII whitespace.
    pub fn from_ascii(text: &str) -> Result<Self> {
        let mut s = Self::with_capacity(text.len());
        for c in text.chars() {
            match c {
                '0' => s.push(false),
                '1' => s.push(true),
                c if c.is_ascii_whitespace() => {}
                c => {
                    return Err(Error::InvalidParameter(alloc::format!(
                        "invalid character {c:?} in ASCII bit string"
                    )))
                }
            }
        }
        Ok(s)
    }

    pub fn to_ascii(&self) -> String {
        self.iter().map(|b| if b { '1' } else { '0' }).collect()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Backing words; bits beyond `len()` in the last word are zero.
    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        (self.words[i >> 6] >> (i & 63)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        let mask = 1u64 << (i & 63);
        if value {
            self.words[i >> 6] |= mask;
        } else {
            self.words[i >> 6] &= !mask;
        }
    }

    #[inline]
    pub fn push(&mut self, bit: bool) {
        if self.len & 63 == 0 {
            self.words.push(0);
        }
        if bit {
            self.words[self.len >> 6] |= 1 << (self.len & 63);
        }
        self.len += 1;
    }

    /// Appends the low `count` bits of `value`, bit 0 first.
    pub fn push_bits(&mut self, value: u64, count: usize) {
        assert!(count <= 64);
        if count == 0 {
            return;
        }
        let value = if count == 64 {
            value
        } else {
            value & ((1u64 << count) - 1)
        };
        let offset = self.len & 63;
        if offset == 0 {
            self.words.push(value);
        } else {
            *self.words.last_mut().expect("non-empty when offset > 0") |= value << offset;
            if offset + count > 64 {
                self.words.push(value >> (64 - offset));
            }
        }
        self.len += count;
    }

    /// Appends whole words. Fast path when the stream is word aligned.
    pub fn extend_from_words(&mut self, words: &[u64], bits: usize) {
        assert!(bits <= words.len() * 64);
        if self.len & 63 == 0 {
            let n = bits.div_ceil(64);
            self.words.extend_from_slice(&words[..n]);
            self.len += bits;
            self.clear_tail();
        } else {
            let mut remaining = bits;
            for &w in words {
                if remaining == 0 {
                    break;
                }
                let take = remaining.min(64);
                self.push_bits(w, take);
                remaining -= take;
            }
        }
    }

    pub fn extend_from_stream(&mut self, other: &BitStream) {
        self.extend_from_words(&other.words, other.len);
    }

    /// Copies bits `[start, start + len)` into a new stream.
    pub fn slice(&self, start: usize, len: usize) -> BitStream {
        assert!(start + len <= self.len);
        let mut out = BitStream::with_capacity(len);
        if start & 63 == 0 {
            out.extend_from_words(&self.words[start >> 6..], len);
            return out;
        }
        let mut pos = start;
        let end = start + len;
        while pos < end {
            let take = (end - pos).min(64);
            out.push_bits(self.read_bits(pos, take), take);
            pos += take;
        }
        out
    }

    /// Reads up to 64 bits starting at `start`, bit `start` in position 0.
    #[inline]
    pub fn read_bits(&self, start: usize, count: usize) -> u64 {
        debug_assert!(count <= 64 && start + count <= self.len);
        if count == 0 {
            return 0;
        }
        let w = start >> 6;
        let off = start & 63;
        let mut v = self.words[w] >> off;
        if off != 0 && off + count > 64 {
            v |= self.words[w + 1] << (64 - off);
        }
        if count < 64 {
            v &= (1u64 << count) - 1;
        }
        v
    }

    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = bool> + '_ {
        (0..self.len).map(move |i| (self.words[i >> 6] >> (i & 63)) & 1 == 1)
    }

    /// Bitwise XOR of two equal-length streams.
    pub fn xor(&self, other: &BitStream) -> Result<BitStream> {
        if self.len != other.len {
            return Err(Error::DimensionMismatch {
                expected: self.len,
                found: other.len,
            });
        }
        let words = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| a ^ b)
            .collect();
        Ok(BitStream {
            words,
            len: self.len,
        })
    }

    /// LSB-first byte packing: stream bit `i` is bit `i % 8` of byte `i / 8`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.len.div_ceil(8);
        let mut out = Vec::with_capacity(n);
        for w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.truncate(n);
        out
    }

    /// Inverse of [`BitStream::to_bytes`]; `len` bits are taken from `bytes`.
    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self> {
        let available = bytes.len() * 8;
        if len > available {
            return Err(Error::LengthExceedsData {
                declared: len,
                available,
            });
        }
        let used = &bytes[..len.div_ceil(8)];
        let mut words = Vec::with_capacity(used.len().div_ceil(8));
        for chunk in used.chunks(8) {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            words.push(u64::from_le_bytes(buf));
        }
        Self::from_words(words, len)
    }

    fn clear_tail(&mut self) {
        let rem = self.len & 63;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }
}

impl FromIterator<bool> for BitStream {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        Self::from_bools(iter)
    }
}

/// Packs a bit stream into bytes, first bit in the LSB of byte 0.
pub fn pack_bits(stream: &BitStream) -> Vec<u8> {
    stream.to_bytes()
}

/// Unpacks `len` bits previously produced by [`pack_bits`].
pub fn unpack_bits(bytes: &[u8], len: usize) -> Result<BitStream> {
    BitStream::from_bytes(bytes, len)
}

/// Number of ones in a bit sequence.
pub fn hamming_weight(bits: &BitStream) -> u64 {
    bits.count_ones()
}

/// One readout of the whole detector array.
///
/// Pixel `(r, c)` is stored at linear index `r * cols + c`, i.e. raster
/// order from the top-left corner.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitFrame {
    rows: usize,
    cols: usize,
    bits: BitStream,
}

impl BitFrame {
    pub const DEFAULT_ROWS: usize = 128;
    pub const DEFAULT_COLS: usize = 128;

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: BitStream::zeros(rows * cols),
        }
    }

    pub fn from_stream(rows: usize, cols: usize, bits: BitStream) -> Result<Self> {
        if bits.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: bits.len(),
            });
        }
        Ok(Self { rows, cols, bits })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.rows && col < self.cols);
        row * self.cols + col
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> bool {
        self.bits.get(self.index(row, col))
    }

    #[inline]
    pub fn set_pixel(&mut self, row: usize, col: usize, value: bool) {
        let i = self.index(row, col);
        self.bits.set(i, value);
    }

    #[inline]
    pub fn bits(&self) -> &BitStream {
        &self.bits
    }

    pub fn into_bits(self) -> BitStream {
        self.bits
    }

    pub fn count_ones(&self) -> u64 {
        self.bits.count_ones()
    }
}

/// A `k x n` matrix over GF(2).
///
/// Row `j` is stored as `ceil(n / 64)` words using the same bit order as
/// [`BitStream`], so a row can be AND-ed directly against an input block.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryMatrix {
    k: usize,
    n: usize,
    words_per_row: usize,
    data: Vec<u64>,
}

impl core::fmt::Debug for BinaryMatrix {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("BinaryMatrix")
            .field("k", &self.k)
            .field("n", &self.n)
            .finish_non_exhaustive()
    }
}

impl BinaryMatrix {
    pub fn zeros(k: usize, n: usize) -> Result<Self> {
        if k == 0 || n == 0 {
            return Err(Error::InvalidParameter(alloc::format!(
                "matrix dimensions must be positive, got {k}x{n}"
            )));
        }
        let words_per_row = n.div_ceil(64);
        Ok(Self {
            k,
            n,
            words_per_row,
            data: vec![0; k * words_per_row],
        })
    }

    /// Builds a matrix from `k` row streams of equal length.
    pub fn from_rows(rows: &[BitStream]) -> Result<Self> {
        let n = rows.first().map_or(0, BitStream::len);
        let mut m = Self::zeros(rows.len(), n)?;
        for (j, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            m.row_words_mut(j).copy_from_slice(row.words());
        }
        Ok(m)
    }

    /// Fills a matrix row by row from a bit stream (`k * n` bits consumed).
    pub fn from_stream(k: usize, n: usize, bits: &BitStream) -> Result<Self> {
        let needed = k * n;
        if bits.len() < needed {
            return Err(Error::InsufficientEntropy {
                needed,
                available: bits.len(),
            });
        }
        let mut m = Self::zeros(k, n)?;
        for j in 0..k {
            let row = bits.slice(j * n, n);
            m.row_words_mut(j).copy_from_slice(row.words());
        }
        Ok(m)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        assert!(row < self.k && col < self.n);
        (self.data[row * self.words_per_row + (col >> 6)] >> (col & 63)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        assert!(row < self.k && col < self.n);
        let w = &mut self.data[row * self.words_per_row + (col >> 6)];
        let mask = 1u64 << (col & 63);
        if value {
            *w |= mask;
        } else {
            *w &= !mask;
        }
    }

    #[inline]
    pub fn row_words(&self, row: usize) -> &[u64] {
        &self.data[row * self.words_per_row..(row + 1) * self.words_per_row]
    }

    fn row_words_mut(&mut self, row: usize) -> &mut [u64] {
        &mut self.data[row * self.words_per_row..(row + 1) * self.words_per_row]
    }

    pub fn count_ones(&self) -> u64 {
        self.data.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    /// Text encoding: a `"k n"` header line followed by one line per row of
    /// `ceil(n / 4)` lowercase hex digits. Within a row, column 0 is the most
    /// significant bit of the first digit; the last digit is zero padded.
    pub fn to_text(&self) -> String {
        let digits = self.n.div_ceil(4);
        let mut out = String::with_capacity(16 + self.k * (digits + 1));
        let _ = writeln!(out, "{} {}", self.k, self.n);
        for j in 0..self.k {
            for d in 0..digits {
                let mut nibble = 0u32;
                for b in 0..4 {
                    let col = d * 4 + b;
                    if col < self.n && self.get(j, col) {
                        nibble |= 8 >> b;
                    }
                }
                out.push(char::from_digit(nibble, 16).expect("nibble < 16"));
            }
            out.push('\n');
        }
        out
    }

    /// Parses the encoding produced by [`BinaryMatrix::to_text`].
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::MatrixHeader("missing header line".into()))?;
        let mut fields = header.split_whitespace();
        let parse = |f: Option<&str>, what: &str| -> Result<usize> {
            let f = f.ok_or_else(|| Error::MatrixHeader(alloc::format!("missing {what}")))?;
            f.parse::<usize>()
                .map_err(|_| Error::MatrixHeader(alloc::format!("{what} is not a decimal: {f:?}")))
        };
        let k = parse(fields.next(), "row count")?;
        let n = parse(fields.next(), "column count")?;
        if fields.next().is_some() {
            return Err(Error::MatrixHeader(alloc::format!(
                "unexpected trailing fields in {header:?}"
            )));
        }
        if k == 0 || n == 0 {
            return Err(Error::MatrixHeader(alloc::format!(
                "dimensions must be positive, got {k} {n}"
            )));
        }
        let digits = n.div_ceil(4);
        let mut m = Self::zeros(k, n)?;
        let mut found = 0;
        for (j, line) in lines.enumerate() {
            if j >= k {
                return Err(Error::MatrixHeader(alloc::format!(
                    "more than the declared {k} rows"
                )));
            }
            let line = line.trim();
            if line.len() != digits {
                return Err(Error::MatrixRowLength {
                    row: j,
                    expected: digits,
                    found: line.chars().count(),
                });
            }
            for (d, ch) in line.chars().enumerate() {
                let nibble = match ch {
                    '0'..='9' | 'a'..='f' => ch.to_digit(16).expect("hex digit"),
                    _ => {
                        return Err(Error::MatrixHex {
                            row: j,
                            col: d,
                            digit: ch,
                        })
                    }
                };
                for b in 0..4 {
                    let col = d * 4 + b;
                    if nibble & (8 >> b) != 0 {
                        if col >= n {
                            return Err(Error::MatrixHex {
                                row: j,
                                col: d,
                                digit: ch,
                            });
                        }
                        m.set(j, col, true);
                    }
                }
            }
            found += 1;
        }
        if found != k {
            return Err(Error::MatrixTruncated { expected: k, found });
        }
        Ok(m)
    }
}
