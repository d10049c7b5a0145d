//! Bitstream, matrix and frame-dump files.
//!
//! Raw bitstreams are packed LSB-first; the exact bit count travels in a
//! `<file>.meta.json` sidecar. ASCII streams are `0`/`1` characters
//! (whitespace ignored on input).

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spadqrng_core::{BinaryMatrix, BitFrame, BitStream};

use crate::error::{AppError, AppResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Raw,
    Ascii,
}

/// Sidecar metadata of a bitstream file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamMeta {
    pub bits: u64,
    pub format: Format,
    /// Present for simulator frame dumps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<FrameDumpMeta>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameDumpMeta {
    pub profile_hash: String,
    pub seed: u64,
    pub frame_count: u64,
    pub rows: usize,
    pub cols: usize,
    /// Rate of the chip's raw tap this stream stands for, bits per second.
    pub raw_bit_rate: f64,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> AppResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| AppError::Config(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| AppError::io(path, e))
}

pub fn read_meta(path: &Path) -> AppResult<Option<StreamMeta>> {
    let side = sidecar_path(path);
    if !side.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&side).map_err(|e| AppError::io(&side, e))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| AppError::io(&side, std::io::Error::new(std::io::ErrorKind::InvalidData, e)))
}

/// Incremental bitstream writer that produces the sidecar on `finish`.
pub struct StreamWriter {
    path: PathBuf,
    out: BufWriter<File>,
    format: Format,
    bits: u64,
    pending: BitStream,
}

impl std::fmt::Debug for StreamWriter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StreamWriter").field("path", &self.path).field("bits", &self.bits).finish()
    }
}

impl StreamWriter {
    pub fn create(path: &Path, format: Format) -> AppResult<Self> {
        let file = File::create(path).map_err(|e| AppError::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            format,
            bits: 0,
            pending: BitStream::new(),
        })
    }

    pub fn write(&mut self, bits: &BitStream) -> AppResult<()> {
        self.bits += bits.len() as u64;
        let result = match self.format {
            Format::Ascii => self.out.write_all(bits.to_ascii().as_bytes()),
            Format::Raw => {
                // only whole bytes leave the buffer
                self.pending.extend_from_stream(bits);
                let whole = self.pending.len() / 8 * 8;
                let bytes = self.pending.slice(0, whole).to_bytes();
                self.pending = self.pending.slice(whole, self.pending.len() - whole);
                self.out.write_all(&bytes)
            }
        };
        result.map_err(|e| AppError::io(&self.path, e))
    }

    pub fn finish(mut self, frames: Option<FrameDumpMeta>) -> AppResult<StreamMeta> {
        if !self.pending.is_empty() {
            let tail = self.pending.to_bytes();
            self.out.write_all(&tail).map_err(|e| AppError::io(&self.path, e))?;
        }
        self.out.flush().map_err(|e| AppError::io(&self.path, e))?;
        let meta = StreamMeta {
            bits: self.bits,
            format: self.format,
            frames,
        };
        write_json(&sidecar_path(&self.path), &meta)?;
        Ok(meta)
    }
}

pub fn write_bitstream(path: &Path, bits: &BitStream, format: Format) -> AppResult<StreamMeta> {
    let mut w = StreamWriter::create(path, format)?;
    w.write(bits)?;
    w.finish(None)
}

/// Reads a bitstream. The sidecar's bit count wins over the file size when
/// present; it must not exceed the data.
pub fn read_bitstream(path: &Path, format: Format) -> AppResult<BitStream> {
    let meta = read_meta(path)?;
    let data = fs::read(path).map_err(|e| AppError::io(path, e))?;
    let bits = match format {
        Format::Raw => {
            let len = meta.as_ref().map_or(data.len() * 8, |m| m.bits as usize);
            BitStream::from_bytes(&data, len)?
        }
        Format::Ascii => {
            let text = std::str::from_utf8(&data)
                .map_err(|e| AppError::io(path, std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?;
            let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
            let all = BitStream::from_ascii(&compact)?;
            match meta {
                Some(m) if (m.bits as usize) < all.len() => all.slice(0, m.bits as usize),
                Some(m) if m.bits as usize > all.len() => {
                    return Err(spadqrng_core::Error::LengthExceedsData {
                        declared: m.bits as usize,
                        available: all.len(),
                    }
                    .into())
                }
                _ => all,
            }
        }
    };
    Ok(bits)
}

pub fn write_matrix(path: &Path, matrix: &BinaryMatrix) -> AppResult<()> {
    fs::write(path, matrix.to_text()).map_err(|e| AppError::io(path, e))
}

pub fn read_matrix(path: &Path) -> AppResult<BinaryMatrix> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    Ok(BinaryMatrix::from_text(&text)?)
}

/// Splits a frame dump back into frames.
pub fn read_frames(path: &Path) -> AppResult<(Vec<BitFrame>, FrameDumpMeta)> {
    let meta = read_meta(path)?
        .and_then(|m| m.frames)
        .ok_or_else(|| AppError::Config(format!("{}: no frame metadata sidecar", path.display())))?;
    let bits = read_bitstream(path, Format::Raw)?;
    let m = meta.rows * meta.cols;
    let frames = (0..meta.frame_count as usize)
        .map(|i| BitFrame::from_stream(meta.rows, meta.cols, bits.slice(i * m, m)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((frames, meta))
}
