use std::time::Instant;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use spadqrng_core::extract::{stream_extract, ExtractorConfig, ExtractorMode};
use spadqrng_core::rng::SubstreamRng;
use spadqrng_core::BitStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub mode: ExtractorMode,
    pub input_bits: u64,
    pub output_bits: u64,
    pub repetitions: u32,
    pub seconds: f64,
    /// Raw bits consumed per second.
    pub raw_rate: f64,
    /// Extracted bits produced per second.
    pub output_rate: f64,
}

pub fn random_stream(bits: usize, seed: u64) -> BitStream {
    let mut rng = SubstreamRng::seed_from_u64(seed);
    let words: Vec<u64> = (0..bits.div_ceil(64)).map(|_| rng.random()).collect();
    BitStream::from_words(words, bits).expect("sized")
}

/// Sustained single-stream throughput of `stream_extract` on random input,
/// repeated until at least `min_seconds` have elapsed.
pub fn bench_extract(config: &ExtractorConfig, input_bits: usize, min_seconds: f64) -> BenchReport {
    let input = random_stream(input_bits, 0xbe4c);
    // warm-up
    std::hint::black_box(stream_extract(config, &input));
    let mut output_bits;
    let start = Instant::now();
    let mut reps = 0u32;
    loop {
        let out = stream_extract(config, &input);
        output_bits = out.bits.len() as u64;
        std::hint::black_box(&out);
        reps += 1;
        if start.elapsed().as_secs_f64() >= min_seconds {
            break;
        }
    }
    let seconds = start.elapsed().as_secs_f64();
    BenchReport {
        mode: config.mode(),
        input_bits: input_bits as u64,
        output_bits,
        repetitions: reps,
        seconds,
        raw_rate: input_bits as f64 * reps as f64 / seconds,
        output_rate: output_bits as f64 * reps as f64 / seconds,
    }
}
