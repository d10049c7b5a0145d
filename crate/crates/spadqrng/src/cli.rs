//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use serde::Serialize;
use spadqrng_core::entropy::max_k;
use spadqrng_core::extract::{generate_matrix, matrix_from_entropy, stream_extract, ExtractorConfig, ExtractorMode, BLOCK_BITS};
use spadqrng_core::rng::SubstreamRng;
use spadqrng_core::source::{expected_ones_fraction, BiasAccounting, DeviceProfile};
use spadqrng_core::stats::{battery, hamming_histogram, BatteryConfig, HistogramReport, TestReport};
use spadqrng_core::BitStream;

use crate::bench::bench_extract;
use crate::certify::{certify, CertifyConfig};
use crate::error::{AppError, AppResult, EXIT_OK};
use crate::io::{read_bitstream, read_matrix, write_bitstream, write_json, write_matrix, Format, FrameDumpMeta, StreamWriter};
use crate::profile::{format_profile, load_profile, profile_hash, resolve_lambda, LambdaSpec};
use crate::report::{battery_csv, battery_summary, histogram_csv};
use crate::simulate::for_each_chunk;

#[derive(Debug, Parser)]
#[command(name = "spadqrng", version, about = "Software twin of a SPAD-array quantum random number generator")]
pub struct Cli {
    /// Device profile file (key = value); chip defaults when omitted.
    #[arg(long, global = true)]
    pub profile: Option<PathBuf>,
    /// Seed for every random choice of the command.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate raw frames (the chip's raw tap) to a packed stream.
    Simulate(SimulateArgs),
    /// Solve for the mean photon number hitting a click-rate target.
    Calibrate(CalibrateArgs),
    /// Certify the min-entropy of the profile and size the extractor.
    Certify(CertifyArgs),
    /// Run the GF(2) extractor over a raw stream.
    Extract(ExtractArgs),
    /// Run the statistical battery over a stream.
    Test(TestArgs),
    /// Measure extractor throughput.
    Bench(BenchArgs),
    /// Generate an extractor matrix.
    MatrixGen(MatrixGenArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 1)]
    pub frames: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Raw)]
    pub format: Format,
    /// Also write per-frame side information (n and dark-count indices) as JSON lines.
    #[arg(long)]
    pub side_info: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Accounting {
    /// Per-detector click probability from photons and dark counts.
    Click,
    /// Ones-fraction over non-hot pixels, crosstalk included.
    Ones,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long, default_value_t = 0.5)]
    pub target: f64,
    #[arg(long, value_enum, default_value_t = Accounting::Click)]
    pub accounting: Accounting,
    /// Write the calibrated profile here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long, default_value_t = 10_000)]
    pub samples: u64,
    /// Security parameter: epsilon = 2^-E.
    #[arg(long, default_value_t = 100.0)]
    pub epsilon_exp: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Skip the small-size oracle checks.
    #[arg(long)]
    pub no_validate: bool,
    #[arg(long, default_value_t = 200_000)]
    pub oracle_trials: u64,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Raw)]
    pub input_format: Format,
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Fixed)]
    pub mode: Mode,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Raw)]
    pub format: Format,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Fixed,
    Variable,
}

impl From<Mode> for ExtractorMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Fixed => ExtractorMode::Fixed,
            Mode::Variable => ExtractorMode::Variable,
        }
    }
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Raw)]
    pub format: Format,
    #[arg(long, default_value_t = 1_000_000)]
    pub sequence_len: usize,
    /// Number of sequences; all complete ones when omitted.
    #[arg(long)]
    pub sequences: Option<usize>,
    /// JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV summary per test.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Also test the 8-bit Hamming-weight histogram against Binomial(8, P).
    #[arg(long)]
    pub hamming_p: Option<f64>,
    /// Run tests even below their recommended input sizes.
    #[arg(long)]
    pub relaxed: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum, default_value_t = Mode::Fixed)]
    pub mode: Mode,
    /// Matrix file; a seeded random matrix when omitted.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[arg(long, default_value_t = 1 << 24)]
    pub bits: usize,
    #[arg(long, default_value_t = 1.0)]
    pub seconds: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MatrixGenArgs {
    #[arg(long, value_enum, default_value_t = Mode::Fixed)]
    pub mode: Mode,
    #[arg(long)]
    pub out: PathBuf,
    /// Take the matrix bits from this raw stream instead of the seeded RNG.
    #[arg(long)]
    pub entropy: Option<PathBuf>,
}

fn load(path: &Option<PathBuf>) -> AppResult<DeviceProfile> {
    match path {
        Some(p) => load_profile(p),
        None => Ok(DeviceProfile::chip_default()),
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> AppResult<()> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value).map_err(|e| AppError::Config(e.to_string()))?);
            Ok(())
        }
    }
}

fn write_text(path: &Path, text: &str) -> AppResult<()> {
    std::fs::write(path, text).map_err(|e| AppError::io(path, e))
}

pub fn run(cli: Cli) -> AppResult<()> {
    match cli.command {
        Command::Simulate(a) => simulate(&load(&cli.profile)?, cli.seed, a),
        Command::Calibrate(a) => calibrate(load(&cli.profile)?, a),
        Command::Certify(a) => certify_cmd(&load(&cli.profile)?, cli.seed, a),
        Command::Extract(a) => extract(a),
        Command::Test(a) => test(a),
        Command::Bench(a) => bench(cli.seed, a),
        Command::MatrixGen(a) => matrix_gen(cli.seed, a),
    }
}

fn simulate(profile: &DeviceProfile, seed: u64, a: SimulateArgs) -> AppResult<()> {
    let mut writer = StreamWriter::create(&a.out, a.format)?;
    let mut side = a.side_info.as_ref().map(|p| (p.clone(), String::new()));
    for_each_chunk(profile, seed, a.frames, 1024, |start, frames| {
        for (i, (frame, info)) in frames.iter().enumerate() {
            writer.write(frame.bits())?;
            if let Some((_, text)) = side.as_mut() {
                let dark: Vec<usize> = (0..info.dark.len()).filter(|&k| info.dark.get(k)).collect();
                text.push_str(&format!(
                    "{{\"frame\":{},\"n\":{},\"dark\":{:?}}}\n",
                    start + i as u64,
                    info.n,
                    dark
                ));
            }
        }
        Ok(())
    })?;
    let meta = FrameDumpMeta {
        profile_hash: profile_hash(profile),
        seed,
        frame_count: a.frames,
        rows: profile.rows,
        cols: profile.cols,
        raw_bit_rate: profile.timing.raw_bit_rate(),
    };
    let meta = writer.finish(Some(meta))?;
    if let Some((path, text)) = side {
        write_text(&path, &text)?;
    }
    eprintln!("wrote {} frames ({} bits) to {}", a.frames, meta.bits, a.out.display());
    Ok(())
}

fn calibrate(mut profile: DeviceProfile, a: CalibrateArgs) -> AppResult<()> {
    let spec = match a.accounting {
        Accounting::Click => LambdaSpec::ClickProbability(a.target),
        Accounting::Ones => LambdaSpec::OnesFraction(a.target),
    };
    profile.lambda = resolve_lambda(&profile, &spec)?;
    let ones = expected_ones_fraction(&profile, profile.lambda, BiasAccounting::ExcludeHot);
    let all = expected_ones_fraction(&profile, profile.lambda, BiasAccounting::AllPixels);
    println!("lambda = {}", profile.lambda);
    println!("expected ones fraction: {ones:.6} (non-hot pixels), {all:.6} (all pixels)");
    if let Some(out) = &a.out {
        write_text(out, &format_profile(&profile))?;
    }
    Ok(())
}

fn certify_cmd(profile: &DeviceProfile, seed: u64, a: CertifyArgs) -> AppResult<()> {
    if !(a.epsilon_exp >= 0.0) {
        return Err(AppError::Config(format!("--epsilon-exp {} must be >= 0", a.epsilon_exp)));
    }
    let cfg = CertifyConfig {
        samples: a.samples,
        seed,
        epsilon_log2: -a.epsilon_exp,
        validate: !a.no_validate,
        oracle_trials: a.oracle_trials,
    };
    let report = certify(profile, &cfg)?;
    emit_json(a.out.as_deref(), &report)?;
    for c in &report.validation {
        eprintln!("{} {} (max z {:.2}, limit {:.2})", if c.passed { "ok  " } else { "FAIL" }, c.name, c.max_z, c.threshold);
    }
    let w = &report.certified;
    eprintln!(
        "eta = {}: H_min = {:.1} +- {:.1} bits/frame, {:.4} per non-hot bit, {:.4} per raw bit",
        w.params.eta, w.h_min_total, w.std_error_total, w.h_min_per_bit, w.h_min_per_raw_bit
    );
    if !report.validation_passed {
        return Err(AppError::Validation("entropy model disagrees with its oracle".into()));
    }
    match report.k_max() {
        Some(k) => {
            eprintln!("k_max = {k} per {BLOCK_BITS}-bit block at epsilon = 2^-{}", a.epsilon_exp);
            for (k, e) in &w.extraction.epsilon_log2_at {
                eprintln!("k = {k}: epsilon = 2^{e:.1}");
            }
            Ok(())
        }
        None => Err(max_k(w.h_min_per_raw_bit.clamp(0.0, 1.0), BLOCK_BITS as u32, -a.epsilon_exp)
            .err()
            .unwrap_or(spadqrng_core::Error::NoExtractableBits)
            .into()),
    }
}

fn extract(a: ExtractArgs) -> AppResult<()> {
    let matrix = read_matrix(&a.matrix)?;
    let config = ExtractorConfig::new(matrix, a.mode.into())?;
    let raw = read_bitstream(&a.input, a.input_format)?;
    let out = stream_extract(&config, &raw);
    write_bitstream(&a.out, &out.bits, a.format)?;
    eprintln!(
        "{} raw bits -> {} extracted bits ({} raw bits left in the read buffer)",
        raw.len(),
        out.bits.len(),
        out.buffered_bits
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct TestOutput {
    battery: TestReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    hamming: Option<HistogramReport>,
}

fn test(a: TestArgs) -> AppResult<()> {
    let bits = read_bitstream(&a.input, a.format)?;
    if a.sequence_len == 0 {
        return Err(AppError::Config("--sequence-len must be positive".into()));
    }
    let available = bits.len() / a.sequence_len;
    let count = a.sequences.unwrap_or(available);
    if count == 0 || count > available {
        return Err(AppError::Config(format!(
            "{} bits hold {available} sequences of {} bits, {count} requested",
            bits.len(),
            a.sequence_len
        )));
    }
    let seqs: Vec<BitStream> = (0..count).map(|i| bits.slice(i * a.sequence_len, a.sequence_len)).collect();
    let cfg = BatteryConfig {
        enforce_recommended_lengths: !a.relaxed,
        ..BatteryConfig::default()
    };
    let report = battery(&seqs, &cfg);
    let hamming = match a.hamming_p {
        Some(p) => Some(hamming_histogram(&bits, 8, p)?),
        None => None,
    };
    print!("{}", battery_summary(&report));
    if let Some(h) = &hamming {
        println!("hamming weight chi-square {:.3} on {} dof, P = {:.6}", h.chi_square, h.dof, h.p_value);
    }
    if let Some(csv) = &a.csv {
        write_text(csv, &battery_csv(&report))?;
        if let Some(h) = &hamming {
            let mut p = csv.as_os_str().to_owned();
            p.push(".hamming.csv");
            write_text(Path::new(&p), &histogram_csv(h))?;
        }
    }
    let passed = report.passed;
    let failing: Vec<String> = report.rows.iter().filter(|r| !r.passed).map(|r| r.name.clone()).collect();
    let output = TestOutput { battery: report, hamming };
    if let Some(out) = &a.out {
        write_json(out, &output)?;
    }
    if passed {
        Ok(())
    } else if failing.is_empty() {
        Err(AppError::BatteryFailed("no test could run".into()))
    } else {
        Err(AppError::BatteryFailed(failing.join(", ")))
    }
}

fn bench(seed: u64, a: BenchArgs) -> AppResult<()> {
    let mode: ExtractorMode = a.mode.into();
    let matrix = match &a.matrix {
        Some(p) => read_matrix(p)?,
        None => generate_matrix(mode.output_bits(), BLOCK_BITS, &mut SubstreamRng::seed_from_u64(seed))?,
    };
    let config = ExtractorConfig::new(matrix, mode)?;
    let report = bench_extract(&config, a.bits, a.seconds);
    eprintln!(
        "{mode}: {:.1} Mbit/s extracted, {:.1} Mbit/s raw consumed",
        report.output_rate / 1e6,
        report.raw_rate / 1e6
    );
    emit_json(a.out.as_deref(), &report)
}

fn matrix_gen(seed: u64, a: MatrixGenArgs) -> AppResult<()> {
    let k = ExtractorMode::from(a.mode).output_bits();
    let matrix = match &a.entropy {
        Some(p) => matrix_from_entropy(k, BLOCK_BITS, &read_bitstream(p, Format::Raw)?)?,
        None => generate_matrix(k, BLOCK_BITS, &mut SubstreamRng::seed_from_u64(seed))?,
    };
    write_matrix(&a.out, &matrix)
}

/// Parses arguments, runs, and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { crate::error::EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
