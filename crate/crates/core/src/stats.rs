//! Statistical validation: the randomness test battery, Hamming-weight
//! histograms and pixel correlation estimators.

pub mod nist;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use libm::sqrt;
use serde::{Deserialize, Serialize};

use crate::bits::{BitFrame, BitStream};
use crate::special::{binomial_pmf, igamc};
use crate::{Error, Result};

pub use nist::{
    aperiodic_templates, approximate_entropy, block_frequency, cumulative_sums, frequency, longest_run,
    non_overlapping_template, non_overlapping_templates_all, proportion_threshold, runs, serial, CusumMode,
};

/// Significance level of the individual tests.
pub const ALPHA: f64 = 0.01;
/// A test's P-values are uniform enough when the 10-bin chi-square P-value
/// reaches this.
pub const UNIFORMITY_ALPHA: f64 = 1e-4;

/// 10-bin histogram of P-values with its chi-square uniformity P-value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Uniformity {
    pub bins: [u64; 10],
    pub chi_square: f64,
    pub p_value: f64,
}

/// Bins P-values into tenths (1.0 goes into the last bin) and tests the
/// counts against a flat distribution.
pub fn pvalue_uniformity(pvalues: &[f64]) -> Result<Uniformity> {
    if pvalues.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut bins = [0u64; 10];
    for &p in pvalues {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("P-value {p} outside [0, 1]")));
        }
        bins[((p * 10.0) as usize).min(9)] += 1;
    }
    let expected = pvalues.len() as f64 / 10.0;
    let chi: f64 = bins
        .iter()
        .map(|&c| (c as f64 - expected) * (c as f64 - expected) / expected)
        .sum();
    Ok(Uniformity {
        bins,
        chi_square: chi,
        p_value: igamc(4.5, chi / 2.0),
    })
}

/// Tests run by the battery.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestKind {
    Frequency,
    BlockFrequency,
    CumulativeSums,
    Runs,
    LongestRun,
    NonOverlappingTemplate,
    ApproximateEntropy,
    Serial,
}

impl TestKind {
    pub const ALL: [TestKind; 8] = [
        TestKind::Frequency,
        TestKind::BlockFrequency,
        TestKind::CumulativeSums,
        TestKind::Runs,
        TestKind::LongestRun,
        TestKind::NonOverlappingTemplate,
        TestKind::ApproximateEntropy,
        TestKind::Serial,
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryConfig {
    pub alpha: f64,
    pub block_frequency_len: usize,
    pub serial_len: usize,
    pub approximate_entropy_len: usize,
    pub template_len: usize,
    pub template_blocks: usize,
    /// Skip tests whose recommended minimum input size is not met.
    pub enforce_recommended_lengths: bool,
    pub tests: Vec<TestKind>,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            alpha: ALPHA,
            block_frequency_len: 12_800,
            serial_len: 16,
            approximate_entropy_len: 10,
            template_len: 10,
            template_blocks: 8,
            enforce_recommended_lengths: true,
            tests: TestKind::ALL.to_vec(),
        }
    }
}

impl BatteryConfig {
    // NIST input-size recommendations.
    fn recommendation(&self, kind: TestKind, n: usize) -> Option<String> {
        let log2n = usize::BITS - 1 - n.max(1).leading_zeros();
        let short = |need: &str| Some(format!("sequence of {n} bits below recommended {need}"));
        match kind {
            TestKind::Frequency | TestKind::Runs | TestKind::CumulativeSums if n < 100 => short("100"),
            TestKind::LongestRun if n < 128 => short("128"),
            TestKind::BlockFrequency => {
                let m = self.block_frequency_len;
                if n < 100 || m < 20 || m * 100 <= n || n / m >= 100 {
                    Some(format!("block length {m} unsuitable for {n} bits (need M >= 20, M > n/100, N < 100)"))
                } else {
                    None
                }
            }
            TestKind::Serial if self.serial_len + 2 >= log2n as usize => {
                Some(format!("serial length {} needs m < log2(n) - 2 = {}", self.serial_len, log2n as i64 - 2))
            }
            TestKind::ApproximateEntropy if self.approximate_entropy_len + 5 >= log2n as usize => Some(format!(
                "approximate entropy length {} needs m < log2(n) - 5 = {}",
                self.approximate_entropy_len,
                log2n as i64 - 5
            )),
            TestKind::NonOverlappingTemplate => {
                let m = n / self.template_blocks.max(1);
                if self.template_blocks > 100 || m * 100 <= n || m < self.template_len {
                    Some(format!("{} blocks unsuitable for {n} bits", self.template_blocks))
                } else {
                    None
                }
            }
            _ => None,
        }
    }
}

/// One row of the battery summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestRow {
    pub name: String,
    pub pvalues: Vec<f64>,
    /// Sequences with P >= alpha. For a test family, the mean over members
    /// rounded down.
    pub pass_count: usize,
    pub sequences: usize,
    pub pass_threshold: usize,
    pub uniformity: Option<Uniformity>,
    pub passed: bool,
    pub skipped: Option<String>,
}

impl TestRow {
    fn skipped(name: &str, sequences: usize, threshold: usize, reason: String) -> Self {
        Self {
            name: name.to_string(),
            pvalues: Vec::new(),
            pass_count: 0,
            sequences,
            pass_threshold: threshold,
            uniformity: None,
            passed: true,
            skipped: Some(reason),
        }
    }

    fn from_pvalues(name: String, pvalues: Vec<f64>, alpha: f64, threshold: usize) -> Self {
        let pass_count = pvalues.iter().filter(|&&p| p >= alpha).count();
        let uniformity = pvalue_uniformity(&pvalues).ok();
        let passed = pass_count >= threshold && uniformity.as_ref().is_some_and(|u| u.p_value >= UNIFORMITY_ALPHA);
        Self {
            name,
            sequences: pvalues.len(),
            pvalues,
            pass_count,
            pass_threshold: threshold,
            uniformity,
            passed,
            skipped: None,
        }
    }

    /// P-value of the uniformity test, if it ran.
    pub fn uniformity_p(&self) -> Option<f64> {
        self.uniformity.as_ref().map(|u| u.p_value)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub sequences: usize,
    pub sequence_len: usize,
    pub alpha: f64,
    pub pass_threshold: usize,
    pub rows: Vec<TestRow>,
    /// Per-template rows behind the aggregated template row.
    pub template_rows: Vec<TestRow>,
    pub passed: bool,
}

impl TestReport {
    pub fn row(&self, name: &str) -> Option<&TestRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

fn run_one(kind: TestKind, bits: &BitStream, cfg: &BatteryConfig) -> Result<Vec<f64>> {
    Ok(match kind {
        TestKind::Frequency => vec![frequency(bits)?],
        TestKind::BlockFrequency => vec![block_frequency(bits, cfg.block_frequency_len)?],
        TestKind::CumulativeSums => vec![
            cumulative_sums(bits, CusumMode::Forward)?,
            cumulative_sums(bits, CusumMode::Reverse)?,
        ],
        TestKind::Runs => vec![runs(bits)?],
        TestKind::LongestRun => vec![longest_run(bits)?],
        TestKind::ApproximateEntropy => vec![approximate_entropy(bits, cfg.approximate_entropy_len)?],
        TestKind::Serial => {
            let (a, b) = serial(bits, cfg.serial_len)?;
            vec![a, b]
        }
        TestKind::NonOverlappingTemplate => non_overlapping_templates_all(bits, cfg.template_len, cfg.template_blocks)?
            .into_iter()
            .map(|(_, p)| p)
            .collect(),
    })
}

fn row_names(kind: TestKind, cfg: &BatteryConfig) -> Vec<String> {
    let names: &[&str] = match kind {
        TestKind::Frequency => &["Frequency"],
        TestKind::BlockFrequency => &["BlockFrequency"],
        TestKind::CumulativeSums => &["CumulativeSums1", "CumulativeSums2"],
        TestKind::Runs => &["Runs"],
        TestKind::LongestRun => &["LongestRun"],
        TestKind::ApproximateEntropy => &["ApproximateEntropy"],
        TestKind::Serial => &["Serial1", "Serial2"],
        TestKind::NonOverlappingTemplate => {
            return aperiodic_templates(cfg.template_len)
                .into_iter()
                .map(|t| format!("NonOverlappingTemplate[{:0w$b}]", t, w = cfg.template_len))
                .collect()
        }
    };
    names.iter().map(|s| s.to_string()).collect()
}

/// Runs the enabled tests on every sequence and applies the pass-proportion
/// and uniformity rules per test.
///
/// The template test yields one P-value per aperiodic template; its summary
/// row takes the mean pass count over templates and the uniformity of all
/// template P-values pooled, while the per-template rows are kept in
/// `template_rows`. Deterministic in the input bits.
pub fn battery(sequences: &[BitStream], cfg: &BatteryConfig) -> TestReport {
    let count = sequences.len();
    let len = sequences.iter().map(|s| s.len()).min().unwrap_or(0);
    let threshold = proportion_threshold(count, cfg.alpha);
    let mut rows = Vec::new();
    let mut template_rows = Vec::new();

    for &kind in &cfg.tests {
        let names = row_names(kind, cfg);
        let family = if kind == TestKind::NonOverlappingTemplate {
            "NonOverlappingTemplate"
        } else {
            ""
        };
        let skip = if count == 0 {
            Some("no sequences".to_string())
        } else if cfg.enforce_recommended_lengths {
            cfg.recommendation(kind, len)
        } else {
            None
        };
        let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(count); names.len()];
        let mut failure = skip;
        if failure.is_none() {
            for s in sequences {
                match run_one(kind, s, cfg) {
                    Ok(ps) => ps.into_iter().zip(columns.iter_mut()).for_each(|(p, c)| c.push(p)),
                    Err(e) => {
                        failure = Some(e.to_string());
                        break;
                    }
                }
            }
        }
        if let Some(reason) = failure {
            if family.is_empty() {
                rows.extend(names.iter().map(|n| TestRow::skipped(n, count, threshold, reason.clone())));
            } else {
                rows.push(TestRow::skipped(family, count, threshold, reason));
            }
            continue;
        }
        let member_rows: Vec<TestRow> = names
            .into_iter()
            .zip(columns)
            .map(|(name, ps)| TestRow::from_pvalues(name, ps, cfg.alpha, threshold))
            .collect();
        if family.is_empty() {
            rows.extend(member_rows);
        } else {
            let mean_pass =
                member_rows.iter().map(|r| r.pass_count).sum::<usize>() / member_rows.len().max(1);
            let pooled: Vec<f64> = member_rows.iter().flat_map(|r| r.pvalues.iter().copied()).collect();
            let uniformity = pvalue_uniformity(&pooled).ok();
            let passed = mean_pass >= threshold && uniformity.as_ref().is_some_and(|u| u.p_value >= UNIFORMITY_ALPHA);
            rows.push(TestRow {
                name: family.to_string(),
                pvalues: pooled,
                pass_count: mean_pass,
                sequences: count,
                pass_threshold: threshold,
                uniformity,
                passed,
                skipped: None,
            });
            template_rows = member_rows;
        }
    }
    let ran = rows.iter().any(|r| r.skipped.is_none());
    let passed = ran && rows.iter().all(|r| r.passed);
    TestReport {
        sequences: count,
        sequence_len: len,
        alpha: cfg.alpha,
        pass_threshold: threshold,
        rows,
        template_rows,
        passed,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramReport {
    pub width: usize,
    /// Words per Hamming weight `0..=width`.
    pub counts: Vec<u64>,
    pub words: u64,
    pub reference_p: f64,
    pub chi_square: f64,
    /// Degrees of freedom after pooling sparse bins.
    pub dof: usize,
    pub p_value: f64,
}

impl HistogramReport {
    /// Expected count per weight under the reference binomial.
    pub fn expected(&self) -> Vec<f64> {
        (0..=self.width)
            .map(|k| self.words as f64 * binomial_pmf(self.width as u64, k as u64, self.reference_p))
            .collect()
    }
}

/// Hamming weights of consecutive `width`-bit words (a partial tail word is
/// dropped), tested against `Binomial(width, reference_p)`. Bins with
/// expected count below 5 are pooled with their neighbours.
pub fn hamming_histogram(bits: &BitStream, width: usize, reference_p: f64) -> Result<HistogramReport> {
    if !(1..=64).contains(&width) {
        return Err(Error::InvalidParameter(format!("word width {width} outside 1..=64")));
    }
    if !(0.0..=1.0).contains(&reference_p) {
        return Err(Error::InvalidParameter(format!("reference probability {reference_p}")));
    }
    let words = bits.len() / width;
    let mut counts = vec![0u64; width + 1];
    for i in 0..words {
        counts[bits.read_bits(i * width, width).count_ones() as usize] += 1;
    }
    let mut report = HistogramReport {
        width,
        counts,
        words: words as u64,
        reference_p,
        chi_square: 0.0,
        dof: 0,
        p_value: 1.0,
    };
    let expected = report.expected();
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (&o, &e) in report.counts.iter().zip(&expected) {
        acc.0 += o as f64;
        acc.1 += e;
        if acc.1 >= 5.0 {
            pooled.push(acc);
            acc = (0.0, 0.0);
        }
    }
    match pooled.last_mut() {
        Some(last) => {
            last.0 += acc.0;
            last.1 += acc.1;
        }
        None => pooled.push(acc),
    }
    if pooled.len() >= 2 {
        report.chi_square = pooled
            .iter()
            .map(|&(o, e)| if e > 0.0 { (o - e) * (o - e) / e } else if o > 0.0 { f64::INFINITY } else { 0.0 })
            .sum();
        report.dof = pooled.len() - 1;
        report.p_value = igamc(report.dof as f64 / 2.0, report.chi_square / 2.0);
    }
    Ok(report)
}

/// Pearson correlation coefficient, or `Undefined` when either input has no
/// variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum Correlation {
    Defined(f64),
    Undefined,
}

impl Correlation {
    pub fn value(self) -> Option<f64> {
        match self {
            Correlation::Defined(v) => Some(v),
            Correlation::Undefined => None,
        }
    }
}

/// Pearson correlation of two equal-length bit series.
pub fn pearson_bits(x: &BitStream, y: &BitStream) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    let n = x.len() as f64;
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sx = x.count_ones() as f64;
    let sy = y.count_ones() as f64;
    let sxy: u64 = x.words().iter().zip(y.words()).map(|(a, b)| (a & b).count_ones() as u64).sum();
    let vx = n * sx - sx * sx;
    let vy = n * sy - sy * sy;
    if vx <= 0.0 || vy <= 0.0 {
        return Ok(Correlation::Undefined);
    }
    Ok(Correlation::Defined((n * sxy as f64 - sx * sy) / sqrt(vx * vy)))
}

/// Correlation of a series with itself shifted by `1..=max_lag`.
pub fn autocorrelation(series: &BitStream, max_lag: usize) -> Result<Vec<Correlation>> {
    if max_lag == 0 || max_lag >= series.len() {
        return Err(Error::InvalidParameter(format!(
            "lag {max_lag} needs a longer series than {} bits",
            series.len()
        )));
    }
    let n = series.len();
    (1..=max_lag)
        .map(|lag| pearson_bits(&series.slice(0, n - lag), &series.slice(lag, n - lag)))
        .collect()
}

/// Click history of every pixel in a rectangular region, one bit per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelSeries {
    rows: usize,
    cols: usize,
    frames: usize,
    series: Vec<BitStream>,
}

impl PixelSeries {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            frames: 0,
            series: vec![BitStream::new(); rows * cols],
        }
    }

    /// Appends one frame, cropped to the region starting at `origin`.
    pub fn push_frame(&mut self, frame: &BitFrame, origin: (usize, usize)) -> Result<()> {
        if origin.0 + self.rows > frame.rows() || origin.1 + self.cols > frame.cols() {
            return Err(Error::DimensionMismatch {
                expected: (origin.0 + self.rows) * (origin.1 + self.cols),
                found: frame.len(),
            });
        }
        for r in 0..self.rows {
            for c in 0..self.cols {
                self.series[r * self.cols + c].push(frame.pixel(origin.0 + r, origin.1 + c));
            }
        }
        self.frames += 1;
        Ok(())
    }

    pub fn from_frames<'a, I: IntoIterator<Item = &'a BitFrame>>(frames: I, origin: (usize, usize), rows: usize, cols: usize) -> Result<Self> {
        let mut s = Self::new(rows, cols);
        for f in frames {
            s.push_frame(f, origin)?;
        }
        Ok(s)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn pixel(&self, row: usize, col: usize) -> &BitStream {
        &self.series[row * self.cols + col]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMap {
    pub center: (usize, usize),
    /// Requested window side.
    pub window: usize,
    /// `(d_row, d_col, correlation)` for every neighbour inside the array,
    /// the centre included.
    pub entries: Vec<(i64, i64, Correlation)>,
    pub clipped: bool,
    pub notice: Option<String>,
    pub frames: usize,
}

impl CorrelationMap {
    pub fn get(&self, d_row: i64, d_col: i64) -> Option<Correlation> {
        self.entries.iter().find(|e| e.0 == d_row && e.1 == d_col).map(|e| e.2)
    }
}

/// Correlation across frames between the centre pixel and each pixel of the
/// surrounding `window x window` square. Parts of the window outside the
/// array are dropped and noted.
pub fn crosscorrelation_map(series: &PixelSeries, center: (usize, usize), window: usize) -> Result<CorrelationMap> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("window side {window} must be odd")));
    }
    if center.0 >= series.rows || center.1 >= series.cols {
        return Err(Error::InvalidParameter(format!("centre {center:?} outside the array")));
    }
    let half = (window / 2) as i64;
    let mut entries = Vec::new();
    let mut clipped = false;
    let c = series.pixel(center.0, center.1);
    for dr in -half..=half {
        for dc in -half..=half {
            let r = center.0 as i64 + dr;
            let col = center.1 as i64 + dc;
            if r < 0 || col < 0 || r >= series.rows as i64 || col >= series.cols as i64 {
                clipped = true;
                continue;
            }
            entries.push((dr, dc, pearson_bits(c, series.pixel(r as usize, col as usize))?));
        }
    }
    let notice = clipped.then(|| {
        format!(
            "{window}x{window} window around {center:?} clipped to the {}x{} array ({} of {} pixels kept)",
            series.rows,
            series.cols,
            entries.len(),
            window * window
        )
    });
    Ok(CorrelationMap {
        center,
        window,
        entries,
        clipped,
        notice,
        frames: series.frames,
    })
}

/// Mean correlation over all horizontally and vertically adjacent pairs,
/// with its sampling error under independence, `1 / sqrt(frames * pairs)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PooledCorrelation {
    pub pairs: usize,
    pub mean: f64,
    pub std_error: f64,
}

pub fn adjacent_pair_correlation(series: &PixelSeries) -> Result<PooledCorrelation> {
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for r in 0..series.rows {
        for c in 0..series.cols {
            let here = series.pixel(r, c);
            for (nr, nc) in [(r, c + 1), (r + 1, c)] {
                if nr < series.rows && nc < series.cols {
                    if let Correlation::Defined(v) = pearson_bits(here, series.pixel(nr, nc))? {
                        sum += v;
                        pairs += 1;
                    }
                }
            }
        }
    }
    if pairs == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(PooledCorrelation {
        pairs,
        mean: sum / pairs as f64,
        std_error: 1.0 / sqrt(series.frames as f64 * pairs as f64),
    })
}
